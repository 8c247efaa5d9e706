//! Graph-spec documents.
//!
//! ```text
//! [variables]
//! var be_fit | lose_weight protein_diet
//! cpt 00 0
//! cpt 01 0
//! cpt 10 0
//! cpt 11 1
//!
//! [tagging]
//! action practice
//! intend be_fit 1
//! p_act 0.8
//! modifier age 1 0.5
//!
//! [levers]
//! lever win_medals enroll 0
//! ```
//!
//! CPT keys list parent values in declaration order (`-` for no parents).
//! `#` starts a comment. Unknown sections and keys are errors.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::agent::{AgentPolicy, CauseModifier, DEFAULT_P_ACT, DEFAULT_P_BASE, DEFAULT_THETA};
use crate::error::{Error, Result};
use crate::graph::{check_intentions, CausalGraph, Intention, Tagging, Variable};
use crate::lab::{Lever, LeverMap};

#[derive(Debug, Clone, PartialEq)]
pub struct TaggingBlock {
    pub action: String,
    pub intention: BTreeSet<Intention>,
    pub p_act: f64,
    pub p_base: f64,
    pub theta: f64,
    pub modifiers: Vec<CauseModifier>,
}

impl TaggingBlock {
    pub fn tagging(&self) -> Tagging {
        Tagging::new(self.action.clone(), self.intention.iter().cloned())
    }

    pub fn policy(&self) -> AgentPolicy {
        AgentPolicy {
            intention: self.intention.clone(),
            p_act: self.p_act,
            p_base: self.p_base,
            theta: self.theta,
            cause_modifiers: self.modifiers.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    pub graph: CausalGraph,
    pub tagging: Option<TaggingBlock>,
    pub levers: LeverMap,
}

impl GraphSpec {
    pub fn require_tagging(&self) -> Result<&TaggingBlock> {
        self.tagging
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("the graph spec has no [tagging] block".into()))
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Variables,
    Tagging,
    Levers,
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        message: message.into(),
    }
}

fn parse_bit(line: usize, s: &str) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(syntax(line, format!("expected 0 or 1, found `{s}`"))),
    }
}

fn parse_f64(line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| syntax(line, format!("expected a number, found `{s}`")))
}

fn arity(line: usize, key: &str, fields: &[&str], n: usize) -> Result<()> {
    if fields.len() != n {
        return Err(syntax(
            line,
            format!("`{key}` takes {n} argument(s), found {}", fields.len()),
        ));
    }
    Ok(())
}

struct PendingVar {
    name: String,
    parents: Vec<String>,
    rows: Vec<Option<f64>>,
    line: usize,
}

impl PendingVar {
    fn finish(self) -> Variable {
        // Missing rows shorten the table so validation reports them.
        Variable {
            name: self.name,
            parents: self.parents,
            cpt: self.rows.into_iter().flatten().collect(),
        }
    }
}

pub fn parse_graph_spec(text: &str) -> Result<GraphSpec> {
    let mut section = Section::None;
    let mut seen_sections = Vec::new();
    let mut vars: Vec<PendingVar> = Vec::new();

    let mut action: Option<(usize, String)> = None;
    let mut intention: Vec<(usize, Intention)> = Vec::new();
    let mut p_act = None;
    let mut p_base = None;
    let mut theta = None;
    let mut modifiers: Vec<(usize, CauseModifier)> = Vec::new();
    let mut levers: Vec<(usize, String, Lever)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| syntax(line, "unterminated section header"))?;
            section = match name.trim() {
                "variables" => Section::Variables,
                "tagging" => Section::Tagging,
                "levers" => Section::Levers,
                other => return Err(syntax(line, format!("unknown section `[{other}]`"))),
            };
            if seen_sections.contains(&name.trim().to_string()) {
                return Err(syntax(line, format!("section `[{}]` repeated", name.trim())));
            }
            seen_sections.push(name.trim().to_string());
            continue;
        }
        let mut words = content.split_whitespace();
        let key = words.next().unwrap_or_default();
        let fields: Vec<&str> = words.collect();
        match (section, key) {
            (Section::None, _) => return Err(syntax(line, "content before the first section header")),
            (Section::Variables, "var") => {
                let (name, parents) = match fields.iter().position(|&f| f == "|") {
                    Some(bar) => (&fields[..bar], &fields[bar + 1..]),
                    None => (&fields[..], &[][..]),
                };
                if name.len() != 1 {
                    return Err(syntax(line, "`var` takes one name, optionally followed by `| parents`"));
                }
                if fields.contains(&"|") && parents.is_empty() {
                    return Err(syntax(line, "`|` must be followed by at least one parent"));
                }
                if parents.len() > 30 {
                    return Err(syntax(line, "too many parents"));
                }
                vars.push(PendingVar {
                    name: name[0].to_string(),
                    parents: parents.iter().map(|s| s.to_string()).collect(),
                    rows: vec![None; 1 << parents.len()],
                    line,
                });
            }
            (Section::Variables, "cpt") => {
                arity(line, key, &fields, 2)?;
                let var = vars
                    .last_mut()
                    .ok_or_else(|| syntax(line, "`cpt` before any `var`"))?;
                let k = var.parents.len();
                let row = if k == 0 {
                    if fields[0] != "-" {
                        return Err(syntax(line, format!("`{}` has no parents; use `-` as the key", var.name)));
                    }
                    0
                } else {
                    if fields[0].len() != k {
                        return Err(syntax(
                            line,
                            format!("CPT key `{}` must have {k} digit(s) for `{}`", fields[0], var.name),
                        ));
                    }
                    let mut row = 0usize;
                    for c in fields[0].chars() {
                        row = (row << 1)
                            | match c {
                                '0' => 0,
                                '1' => 1,
                                _ => return Err(syntax(line, format!("bad CPT key `{}`", fields[0]))),
                            };
                    }
                    row
                };
                if var.rows[row].is_some() {
                    return Err(syntax(line, format!("CPT row `{}` repeated for `{}`", fields[0], var.name)));
                }
                var.rows[row] = Some(parse_f64(line, fields[1])?);
            }
            (Section::Tagging, "action") => {
                arity(line, key, &fields, 1)?;
                if action.is_some() {
                    return Err(syntax(line, "`action` repeated"));
                }
                action = Some((line, fields[0].to_string()));
            }
            (Section::Tagging, "intend") => {
                arity(line, key, &fields, 2)?;
                intention.push((line, Intention::new(fields[0], parse_bit(line, fields[1])?)));
            }
            (Section::Tagging, "p_act" | "p_base" | "theta") => {
                arity(line, key, &fields, 1)?;
                let slot = match key {
                    "p_act" => &mut p_act,
                    "p_base" => &mut p_base,
                    _ => &mut theta,
                };
                if slot.is_some() {
                    return Err(syntax(line, format!("`{key}` repeated")));
                }
                *slot = Some(parse_f64(line, fields[0])?);
            }
            (Section::Tagging, "modifier") => {
                arity(line, key, &fields, 3)?;
                modifiers.push((
                    line,
                    CauseModifier {
                        variable: fields[0].to_string(),
                        value: parse_bit(line, fields[1])?,
                        factor: parse_f64(line, fields[2])?,
                    },
                ));
            }
            (Section::Levers, "lever") => {
                arity(line, key, &fields, 3)?;
                levers.push((
                    line,
                    fields[0].to_string(),
                    Lever::new(fields[1], parse_bit(line, fields[2])?),
                ));
            }
            (_, other) => return Err(syntax(line, format!("unknown key `{other}`"))),
        }
    }

    let mut names = BTreeSet::new();
    for v in &vars {
        if !names.insert(v.name.clone()) {
            // CausalGraph::new reports this too; keep the line number here.
            return Err(syntax(v.line, format!("variable `{}` declared twice", v.name)));
        }
    }
    let graph = CausalGraph::new(vars.into_iter().map(PendingVar::finish).collect())?;

    let tagging = match action {
        None => {
            if let Some((line, _)) = intention.first() {
                return Err(syntax(*line, "`intend` without `action`"));
            }
            if p_act.is_some() || p_base.is_some() || theta.is_some() || !modifiers.is_empty() {
                return Err(Error::InvalidArgument("policy parameters given without `action`".into()));
            }
            None
        }
        Some((_, action)) => {
            let block = TaggingBlock {
                action,
                intention: intention.iter().map(|(_, i)| i.clone()).collect(),
                p_act: p_act.unwrap_or(DEFAULT_P_ACT),
                p_base: p_base.unwrap_or(DEFAULT_P_BASE),
                theta: theta.unwrap_or(DEFAULT_THETA),
                modifiers: modifiers.into_iter().map(|(_, m)| m).collect(),
            };
            check_intentions(&graph, &block.action, &block.intention)?;
            let policy = block.policy();
            policy.validate()?;
            crate::agent::bind_agent(&graph, &block.action, policy)?;
            Some(block)
        }
    };

    let mut lever_map = LeverMap::new();
    for (line, target, lever) in levers {
        graph.index_of(&target)?;
        graph.index_of(&lever.variable)?;
        if lever.variable != target && !graph.variable(&target)?.parents.contains(&lever.variable) {
            return Err(Error::InvalidLever {
                target,
                lever: lever.variable,
                reason: "lever must be the target or one of its parents".into(),
            });
        }
        if lever_map.insert(target.clone(), lever).is_some() {
            return Err(syntax(line, format!("second lever for `{target}`")));
        }
    }

    Ok(GraphSpec {
        graph,
        tagging,
        levers: lever_map,
    })
}

/// Canonical text form: declaration order, every CPT row, defaults written out.
pub fn serialize_graph_spec(spec: &GraphSpec) -> String {
    let mut out = String::from("[variables]\n");
    for v in spec.graph.variables() {
        if v.parents.is_empty() {
            let _ = writeln!(out, "var {}", v.name);
            let _ = writeln!(out, "cpt - {}", v.cpt[0]);
        } else {
            let _ = writeln!(out, "var {} | {}", v.name, v.parents.join(" "));
            let k = v.parents.len();
            for (row, p) in v.cpt.iter().enumerate() {
                let _ = writeln!(out, "cpt {:0width$b} {}", row, p, width = k);
            }
        }
    }
    if let Some(t) = &spec.tagging {
        out.push_str("\n[tagging]\n");
        let _ = writeln!(out, "action {}", t.action);
        for i in &t.intention {
            let _ = writeln!(out, "intend {} {}", i.variable, i.target as u8);
        }
        let _ = writeln!(out, "p_act {}", t.p_act);
        let _ = writeln!(out, "p_base {}", t.p_base);
        let _ = writeln!(out, "theta {}", t.theta);
        for m in &t.modifiers {
            let _ = writeln!(out, "modifier {} {} {}", m.variable, m.value as u8, m.factor);
        }
    }
    if !spec.levers.is_empty() {
        out.push_str("\n[levers]\n");
        for (target, lever) in &spec.levers {
            let _ = writeln!(out, "lever {} {} {}", target, lever.variable, lever.value as u8);
        }
    }
    out
}
