//! Reports in two formats: line-oriented text for people and versioned JSON
//! for tools. The JSON form parses back to an identical [`Report`].

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classify::{justifying_paths, EffectClass, EffectClassification};
use crate::error::{Error, Result};
use crate::graph::{CausalGraph, ValidationReport};
use crate::infer::{format_hypothesis, Identification, Scoring};
use crate::lab::{ExperimentResult, InterferenceExperiment, PatternOutcome, Plan};
use crate::observe::{ObservationalEntry, ObservationalOutcome};
use crate::scm::Provenance;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Human,
    Machine,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjustment: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub observational: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSection {
    pub valid: bool,
    pub variables: usize,
    pub edges: usize,
    pub violations: ValidationReport,
}

impl ValidationSection {
    pub fn of_graph(graph: &CausalGraph) -> Self {
        ValidationSection {
            valid: true,
            variables: graph.len(),
            edges: graph.edge_count(),
            violations: ValidationReport::default(),
        }
    }

    pub fn failed(report: ValidationReport) -> Self {
        ValidationSection {
            valid: false,
            variables: 0,
            edges: 0,
            violations: report,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedVariable {
    pub variable: String,
    pub class: EffectClass,
    pub paths: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSection {
    pub action: String,
    pub hypothesized: String,
    pub mediating: BTreeSet<String>,
    pub further: BTreeSet<String>,
    pub parallel: BTreeSet<String>,
    /// Every variable in declaration order.
    pub variables: Vec<ClassifiedVariable>,
}

impl ClassificationSection {
    pub fn build(graph: &CausalGraph, c: &EffectClassification) -> Result<Self> {
        let variables = graph
            .names()
            .map(|v| {
                Ok(ClassifiedVariable {
                    variable: v.to_string(),
                    class: c.class_of(v),
                    paths: justifying_paths(graph, c, v)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ClassificationSection {
            action: c.action.clone(),
            hypothesized: c.hypothesized.clone(),
            mediating: c.mediating.clone(),
            further: c.further.clone(),
            parallel: c.parallel.clone(),
            variables,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentEntry {
    pub experiment: InterferenceExperiment,
    pub result: ExperimentResult,
    pub pattern: PatternOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSection {
    pub rows: usize,
    pub output: String,
    pub blocks: Vec<Provenance>,
    /// Row count per regime label in first-seen order.
    pub regimes: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationSection {
    pub arms: usize,
    pub adjustment: Vec<String>,
    pub scoring: Scoring,
    pub identification: Identification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiments: Option<Vec<ExperimentEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observational: Option<Vec<ObservationalEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identification: Option<IdentificationSection>,
}

impl Report {
    pub fn new(config: RunConfig) -> Self {
        Report {
            format_version: FORMAT_VERSION,
            config,
            validation: None,
            classification: None,
            plan: None,
            simulation: None,
            experiments: None,
            observational: None,
            identification: None,
        }
    }
}

pub fn emit_report(report: &Report, format: Format) -> String {
    match format {
        Format::Machine => {
            let mut s = serde_json::to_string_pretty(report).expect("report values are finite");
            s.push('\n');
            s
        }
        Format::Human => human(report),
    }
}

pub fn parse_machine_report(text: &str) -> Result<Report> {
    let report: Report =
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("bad report: {e}")))?;
    if report.format_version != FORMAT_VERSION {
        return Err(Error::InvalidArgument(format!(
            "unsupported report format_version {}",
            report.format_version
        )));
    }
    Ok(report)
}

fn fmt_set(set: &BTreeSet<String>) -> String {
    format!("{{{}}}", set.iter().cloned().collect::<Vec<_>>().join(", "))
}

fn fmt_assignment(a: &crate::graph::Assignment) -> String {
    a.iter()
        .map(|(k, v)| format!("{k}={}", *v as u8))
        .collect::<Vec<_>>()
        .join(" ")
}

fn fmt_pattern(p: &PatternOutcome) -> String {
    format!(
        "pattern {} [{}] count={} threshold={} {}",
        p.mode,
        fmt_assignment(&p.pattern),
        p.count,
        p.threshold,
        if p.passed { "pass" } else { "fail" }
    )
}

fn human(r: &Report) -> String {
    let mut o = String::new();
    let c = &r.config;
    let _ = writeln!(o, "format_version {}", r.format_version);
    let _ = writeln!(o, "command {}", c.command);
    for (k, v) in [
        ("graph", c.graph.clone()),
        ("data", c.data.clone()),
        ("seed", c.seed.map(|x| x.to_string())),
        ("n", c.n.map(|x| x.to_string())),
        ("alpha", c.alpha.map(|x| x.to_string())),
        ("hypothesis", c.hypothesis.clone()),
        ("max_size", c.max_size.map(|x| x.to_string())),
        ("adjustment", c.adjustment.as_ref().map(|a| format!("{{{}}}", a.join(", ")))),
        ("rng", c.rng.clone()),
    ] {
        if let Some(v) = v {
            let _ = writeln!(o, "{k} {v}");
        }
    }
    if c.observational {
        let _ = writeln!(o, "observational yes");
    }

    if let Some(v) = &r.validation {
        o.push('\n');
        if v.valid {
            let _ = writeln!(o, "validation ok: {} variables, {} edges", v.variables, v.edges);
        } else {
            let _ = writeln!(o, "validation failed: {} violation(s)", v.violations.violations.len());
            for x in &v.violations.violations {
                let _ = writeln!(o, "  {x}");
            }
        }
    }

    if let Some(cl) = &r.classification {
        o.push('\n');
        let _ = writeln!(o, "classification action={} hypothesized={}", cl.action, cl.hypothesized);
        let _ = writeln!(o, "  mediating {}", fmt_set(&cl.mediating));
        let _ = writeln!(o, "  further {}", fmt_set(&cl.further));
        let _ = writeln!(o, "  parallel {}", fmt_set(&cl.parallel));
        for v in &cl.variables {
            let paths = v.paths.iter().map(|p| p.join(" -> ")).collect::<Vec<_>>().join("; ");
            let _ = writeln!(o, "  {}: {}{}", v.variable, v.class, if paths.is_empty() { String::new() } else { format!(" via {paths}") });
        }
    }

    if let Some(p) = &r.plan {
        o.push('\n');
        let _ = writeln!(o, "plan action={} hypothesized={}", p.action, p.hypothesized);
        for e in &p.experiments {
            let _ = writeln!(
                o,
                "  experiment {} lever {} ({}) {} [{}]",
                e.target,
                e.lever,
                e.rationale,
                e.mode,
                fmt_assignment(&e.expected_pattern)
            );
        }
        for u in &p.unleverable {
            let _ = writeln!(o, "  unleverable {}: {}", u.target, u.reason);
        }
    }

    if let Some(s) = &r.simulation {
        o.push('\n');
        let _ = writeln!(o, "simulation {} rows -> {}", s.rows, s.output);
        for (label, n) in &s.regimes {
            let _ = writeln!(o, "  regime {label}: {n}");
        }
        for b in &s.blocks {
            let _ = writeln!(o, "  block {} seed={} stream={} rows={}", b.regime, b.seed, b.stream, b.rows);
        }
    }

    if let Some(es) = &r.experiments {
        o.push('\n');
        let _ = writeln!(o, "experiments {}", es.len());
        for e in es {
            let x = &e.result;
            let _ = writeln!(
                o,
                "  {} lever {}: control {}/{} treated {}/{} z={:.4} p={:.4e} {}",
                e.experiment.target,
                e.experiment.lever,
                x.control_acts,
                x.control_n,
                x.treated_acts,
                x.treated_n,
                x.z_statistic,
                x.p_value,
                x.verdict
            );
            let _ = writeln!(o, "    {}", fmt_pattern(&e.pattern));
        }
    }

    if let Some(es) = &r.observational {
        o.push('\n');
        let _ = writeln!(o, "observational {}", es.len());
        for e in es {
            let _ = write!(o, "  {} lever {}: ", e.experiment.target, e.experiment.lever);
            match &e.outcome {
                ObservationalOutcome::NoData { reason } => {
                    let _ = writeln!(o, "no data ({reason})");
                }
                ObservationalOutcome::Analyzed {
                    comparison,
                    verdict,
                    patterns,
                } => {
                    let _ = writeln!(
                        o,
                        "difference={:.4} se={:.4} p={:.4e} {}",
                        comparison.pooled_difference, comparison.pooled_se, comparison.pooled_p, verdict
                    );
                    for s in &comparison.strata {
                        let _ = writeln!(
                            o,
                            "    stratum [{}] control {}/{} treated {}/{} weight={:.4}{}",
                            fmt_assignment(&s.key),
                            s.control_acts,
                            s.control_n,
                            s.treated_acts,
                            s.treated_n,
                            s.weight,
                            if s.small { " small" } else { "" }
                        );
                    }
                    if comparison.dropped_empty_cells {
                        let _ = writeln!(o, "    warning: strata with an empty arm were dropped");
                    }
                    for p in patterns {
                        let _ = writeln!(o, "    {}", fmt_pattern(p));
                    }
                }
            }
            if e.potentially_confounded() {
                let _ = writeln!(
                    o,
                    "    potentially confounded: adjustment lacks {{{}}}",
                    e.missing_adjustment.join(", ")
                );
            }
        }
    }

    if let Some(id) = &r.identification {
        o.push('\n');
        let _ = writeln!(
            o,
            "identification {} (arms={} deviance={:.4} fit_p={:.4e}{})",
            id.identification,
            id.arms,
            id.scoring.deviance,
            id.scoring.fit_p,
            if id.scoring.misfit { " misfit" } else { "" }
        );
        for s in &id.scoring.scores {
            let _ = writeln!(
                o,
                "  {} ll={:.4} {}",
                format_hypothesis(&s.hypothesis),
                s.log_likelihood,
                s.verdict
            );
        }
    }
    o
}
