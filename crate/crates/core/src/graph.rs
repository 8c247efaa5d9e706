//! Causal DAGs over binary variables.
//!
//! A [`CausalGraph`] is a list of [`Variable`]s, each carrying its parent
//! list and a conditional probability table giving `P(var = 1)` for every
//! assignment of its parents. Edges are implied by the parent lists.
//!
//! CPT rows are indexed by reading the parent values as a binary number in
//! declared parent order, first parent most significant: for parents
//! `[a, b]` the rows are `00, 01, 10, 11`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partial assignment of binary values to named variables.
pub type Assignment = BTreeMap<String, bool>;

/// Column name reserved for the regime label in datasets.
pub const REGIME_COLUMN: &str = "regime";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub parents: Vec<String>,
    /// `P(name = 1 | parents)` per parent assignment, see module docs for row order.
    pub cpt: Vec<f64>,
}

impl Variable {
    pub fn new(name: impl Into<String>, parents: &[&str], cpt: Vec<f64>) -> Self {
        Variable {
            name: name.into(),
            parents: parents.iter().map(|p| p.to_string()).collect(),
            cpt,
        }
    }

    /// A parentless variable with `P(name = 1) = p`.
    pub fn root(name: impl Into<String>, p: f64) -> Self {
        Variable {
            name: name.into(),
            parents: Vec::new(),
            cpt: vec![p],
        }
    }

    /// A variable whose value is a fixed boolean function of its parents.
    pub fn deterministic(
        name: impl Into<String>,
        parents: &[&str],
        mechanism: impl Fn(&[bool]) -> bool,
    ) -> Self {
        let k = parents.len();
        let cpt = (0..1usize << k)
            .map(|row| if mechanism(&row_values(row, k)) { 1.0 } else { 0.0 })
            .collect();
        Variable::new(name, parents, cpt)
    }

    /// `P(self = 1)` for the given parent values (declared order).
    pub fn p_true(&self, parent_values: &[bool]) -> f64 {
        self.cpt[row_index(parent_values)]
    }
}

/// CPT row index of a parent assignment, first parent most significant.
pub fn row_index(values: &[bool]) -> usize {
    values.iter().fold(0, |acc, &v| (acc << 1) | v as usize)
}

/// Inverse of [`row_index`] for `k` parents.
pub fn row_values(row: usize, k: usize) -> Vec<bool> {
    (0..k).map(|i| (row >> (k - 1 - i)) & 1 == 1).collect()
}

/// One broken graph invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoVariables,
    InvalidName { name: String },
    DuplicateVariable { name: String },
    UnknownParent { variable: String, parent: String },
    DuplicateParent { variable: String, parent: String },
    SelfParent { variable: String },
    IncompleteCpt { variable: String, expected: usize, found: usize },
    ProbabilityOutOfRange { variable: String, row: usize, value: f64 },
    Cycle { members: Vec<String> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoVariables => write!(f, "no variables declared"),
            Violation::InvalidName { name } => write!(f, "invalid variable name `{name}`"),
            Violation::DuplicateVariable { name } => write!(f, "duplicate variable `{name}`"),
            Violation::UnknownParent { variable, parent } => {
                write!(f, "unknown parent `{parent}` of `{variable}`")
            }
            Violation::DuplicateParent { variable, parent } => {
                write!(f, "parent `{parent}` listed twice for `{variable}`")
            }
            Violation::SelfParent { variable } => write!(f, "`{variable}` lists itself as a parent"),
            Violation::IncompleteCpt {
                variable,
                expected,
                found,
            } => write!(
                f,
                "incomplete CPT for `{variable}`: expected {expected} rows, found {found}"
            ),
            Violation::ProbabilityOutOfRange {
                variable,
                row,
                value,
            } => write!(f, "probability {value} out of [0,1] in row {row} of `{variable}`"),
            Violation::Cycle { members } => write!(f, "cycle: {}", members.join(" -> ")),
        }
    }
}

/// Every violation found in a variable list; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// Variable names must be usable as CSV headers and regime-label keys.
pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && name != REGIME_COLUMN
}

/// Collect every invariant violation in `variables`.
pub fn validate(variables: &[Variable]) -> ValidationReport {
    let mut violations = Vec::new();
    if variables.is_empty() {
        violations.push(Violation::NoVariables);
        return ValidationReport { violations };
    }

    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, v) in variables.iter().enumerate() {
        if !is_valid_name(&v.name) {
            violations.push(Violation::InvalidName {
                name: v.name.clone(),
            });
        }
        if index.insert(v.name.as_str(), i).is_some() {
            violations.push(Violation::DuplicateVariable {
                name: v.name.clone(),
            });
        }
    }

    for v in variables {
        let mut seen = BTreeSet::new();
        for p in &v.parents {
            if p == &v.name {
                violations.push(Violation::SelfParent {
                    variable: v.name.clone(),
                });
            } else if !index.contains_key(p.as_str()) {
                violations.push(Violation::UnknownParent {
                    variable: v.name.clone(),
                    parent: p.clone(),
                });
            }
            if !seen.insert(p) {
                violations.push(Violation::DuplicateParent {
                    variable: v.name.clone(),
                    parent: p.clone(),
                });
            }
        }
        let expected = 1usize.checked_shl(v.parents.len() as u32).unwrap_or(usize::MAX);
        if v.cpt.len() != expected {
            violations.push(Violation::IncompleteCpt {
                variable: v.name.clone(),
                expected,
                found: v.cpt.len(),
            });
        }
        for (row, &p) in v.cpt.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                violations.push(Violation::ProbabilityOutOfRange {
                    variable: v.name.clone(),
                    row,
                    value: p,
                });
            }
        }
    }

    // Cycle search over resolvable, non-self edges only.
    let n = variables.len();
    let first: Vec<usize> = variables
        .iter()
        .map(|v| index[v.name.as_str()])
        .collect();
    let parents: Vec<Vec<usize>> = variables
        .iter()
        .map(|v| {
            v.parents
                .iter()
                .filter(|p| *p != &v.name)
                .filter_map(|p| index.get(p.as_str()).copied())
                .collect()
        })
        .collect();
    for cycle in find_cycles(n, &parents, &first) {
        violations.push(Violation::Cycle {
            members: cycle.iter().map(|&i| variables[i].name.clone()).collect(),
        });
    }

    ValidationReport { violations }
}

/// One representative cycle per strongly tangled region left over by Kahn's algorithm.
fn find_cycles(n: usize, parents: &[Vec<usize>], canonical: &[usize]) -> Vec<Vec<usize>> {
    let mut indegree = vec![0usize; n];
    let mut children = vec![Vec::new(); n];
    for (v, ps) in parents.iter().enumerate() {
        if canonical[v] != v {
            continue;
        }
        for &p in ps {
            indegree[v] += 1;
            children[p].push(v);
        }
    }
    let mut queue: VecDeque<usize> = (0..n)
        .filter(|&v| canonical[v] == v && indegree[v] == 0)
        .collect();
    let mut removed = vec![false; n];
    while let Some(v) = queue.pop_front() {
        removed[v] = true;
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                queue.push_back(c);
            }
        }
    }

    let mut cycles = Vec::new();
    let mut reported = vec![false; n];
    for start in 0..n {
        if removed[start] || reported[start] || canonical[start] != start {
            continue;
        }
        // Every remaining node has a remaining parent; walk parents until a repeat.
        let mut pos: HashMap<usize, usize> = HashMap::new();
        let mut walk = Vec::new();
        let mut cur = start;
        while !pos.contains_key(&cur) {
            pos.insert(cur, walk.len());
            walk.push(cur);
            cur = *parents[cur]
                .iter()
                .find(|&&p| !removed[p])
                .expect("node left by Kahn's algorithm has a remaining parent");
        }
        let mut cycle: Vec<usize> = walk[pos[&cur]..].to_vec();
        // Walked against edge direction; present it along edges, smallest index first.
        cycle.reverse();
        let min_at = cycle
            .iter()
            .enumerate()
            .min_by_key(|(_, &v)| v)
            .map(|(i, _)| i)
            .unwrap_or(0);
        cycle.rotate_left(min_at);
        if cycle.iter().any(|&v| reported[v]) {
            continue;
        }
        for &v in &cycle {
            reported[v] = true;
        }
        cycles.push(cycle);
    }
    cycles
}

/// A validated causal DAG. Immutable once built.
#[derive(Debug, Clone)]
pub struct CausalGraph {
    variables: Vec<Variable>,
    index: HashMap<String, usize>,
    parent_idx: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl PartialEq for CausalGraph {
    fn eq(&self, other: &Self) -> bool {
        self.variables == other.variables
    }
}

impl CausalGraph {
    pub fn new(variables: Vec<Variable>) -> Result<Self> {
        let report = validate(&variables);
        if !report.is_valid() {
            return Err(Error::InvalidGraph(report));
        }
        let index: HashMap<String, usize> = variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.clone(), i))
            .collect();
        let parent_idx: Vec<Vec<usize>> = variables
            .iter()
            .map(|v| v.parents.iter().map(|p| index[p]).collect())
            .collect();
        let mut children = vec![Vec::new(); variables.len()];
        for (v, ps) in parent_idx.iter().enumerate() {
            for &p in ps {
                children[p].push(v);
            }
        }
        let topo = topological_order(&parent_idx, &children);
        Ok(CausalGraph {
            variables,
            index,
            parent_idx,
            children,
            topo,
        })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn into_variables(self) -> Vec<Variable> {
        self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.variables.iter().map(|v| v.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn variable(&self, name: &str) -> Result<&Variable> {
        Ok(&self.variables[self.index_of(name)?])
    }

    pub fn name(&self, index: usize) -> &str {
        &self.variables[index].name
    }

    pub fn parent_indices(&self, index: usize) -> &[usize] {
        &self.parent_idx[index]
    }

    pub fn child_indices(&self, index: usize) -> &[usize] {
        &self.children[index]
    }

    /// Variable indices in a topological order (parents before children).
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn edge_count(&self) -> usize {
        self.parent_idx.iter().map(Vec::len).sum()
    }

    /// Reachability mask along edge direction, `v` itself included.
    pub(crate) fn descendant_mask(&self, v: usize) -> Vec<bool> {
        reach(v, &self.children, self.len())
    }

    /// Reachability mask against edge direction, `v` itself included.
    pub(crate) fn ancestor_mask(&self, v: usize) -> Vec<bool> {
        reach(v, &self.parent_idx, self.len())
    }

    fn mask_to_names(&self, mask: &[bool]) -> BTreeSet<String> {
        mask.iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| self.variables[i].name.clone())
            .collect()
    }

    pub fn descendants(&self, v: &str, strict: bool) -> Result<BTreeSet<String>> {
        let i = self.index_of(v)?;
        let mut mask = self.descendant_mask(i);
        mask[i] = !strict;
        Ok(self.mask_to_names(&mask))
    }

    pub fn ancestors(&self, v: &str, strict: bool) -> Result<BTreeSet<String>> {
        let i = self.index_of(v)?;
        let mut mask = self.ancestor_mask(i);
        mask[i] = !strict;
        Ok(self.mask_to_names(&mask))
    }

    pub fn is_strict_descendant(&self, of: &str, v: &str) -> Result<bool> {
        let a = self.index_of(of)?;
        let b = self.index_of(v)?;
        Ok(a != b && self.descendant_mask(a)[b])
    }

    /// Names from `set` in declaration order.
    pub fn in_declaration_order<'a>(&'a self, set: &BTreeSet<String>) -> Vec<&'a str> {
        self.names().filter(|n| set.contains(*n)).collect()
    }

    /// Every directed path from `src` to `dst`. Empty when `src == dst`.
    pub fn directed_paths(&self, src: &str, dst: &str) -> Result<Vec<Vec<String>>> {
        let s = self.index_of(src)?;
        let d = self.index_of(dst)?;
        if s == d {
            return Ok(Vec::new());
        }
        let reaches_dst = self.ancestor_mask(d);
        let mut paths = Vec::new();
        let mut stack = vec![s];
        self.extend_paths(d, &reaches_dst, &mut stack, &mut paths);
        Ok(paths
            .into_iter()
            .map(|p| p.into_iter().map(|i| self.variables[i].name.clone()).collect())
            .collect())
    }

    fn extend_paths(
        &self,
        dst: usize,
        reaches_dst: &[bool],
        stack: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        let cur = *stack.last().expect("non-empty path");
        if cur == dst {
            out.push(stack.clone());
            return;
        }
        for &c in &self.children[cur] {
            if reaches_dst[c] {
                stack.push(c);
                self.extend_paths(dst, reaches_dst, stack, out);
                stack.pop();
            }
        }
    }
}

fn reach(start: usize, adjacency: &[Vec<usize>], n: usize) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(v) = stack.pop() {
        for &w in &adjacency[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// Kahn's algorithm, ties broken by declaration index.
fn topological_order(parents: &[Vec<usize>], children: &[Vec<usize>]) -> Vec<usize> {
    let n = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    debug_assert_eq!(order.len(), n, "validated graph is acyclic");
    order
}

/// An effect the agent is hypothesized to aim at: `variable = target`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Intention {
    pub variable: String,
    pub target: bool,
}

impl Intention {
    pub fn new(variable: impl Into<String>, target: bool) -> Self {
        Intention {
            variable: variable.into(),
            target,
        }
    }

    /// The default "effect obtains" reading.
    pub fn attains(variable: impl Into<String>) -> Self {
        Intention::new(variable, true)
    }
}

impl fmt::Display for Intention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.variable, self.target as u8)
    }
}

/// The do-tagged action plus the intend-tagged effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tagging {
    pub action: String,
    pub intention: BTreeSet<Intention>,
}

impl Tagging {
    pub fn new(action: impl Into<String>, intention: impl IntoIterator<Item = Intention>) -> Self {
        Tagging {
            action: action.into(),
            intention: intention.into_iter().collect(),
        }
    }

    /// Check the tagging against `graph`; an empty intention set is an error.
    pub fn check(&self, graph: &CausalGraph) -> Result<()> {
        check_intentions(graph, &self.action, &self.intention)
    }
}

pub(crate) fn check_intentions<'a>(
    graph: &CausalGraph,
    action: &str,
    intentions: impl IntoIterator<Item = &'a Intention>,
) -> Result<()> {
    graph.index_of(action)?;
    let mut any = false;
    for i in intentions {
        any = true;
        if !graph.is_strict_descendant(action, &i.variable)? {
            return Err(Error::NotADescendant {
                action: action.to_string(),
                effect: i.variable.clone(),
            });
        }
    }
    if !any {
        return Err(Error::EmptyIntention);
    }
    Ok(())
}
