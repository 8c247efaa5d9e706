//! Structural-causal-model semantics for a [`CausalGraph`]: regimes and graph
//! surgery, exact joint enumeration, and seeded ancestral sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Assignment, CausalGraph, Variable, REGIME_COLUMN};

/// Largest graph [`joint_enumerate`] accepts by default.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// Generator recorded in dataset provenance. Seeds go through
/// `SeedableRng::seed_from_u64`, streams through `ChaCha8Rng::set_stream`.
pub const RNG_ALGORITHM: &str = "chacha8-rand_chacha-0.3";

pub const NATURAL_LABEL: &str = "natural";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampKind {
    /// The action itself is forced.
    Do,
    /// An effect-side variable is forced.
    Interference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clamp {
    pub value: bool,
    pub kind: ClampKind,
}

/// A set of clamped variables. The empty regime is the natural one.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Regime {
    clamps: BTreeMap<String, Clamp>,
}

impl Regime {
    pub fn natural() -> Self {
        Regime::default()
    }

    pub fn interference(variable: impl Into<String>, value: bool) -> Self {
        let mut r = Regime::natural();
        r.clamps.insert(
            variable.into(),
            Clamp {
                value,
                kind: ClampKind::Interference,
            },
        );
        r
    }

    pub fn do_(variable: impl Into<String>, value: bool) -> Self {
        let mut r = Regime::natural();
        r.clamps.insert(
            variable.into(),
            Clamp {
                value,
                kind: ClampKind::Do,
            },
        );
        r
    }

    /// Add a clamp; clamping a variable twice is an error.
    pub fn insert(&mut self, variable: impl Into<String>, value: bool, kind: ClampKind) -> Result<()> {
        let variable = variable.into();
        if self.clamps.contains_key(&variable) {
            return Err(Error::DuplicateClamp(variable));
        }
        self.clamps.insert(variable, Clamp { value, kind });
        Ok(())
    }

    pub fn with(mut self, variable: impl Into<String>, value: bool, kind: ClampKind) -> Result<Self> {
        self.insert(variable, value, kind)?;
        Ok(self)
    }

    /// Union of two regimes over disjoint variables.
    pub fn union(&self, other: &Regime) -> Result<Regime> {
        let mut out = self.clone();
        for (v, c) in &other.clamps {
            out.insert(v.clone(), c.value, c.kind)?;
        }
        Ok(out)
    }

    pub fn clamps(&self) -> &BTreeMap<String, Clamp> {
        &self.clamps
    }

    pub fn clamp(&self, variable: &str) -> Option<Clamp> {
        self.clamps.get(variable).copied()
    }

    pub fn is_natural(&self) -> bool {
        self.clamps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.clamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clamps.is_empty()
    }

    /// `natural`, or `var=value` pairs joined by commas in name order.
    pub fn label(&self) -> String {
        if self.clamps.is_empty() {
            return NATURAL_LABEL.to_string();
        }
        self.clamps
            .iter()
            .map(|(v, c)| format!("{v}={}", c.value as u8))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Inverse of [`Regime::label`]; every clamp is read as interference.
    pub fn parse_label(label: &str) -> Result<Regime> {
        let label = label.trim();
        if label == NATURAL_LABEL {
            return Ok(Regime::natural());
        }
        let bad = || Error::RegimeLabel(label.to_string());
        let mut r = Regime::natural();
        for part in label.split(',') {
            let (var, val) = part.split_once('=').ok_or_else(bad)?;
            let value = match val.trim() {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            };
            let var = var.trim();
            if !crate::graph::is_valid_name(var) {
                return Err(bad());
            }
            r.insert(var, value, ClampKind::Interference).map_err(|_| bad())?;
        }
        Ok(r)
    }

    pub fn as_assignment(&self) -> Assignment {
        self.clamps.iter().map(|(v, c)| (v.clone(), c.value)).collect()
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Graph surgery: every clamped variable loses its parents and becomes constant.
pub fn mutilate(graph: &CausalGraph, regime: &Regime) -> Result<CausalGraph> {
    for v in regime.clamps().keys() {
        graph.index_of(v)?;
    }
    if regime.is_natural() {
        return Ok(graph.clone());
    }
    let variables = graph
        .variables()
        .iter()
        .map(|v| match regime.clamp(&v.name) {
            Some(c) => Variable::root(v.name.clone(), if c.value { 1.0 } else { 0.0 }),
            None => v.clone(),
        })
        .collect();
    CausalGraph::new(variables)
}

/// Full joint distribution. Entry `mask` has bit `i` set iff variable `i`
/// (declaration order) takes value 1.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    names: Vec<String>,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn probability_of_mask(&self, mask: usize) -> f64 {
        self.probs[mask]
    }

    /// Entries with non-zero probability, as full assignments.
    pub fn support(&self) -> Vec<(Assignment, f64)> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(mask, &p)| {
                let a = self
                    .names
                    .iter()
                    .enumerate()
                    .map(|(i, n)| (n.clone(), (mask >> i) & 1 == 1))
                    .collect();
                (a, p)
            })
            .collect()
    }

    fn constraint(&self, assignment: &Assignment) -> Result<(usize, usize)> {
        let mut care = 0usize;
        let mut want = 0usize;
        for (name, &value) in assignment {
            let i = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
            care |= 1 << i;
            if value {
                want |= 1 << i;
            }
        }
        Ok((care, want))
    }

    /// Probability of a partial assignment.
    pub fn marginal(&self, event: &Assignment) -> Result<f64> {
        let (care, want) = self.constraint(event)?;
        Ok(self
            .probs
            .iter()
            .enumerate()
            .filter(|(m, _)| m & care == want)
            .map(|(_, p)| p)
            .sum())
    }

    /// `P(event | given)`; a zero-probability `given` is an error.
    pub fn conditional(&self, event: &Assignment, given: &Assignment) -> Result<f64> {
        let (ec, ew) = self.constraint(event)?;
        let (gc, gw) = self.constraint(given)?;
        let mut joint = 0.0;
        let mut cond = 0.0;
        for (m, &p) in self.probs.iter().enumerate() {
            if m & gc == gw {
                cond += p;
                if m & ec == ew {
                    joint += p;
                }
            }
        }
        if cond <= 0.0 {
            return Err(Error::ZeroProbability);
        }
        Ok(joint / cond)
    }
}

pub fn joint_enumerate(graph: &CausalGraph) -> Result<JointTable> {
    joint_enumerate_capped(graph, DEFAULT_ENUMERATION_CAP)
}

pub fn joint_enumerate_capped(graph: &CausalGraph, cap: usize) -> Result<JointTable> {
    let n = graph.len();
    if n > cap {
        return Err(Error::TooManyVariables { count: n, cap });
    }
    let mut probs = vec![0.0; 1 << n];
    let mut parent_values = Vec::new();
    for (mask, slot) in probs.iter_mut().enumerate() {
        let mut p = 1.0;
        for (i, var) in graph.variables().iter().enumerate() {
            parent_values.clear();
            parent_values.extend(graph.parent_indices(i).iter().map(|&j| (mask >> j) & 1 == 1));
            let p1 = var.p_true(&parent_values);
            p *= if (mask >> i) & 1 == 1 { p1 } else { 1.0 - p1 };
            if p == 0.0 {
                break;
            }
        }
        *slot = p;
    }
    Ok(JointTable {
        names: graph.names().map(str::to_string).collect(),
        probs,
    })
}

/// `P(event | given)` by exact enumeration.
pub fn query(graph: &CausalGraph, event: &Assignment, given: &Assignment) -> Result<f64> {
    joint_enumerate(graph)?.conditional(event, given)
}

/// One block of rows drawn by a single seeded call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub regime: String,
    pub seed: u64,
    pub stream: u64,
    pub rows: usize,
    pub rng: String,
}

/// Binary rows over the graph's variables plus a regime label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    rows: Vec<Vec<bool>>,
    regimes: Vec<String>,
    provenance: Vec<Provenance>,
}

impl Dataset {
    pub fn empty(columns: Vec<String>) -> Self {
        Dataset {
            columns,
            rows: Vec::new(),
            regimes: Vec::new(),
            provenance: Vec::new(),
        }
    }

    /// Build from raw rows; every row must have one value per column.
    pub fn from_rows(columns: Vec<String>, rows: Vec<Vec<bool>>, regimes: Vec<String>) -> Result<Self> {
        if rows.len() != regimes.len() {
            return Err(Error::InvalidArgument(format!(
                "{} rows but {} regime labels",
                rows.len(),
                regimes.len()
            )));
        }
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != columns.len()) {
            return Err(Error::InvalidArgument(format!(
                "row {i} has {} values, expected {}",
                rows[i].len(),
                columns.len()
            )));
        }
        Ok(Dataset {
            columns,
            rows,
            regimes,
            provenance: Vec::new(),
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn regime_labels(&self) -> &[String] {
        &self.regimes
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        name == REGIME_COLUMN || self.columns.iter().any(|c| c == name)
    }

    /// Append another dataset over the same columns.
    pub fn extend(&mut self, other: Dataset) -> Result<()> {
        if other.columns != self.columns {
            return Err(Error::InvalidArgument("datasets have different columns".into()));
        }
        self.rows.extend(other.rows);
        self.regimes.extend(other.regimes);
        self.provenance.extend(other.provenance);
        Ok(())
    }

    /// Rows whose regime label equals `label`.
    pub fn filter_regime(&self, label: &str) -> Dataset {
        let (rows, regimes) = self
            .rows
            .iter()
            .zip(&self.regimes)
            .filter(|(_, r)| r.as_str() == label)
            .map(|(row, r)| (row.clone(), r.clone()))
            .unzip();
        Dataset {
            columns: self.columns.clone(),
            rows,
            regimes,
            provenance: self
                .provenance
                .iter()
                .filter(|p| p.regime == label)
                .cloned()
                .collect(),
        }
    }

    /// Distinct regime labels in first-seen order.
    pub fn distinct_regimes(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.regimes
            .iter()
            .filter(|r| seen.insert(r.as_str()))
            .cloned()
            .collect()
    }

    /// Value of `column` in row `row` as text: `"0"`/`"1"`, or the regime label.
    pub fn cell_text(&self, row: usize, column: &str) -> Result<String> {
        if column == REGIME_COLUMN {
            return Ok(self.regimes[row].clone());
        }
        let c = self.column_index(column)?;
        Ok(if self.rows[row][c] { "1" } else { "0" }.to_string())
    }

    /// Number of rows matching every entry of `pattern`.
    pub fn count_matching(&self, pattern: &Assignment) -> Result<usize> {
        let cols: Vec<(usize, bool)> = pattern
            .iter()
            .map(|(name, &v)| Ok((self.column_index(name)?, v)))
            .collect::<Result<_>>()?;
        Ok(self
            .rows
            .iter()
            .filter(|row| cols.iter().all(|&(c, v)| row[c] == v))
            .count())
    }

    /// Fraction of rows where `column` is 1, `None` when empty.
    pub fn frequency(&self, column: &str) -> Result<Option<f64>> {
        let c = self.column_index(column)?;
        if self.rows.is_empty() {
            return Ok(None);
        }
        let k = self.rows.iter().filter(|r| r[c]).count();
        Ok(Some(k as f64 / self.rows.len() as f64))
    }
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw one row ancestrally. `values` is indexed by declaration order.
pub(crate) fn draw_row(graph: &CausalGraph, rng: &mut impl Rng, values: &mut [bool], scratch: &mut Vec<bool>) {
    for &i in graph.topological_order() {
        scratch.clear();
        scratch.extend(graph.parent_indices(i).iter().map(|&j| values[j]));
        let p = graph.variables()[i].p_true(scratch);
        // gen::<f64>() is in [0, 1): p = 0 never fires, p = 1 always does.
        values[i] = rng.gen::<f64>() < p;
    }
}

/// `n` rows from the natural regime of `graph`.
pub fn sample(graph: &CausalGraph, n: usize, seed: u64) -> Dataset {
    sample_labeled(graph, n, seed, 0, NATURAL_LABEL)
}

/// `n` rows from `graph` (already mutilated as needed) labeled `label`,
/// drawn from stream `stream` of the generator seeded with `seed`.
pub fn sample_labeled(graph: &CausalGraph, n: usize, seed: u64, stream: u64, label: &str) -> Dataset {
    let mut rng = rng_for(seed, stream);
    let mut values = vec![false; graph.len()];
    let mut scratch = Vec::new();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        draw_row(graph, &mut rng, &mut values, &mut scratch);
        rows.push(values.clone());
    }
    Dataset {
        columns: graph.names().map(str::to_string).collect(),
        rows,
        regimes: vec![label.to_string(); n],
        provenance: vec![Provenance {
            regime: label.to_string(),
            seed,
            stream,
            rows: n,
            rng: RNG_ALGORITHM.to_string(),
        }],
    }
}

/// Mutilate by `regime`, then sample and label rows with the regime's label.
pub fn sample_regime(graph: &CausalGraph, regime: &Regime, n: usize, seed: u64, stream: u64) -> Result<Dataset> {
    let g = mutilate(graph, regime)?;
    Ok(sample_labeled(&g, n, seed, stream, &regime.label()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assign(pairs: &[(&str, bool)]) -> Assignment {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn stove_water() -> CausalGraph {
        CausalGraph::new(vec![
            Variable::root("stove", 0.5),
            Variable::deterministic("water", &["stove"], |v| v[0]),
        ])
        .unwrap()
    }

    fn sport_basic() -> CausalGraph {
        let id = |v: &[bool]| v[0];
        CausalGraph::new(vec![
            Variable::root("practice", 0.8),
            Variable::deterministic("lose_weight", &["practice"], id),
            Variable::deterministic("be_fit", &["lose_weight"], id),
            Variable::deterministic("live_longer", &["be_fit"], id),
            Variable::deterministic("win_medals", &["practice"], id),
        ])
        .unwrap()
    }

    #[test]
    fn do_clamp_isolates_the_stove() {
        let g = mutilate(&stove_water(), &Regime::do_("stove", true)).unwrap();
        let stove = g.variable("stove").unwrap();
        assert!(stove.parents.is_empty());
        assert_eq!(stove.cpt, vec![1.0]);
        assert_eq!(query(&g, &assign(&[("stove", true)]), &Assignment::new()).unwrap(), 1.0);
    }

    #[test]
    fn empty_regime_is_identity() {
        let g = sport_basic();
        assert_eq!(mutilate(&g, &Regime::natural()).unwrap(), g);
    }

    #[test]
    fn mutilate_rejects_unknown_variable() {
        assert_eq!(
            mutilate(&stove_water(), &Regime::interference("kettle", false)),
            Err(Error::UnknownVariable("kettle".into()))
        );
    }

    #[test]
    fn deterministic_chain_enumeration() {
        let g = CausalGraph::new(vec![
            Variable::root("ball", 0.5),
            Variable::deterministic("pins", &["ball"], |v| v[0]),
        ])
        .unwrap();
        let t = joint_enumerate(&g).unwrap();
        // bit 0 = ball, bit 1 = pins
        assert_eq!(t.probabilities(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn single_node_enumeration() {
        let g = CausalGraph::new(vec![Variable::root("x", 0.3)]).unwrap();
        let t = joint_enumerate(&g).unwrap();
        assert_eq!(t.probabilities(), &[0.7, 0.3]);
        assert_eq!(query(&g, &assign(&[("x", true)]), &Assignment::new()).unwrap(), 0.3);
    }

    #[test]
    fn deterministic_sport_has_two_support_points() {
        let t = joint_enumerate(&sport_basic()).unwrap();
        let support = t.support();
        assert_eq!(support.len(), 2);
        let total: f64 = t.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_cap() {
        let vars = (0..5).map(|i| Variable::root(format!("v{i}"), 0.5)).collect();
        let g = CausalGraph::new(vars).unwrap();
        assert_eq!(
            joint_enumerate_capped(&g, 4),
            Err(Error::TooManyVariables { count: 5, cap: 4 })
        );
    }

    #[test]
    fn query_examples() {
        let g = stove_water();
        assert_eq!(
            query(&g, &assign(&[("water", true)]), &assign(&[("stove", true)])).unwrap(),
            1.0
        );
        let s = sport_basic();
        assert_eq!(
            query(&s, &assign(&[("win_medals", true)]), &assign(&[("practice", false)])).unwrap(),
            0.0
        );
    }

    #[test]
    fn zero_probability_condition_is_an_error() {
        let g = mutilate(&stove_water(), &Regime::do_("stove", false)).unwrap();
        assert_eq!(
            query(&g, &assign(&[("water", true)]), &assign(&[("stove", true)])),
            Err(Error::ZeroProbability)
        );
    }

    #[test]
    fn interference_on_effect_leaves_cause_alone() {
        let g = stove_water();
        let before = query(&g, &assign(&[("stove", true)]), &Assignment::new()).unwrap();
        let m = mutilate(&g, &Regime::interference("water", false)).unwrap();
        let after = query(&m, &assign(&[("stove", true)]), &Assignment::new()).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn empty_sample_keeps_columns() {
        let d = sample(&sport_basic(), 0, 1);
        assert!(d.is_empty());
        assert_eq!(d.columns().len(), 5);
    }

    #[test]
    fn deterministic_mechanism_in_samples() {
        let g = CausalGraph::new(vec![
            Variable::root("ball", 0.5),
            Variable::deterministic("pins", &["ball"], |v| v[0]),
        ])
        .unwrap();
        for seed in 0..5 {
            let d = sample(&g, 500, seed);
            assert!(d.rows().iter().all(|r| r[0] == r[1]));
        }
    }

    #[test]
    fn bernoulli_frequency_within_three_se() {
        let g = CausalGraph::new(vec![Variable::root("x", 0.3)]).unwrap();
        let n = 100_000;
        let f = sample(&g, n, 2024).frequency("x").unwrap().unwrap();
        let se = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((f - 0.3).abs() < 3.0 * se, "{f}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let g = sport_basic();
        assert_eq!(sample(&g, 300, 9), sample(&g, 300, 9));
        assert_ne!(sample(&g, 300, 9).rows(), sample(&g, 300, 10).rows());
    }

    #[test]
    fn regime_labels_round_trip() {
        let r = Regime::interference("smoke", true)
            .with("enroll", false, ClampKind::Interference)
            .unwrap();
        assert_eq!(r.label(), "enroll=0,smoke=1");
        assert_eq!(Regime::parse_label(&r.label()).unwrap(), r);
        assert_eq!(Regime::parse_label("natural").unwrap(), Regime::natural());
        assert!(Regime::parse_label("enroll=2").is_err());
        assert!(Regime::parse_label("enroll").is_err());
        assert!(Regime::parse_label("a=1,a=0").is_err());
    }

    #[test]
    fn duplicate_clamp_rejected() {
        let r = Regime::interference("a", true);
        assert_eq!(
            r.with("a", false, ClampKind::Do),
            Err(Error::DuplicateClamp("a".into()))
        );
    }
}
