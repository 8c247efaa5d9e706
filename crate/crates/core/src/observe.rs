//! Teleological evidence from observational data.
//!
//! Units are compared across regimes that occur naturally (who happens to be
//! enrolled, who smokes), within strata of the adjustment variables. Stratum
//! differences are pooled with inverse-variance weights.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agent::TeleologicalModel;
use crate::classify::confounding_causes;
use crate::error::{Error, Result};
use crate::graph::{Assignment, CausalGraph, REGIME_COLUMN};
use crate::lab::{battery_pattern_check, InterferenceExperiment, Lever, PatternOutcome, Verdict, MIN_ACTS};
use crate::scm::{self, ClampKind, Dataset, Regime};
use crate::stats::normal_two_sided_p;

/// Strata with fewer rows than this in either arm are left out of pooling.
pub const MIN_CELL: u64 = 5;

/// Which groups of a column to compare.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contrast {
    pub column: String,
    pub control: String,
    pub treated: String,
}

impl Contrast {
    /// Natural rows against rows labeled with `regime`.
    pub fn against_natural(regime: &Regime) -> Self {
        Contrast {
            column: REGIME_COLUMN.to_string(),
            control: scm::NATURAL_LABEL.to_string(),
            treated: regime.label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub key: Assignment,
    pub control_n: u64,
    pub control_acts: u64,
    pub treated_n: u64,
    pub treated_acts: u64,
    /// Control rate minus treated rate; absent when an arm is empty.
    pub difference: Option<f64>,
    /// Normalized pooling weight; zero for strata left out of pooling.
    pub weight: f64,
    pub small: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedComparison {
    pub contrast: Contrast,
    pub adjustment_set: Vec<String>,
    pub strata: Vec<Stratum>,
    /// Weighted mean of stratum differences (control minus treated).
    pub pooled_difference: f64,
    pub pooled_se: f64,
    pub pooled_z: f64,
    pub pooled_p: f64,
    /// Some stratum had an empty arm and was dropped.
    pub dropped_empty_cells: bool,
}

impl StratifiedComparison {
    pub fn control_totals(&self) -> (u64, u64) {
        self.strata
            .iter()
            .fold((0, 0), |(k, n), s| (k + s.control_acts, n + s.control_n))
    }

    pub fn treated_totals(&self) -> (u64, u64) {
        self.strata
            .iter()
            .fold((0, 0), |(k, n), s| (k + s.treated_acts, n + s.treated_n))
    }

    pub fn verdict(&self, alpha: f64) -> Verdict {
        if self.control_totals().0 < MIN_ACTS && self.treated_totals().0 < MIN_ACTS {
            Verdict::Underpowered
        } else if self.pooled_p < alpha {
            Verdict::Change
        } else {
            Verdict::NoChange
        }
    }
}

/// Variance of a proportion estimate. Counts are shifted by a half so that
/// all-0 and all-1 cells keep a positive variance.
fn proportion_variance(k: u64, n: u64) -> f64 {
    let p = (k as f64 + 0.5) / (n as f64 + 1.0);
    p * (1.0 - p) / n as f64
}

pub fn stratified_action_comparison(
    dataset: &Dataset,
    action: &str,
    contrast: &Contrast,
    adjustment: &BTreeSet<String>,
) -> Result<StratifiedComparison> {
    let action_col = dataset.column_index(action)?;
    if adjustment.contains(action) {
        return Err(Error::AdjustmentContainsAction(action.to_string()));
    }
    let adj_cols: Vec<(String, usize)> = adjustment
        .iter()
        .map(|a| Ok((a.clone(), dataset.column_index(a)?)))
        .collect::<Result<_>>()?;
    if !dataset.has_column(&contrast.column) {
        return Err(Error::UnknownColumn(contrast.column.clone()));
    }

    let mut distinct = BTreeSet::new();
    // stratum key -> [control (n, acts), treated (n, acts)]
    let mut cells: BTreeMap<Vec<bool>, [(u64, u64); 2]> = BTreeMap::new();
    for (i, row) in dataset.rows().iter().enumerate() {
        let group = dataset.cell_text(i, &contrast.column)?;
        let arm = if group == contrast.control {
            Some(0)
        } else if group == contrast.treated {
            Some(1)
        } else {
            None
        };
        distinct.insert(group);
        let Some(arm) = arm else { continue };
        let key: Vec<bool> = adj_cols.iter().map(|&(_, c)| row[c]).collect();
        let cell = &mut cells.entry(key).or_default()[arm];
        cell.0 += 1;
        cell.1 += row[action_col] as u64;
    }
    if distinct.len() < 2 {
        return Err(Error::SingleRegime(contrast.column.clone()));
    }
    for label in [&contrast.control, &contrast.treated] {
        if !distinct.contains(label) {
            return Err(Error::MissingRegime(label.clone()));
        }
    }

    let mut strata = Vec::with_capacity(cells.len());
    let mut raw_weights = Vec::with_capacity(cells.len());
    let mut dropped_empty_cells = false;
    for (key, [(cn, ck), (tn, tk)]) in cells {
        let key: Assignment = adj_cols
            .iter()
            .zip(key)
            .map(|((name, _), v)| (name.clone(), v))
            .collect();
        let difference = if cn > 0 && tn > 0 {
            Some(ck as f64 / cn as f64 - tk as f64 / tn as f64)
        } else {
            dropped_empty_cells = true;
            None
        };
        let small = cn < MIN_CELL || tn < MIN_CELL;
        let variance = if difference.is_some() && !small {
            Some(proportion_variance(ck, cn) + proportion_variance(tk, tn))
        } else {
            None
        };
        raw_weights.push(variance.map(|v| 1.0 / v));
        strata.push((
            Stratum {
                key,
                control_n: cn,
                control_acts: ck,
                treated_n: tn,
                treated_acts: tk,
                difference,
                weight: 0.0,
                small,
            },
            variance,
        ));
    }

    let total: f64 = raw_weights.iter().flatten().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "no stratum has at least {MIN_CELL} rows in both `{}` and `{}`",
            contrast.control, contrast.treated
        )));
    }
    let mut pooled_difference = 0.0;
    let mut pooled_var = 0.0;
    for ((s, variance), w) in strata.iter_mut().zip(&raw_weights) {
        if let (Some(w), Some(v), Some(d)) = (w, variance, s.difference) {
            s.weight = w / total;
            pooled_difference += s.weight * d;
            pooled_var += s.weight * s.weight * *v;
        }
    }
    let pooled_se = pooled_var.sqrt();
    let pooled_z = pooled_difference / pooled_se;
    Ok(StratifiedComparison {
        contrast: contrast.clone(),
        adjustment_set: adjustment.iter().cloned().collect(),
        strata: strata.into_iter().map(|(s, _)| s).collect(),
        pooled_difference,
        pooled_se,
        pooled_z,
        pooled_p: normal_two_sided_p(pooled_z),
        dropped_empty_cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ObservationalOutcome {
    Analyzed {
        comparison: StratifiedComparison,
        verdict: Verdict,
        patterns: Vec<PatternOutcome>,
    },
    NoData {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationalEntry {
    pub experiment: InterferenceExperiment,
    pub outcome: ObservationalOutcome,
    /// Confounding causes of the action and the lever or its target that the
    /// adjustment set leaves out. Non-empty means potentially confounded.
    pub missing_adjustment: Vec<String>,
}

impl ObservationalEntry {
    pub fn potentially_confounded(&self) -> bool {
        !self.missing_adjustment.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationalConfig {
    pub alpha: f64,
    /// Base rate used for the must-not-observe allowance.
    pub p_base: f64,
}

/// The adjustment the battery needs: confounding causes of the action and
/// each experiment's lever and target.
pub fn required_adjustment(
    graph: &CausalGraph,
    action: &str,
    experiments: &[InterferenceExperiment],
) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for e in experiments {
        out.extend(confounding_causes(graph, action, &e.target)?);
        if e.lever.variable != e.target {
            out.extend(confounding_causes(graph, action, &e.lever.variable)?);
        }
    }
    Ok(out)
}

/// For each experiment, compare natural rows with rows in the lever's regime
/// and run the experiment's pattern check on the lever rows.
pub fn observational_battery(
    dataset: &Dataset,
    graph: &CausalGraph,
    action: &str,
    experiments: &[InterferenceExperiment],
    adjustment: &BTreeSet<String>,
    config: ObservationalConfig,
) -> Result<Vec<ObservationalEntry>> {
    let labels: BTreeSet<&str> = dataset.regime_labels().iter().map(String::as_str).collect();
    let mut out = Vec::with_capacity(experiments.len());
    for e in experiments {
        let mut needed = confounding_causes(graph, action, &e.target)?;
        if e.lever.variable != e.target {
            needed.extend(confounding_causes(graph, action, &e.lever.variable)?);
        }
        let missing_adjustment = needed.difference(adjustment).cloned().collect();
        let regime = e.regime();
        let label = regime.label();
        let outcome = if !labels.contains(scm::NATURAL_LABEL) {
            ObservationalOutcome::NoData {
                reason: "no rows in the natural regime".into(),
            }
        } else if !labels.contains(label.as_str()) {
            ObservationalOutcome::NoData {
                reason: format!("no rows in regime `{label}`"),
            }
        } else {
            match stratified_action_comparison(dataset, action, &Contrast::against_natural(&regime), adjustment) {
                Ok(comparison) => {
                    let treated_rows = dataset.filter_regime(&label);
                    let patterns = vec![battery_pattern_check(&treated_rows, e, config.p_base)?];
                    let verdict = comparison.verdict(config.alpha);
                    ObservationalOutcome::Analyzed {
                        comparison,
                        verdict,
                        patterns,
                    }
                }
                Err(Error::InvalidArgument(reason)) => ObservationalOutcome::NoData { reason },
                Err(e) => return Err(e),
            }
        };
        out.push(ObservationalEntry {
            experiment: e.clone(),
            outcome,
            missing_adjustment,
        });
    }
    Ok(out)
}

/// Observational data from a bound agent: lever variables take their natural
/// values, the agent sees them before acting, and each row is labeled with
/// the levers whose clamp value it happens to match (`natural` if none).
/// Levers on descendants of the action cannot be known in advance and are
/// ignored.
pub fn simulate_observational(model: &TeleologicalModel, levers: &[Lever], n: usize, seed: u64) -> Result<Dataset> {
    let mut circumstances: Vec<String> = Vec::new();
    let mut used: Vec<&Lever> = Vec::new();
    for l in levers {
        model.base().index_of(&l.variable)?;
        if l.variable == model.action() || model.base().is_strict_descendant(model.action(), &l.variable)? {
            continue;
        }
        if !circumstances.contains(&l.variable) {
            circumstances.push(l.variable.clone());
        }
        used.push(l);
    }
    let g = model.effective_graph_observing(&Regime::natural(), &circumstances)?;
    let sampled = scm::sample_labeled(&g, n, seed, 0, scm::NATURAL_LABEL);
    let cols: Vec<usize> = used
        .iter()
        .map(|l| sampled.column_index(&l.variable))
        .collect::<Result<_>>()?;
    let labels = sampled
        .rows()
        .iter()
        .map(|row| {
            let mut r = Regime::natural();
            for (l, &c) in used.iter().zip(&cols) {
                if row[c] == l.value && r.clamp(&l.variable).is_none() {
                    r.insert(l.variable.clone(), l.value, ClampKind::Interference)?;
                }
            }
            Ok(r.label())
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_rows(sampled.columns().to_vec(), sampled.rows().to_vec(), labels)
}
