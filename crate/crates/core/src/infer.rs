//! Scoring intention hypotheses against experiment outcomes.
//!
//! Every hypothesis is an intention set. Plugged into the scoring policy it
//! predicts an act rate for each observed arm; the arm's act count is scored
//! with a binomial likelihood and hypotheses are compared by total log
//! likelihood.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::agent::{agent_action_rate_given, bind_agent, AgentPolicy};
use crate::classify::classify_effects;
use crate::error::{Error, Result};
use crate::graph::{Assignment, CausalGraph, Intention};
use crate::lab::{plan, run_battery, ExperimentResult, InterferenceExperiment, LeverMap, DEFAULT_ALPHA};
use crate::scm::{Dataset, Regime, DEFAULT_ENUMERATION_CAP};
use crate::stats::{binomial_log_pmf, binomial_log_pmf_saturated, chi_square_sf};

pub type Hypothesis = BTreeSet<Intention>;

pub const DEFAULT_SEPARATION: f64 = 6.0;
pub const DEFAULT_MISFIT_ALPHA: f64 = 1e-6;
pub const DEFAULT_HYPOTHESIS_CAP: usize = 100_000;

/// Act counts for one arm, optionally restricted to a stratum of rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmObservation {
    pub regime: Regime,
    #[serde(default)]
    pub stratum: Assignment,
    pub n: u64,
    pub acts: u64,
}

impl ArmObservation {
    pub fn new(regime: Regime, n: u64, acts: u64) -> Self {
        ArmObservation {
            regime,
            stratum: Assignment::new(),
            n,
            acts,
        }
    }
}

/// Both arms of each randomized result.
pub fn arms_from_results(results: &[ExperimentResult]) -> Vec<ArmObservation> {
    results
        .iter()
        .flat_map(|r| {
            [
                ArmObservation::new(r.control_regime.clone(), r.control_n, r.control_acts),
                ArmObservation::new(r.treated_regime.clone(), r.treated_n, r.treated_acts),
            ]
        })
        .collect()
}

/// One arm per regime label and stratum of `adjustment`. Labels are read as
/// interference regimes.
pub fn arms_from_dataset(dataset: &Dataset, action: &str, adjustment: &BTreeSet<String>) -> Result<Vec<ArmObservation>> {
    let a = dataset.column_index(action)?;
    if adjustment.contains(action) {
        return Err(Error::AdjustmentContainsAction(action.to_string()));
    }
    let adj: Vec<(&String, usize)> = adjustment
        .iter()
        .map(|v| Ok((v, dataset.column_index(v)?)))
        .collect::<Result<_>>()?;
    let mut cells: BTreeMap<(&str, Vec<bool>), (u64, u64)> = BTreeMap::new();
    for (row, label) in dataset.rows().iter().zip(dataset.regime_labels()) {
        let key: Vec<bool> = adj.iter().map(|&(_, c)| row[c]).collect();
        let cell = cells.entry((label.as_str(), key)).or_default();
        cell.0 += 1;
        cell.1 += row[a] as u64;
    }
    cells
        .into_iter()
        .map(|((label, key), (n, acts))| {
            Ok(ArmObservation {
                regime: Regime::parse_label(label)?,
                stratum: adj.iter().zip(key).map(|(&(v, _), b)| (v.clone(), b)).collect(),
                n,
                acts,
            })
        })
        .collect()
}

fn binomial_sum(n: usize, max_size: usize) -> u128 {
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for k in 1..=max_size.min(n) {
        c = c * (n - k + 1) as u128 / k as u128;
        total += c;
    }
    total
}

/// Non-empty sets of `(d, 1)` over strict descendants `d` of the action, of
/// size at most `max_size`, by size then declaration order.
pub fn enumerate_hypotheses(graph: &CausalGraph, action: &str, max_size: usize, cap: usize) -> Result<Vec<Hypothesis>> {
    if max_size == 0 {
        return Err(Error::InvalidArgument("max_size must be at least 1".into()));
    }
    let desc = graph.descendants(action, true)?;
    let ordered = graph.in_declaration_order(&desc);
    let count = binomial_sum(ordered.len(), max_size);
    if count > cap as u128 {
        return Err(Error::TooManyHypotheses { count, cap });
    }
    Ok((1..=max_size.min(ordered.len()))
        .flat_map(|k| ordered.iter().copied().combinations(k))
        .map(|set| set.into_iter().map(Intention::attains).collect())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreVerdict {
    Consistent,
    Refuted,
    Indistinguishable,
}

impl fmt::Display for ScoreVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreVerdict::Consistent => "consistent",
            ScoreVerdict::Refuted => "refuted",
            ScoreVerdict::Indistinguishable => "indistinguishable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisScore {
    pub hypothesis: Hypothesis,
    pub log_likelihood: f64,
    pub verdict: ScoreVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    /// Hypotheses more than this many nats below the best are refuted.
    pub separation: f64,
    /// Below this goodness-of-fit p-value for the best hypothesis, every
    /// hypothesis is refuted.
    pub misfit_alpha: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            separation: DEFAULT_SEPARATION,
            misfit_alpha: DEFAULT_MISFIT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scoring {
    pub scores: Vec<HypothesisScore>,
    /// Deviance of the best hypothesis against the saturated model.
    pub deviance: f64,
    pub fit_p: f64,
    pub misfit: bool,
}

/// Exact act rate each hypothesis predicts for each arm.
pub fn predicted_rates(
    graph: &CausalGraph,
    action: &str,
    policy: &AgentPolicy,
    hypotheses: &[Hypothesis],
    arms: &[ArmObservation],
) -> Result<Vec<Vec<f64>>> {
    hypotheses
        .iter()
        .map(|h| {
            let model = bind_agent(graph, action, policy.retarget(h.iter().cloned())?)?;
            let mut cache: BTreeMap<(String, &Assignment), f64> = BTreeMap::new();
            arms.iter()
                .map(|arm| {
                    let key = (arm.regime.label(), &arm.stratum);
                    if let Some(&p) = cache.get(&key) {
                        return Ok(p);
                    }
                    let p = agent_action_rate_given(&model, &arm.regime, &arm.stratum)?;
                    cache.insert(key, p);
                    Ok(p)
                })
                .collect()
        })
        .collect()
}

/// Total log likelihood per hypothesis, with verdicts assigned by
/// `config.separation` around the best score.
pub fn score_hypotheses(
    arms: &[ArmObservation],
    graph: &CausalGraph,
    action: &str,
    policy: &AgentPolicy,
    hypotheses: &[Hypothesis],
    config: ScoringConfig,
) -> Result<Scoring> {
    if graph.len() > DEFAULT_ENUMERATION_CAP {
        return Err(Error::TooManyVariables {
            count: graph.len(),
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    for arm in arms {
        if arm.acts > arm.n {
            return Err(Error::InvalidArgument(format!(
                "arm `{}` has {} acts out of {}",
                arm.regime.label(),
                arm.acts,
                arm.n
            )));
        }
    }
    let rates = predicted_rates(graph, action, policy, hypotheses, arms)?;
    let lls: Vec<f64> = rates
        .iter()
        .map(|ps| arms.iter().zip(ps).map(|(a, &p)| binomial_log_pmf(a.acts, a.n, p)).sum())
        .collect();
    Ok(assign_verdicts(hypotheses, lls, arms, config))
}

fn assign_verdicts(hypotheses: &[Hypothesis], lls: Vec<f64>, arms: &[ArmObservation], config: ScoringConfig) -> Scoring {
    let best = lls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let saturated: f64 = arms.iter().map(|a| binomial_log_pmf_saturated(a.acts, a.n)).sum();
    let deviance = if lls.is_empty() {
        0.0
    } else {
        (2.0 * (saturated - best)).max(0.0)
    };
    let df = arms.iter().filter(|a| a.n > 0).count();
    let fit_p = chi_square_sf(deviance, df);
    let misfit = !lls.is_empty() && fit_p < config.misfit_alpha;
    let near = lls.iter().filter(|&&ll| best - ll <= config.separation).count();
    let scores = hypotheses
        .iter()
        .zip(lls)
        .map(|(h, ll)| {
            let verdict = if misfit || best - ll > config.separation {
                ScoreVerdict::Refuted
            } else if near >= 2 {
                ScoreVerdict::Indistinguishable
            } else {
                ScoreVerdict::Consistent
            };
            HypothesisScore {
                hypothesis: h.clone(),
                log_likelihood: ll,
                verdict,
            }
        })
        .collect();
    Scoring {
        scores,
        deviance,
        fit_p,
        misfit,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "hypotheses", rename_all = "kebab-case")]
pub enum Identification {
    Unique(Hypothesis),
    Candidates(Vec<Hypothesis>),
    Indeterminate,
}

impl Identification {
    pub fn unique(&self) -> Option<&Hypothesis> {
        match self {
            Identification::Unique(h) => Some(h),
            _ => None,
        }
    }
}

pub fn format_hypothesis(h: &Hypothesis) -> String {
    format!("{{{}}}", h.iter().map(Intention::to_string).join(", "))
}

impl fmt::Display for Identification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Identification::Unique(h) => write!(f, "unique {}", format_hypothesis(h)),
            Identification::Candidates(hs) => {
                write!(f, "candidates {}", hs.iter().map(format_hypothesis).join(" "))
            }
            Identification::Indeterminate => f.write_str("indeterminate"),
        }
    }
}

pub fn identify(scores: &[HypothesisScore]) -> Identification {
    let consistent: Vec<&HypothesisScore> = scores.iter().filter(|s| s.verdict == ScoreVerdict::Consistent).collect();
    if consistent.len() == 1 {
        return Identification::Unique(consistent[0].hypothesis.clone());
    }
    let tied: Vec<Hypothesis> = scores
        .iter()
        .filter(|s| s.verdict != ScoreVerdict::Refuted)
        .map(|s| s.hypothesis.clone())
        .collect();
    if tied.is_empty() {
        Identification::Indeterminate
    } else {
        Identification::Candidates(tied)
    }
}

/// Experiments from the plans of every leverable effect taken in turn as the
/// hypothesized one, one per lever, in first-planned order.
pub fn full_battery(graph: &CausalGraph, action: &str, levers: &LeverMap) -> Result<Vec<InterferenceExperiment>> {
    let desc = graph.descendants(action, true)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for h in graph.in_declaration_order(&desc) {
        let c = classify_effects(graph, action, h)?;
        for e in plan(graph, &c, levers)?.experiments {
            if seen.insert(e.lever.clone()) {
                out.push(e);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRun {
    pub truth: Hypothesis,
    pub results: Vec<ExperimentResult>,
    pub scoring: Scoring,
    pub identification: Identification,
    pub agreement: bool,
}

/// Bind the true policy, run the full battery, score every hypothesis up to
/// the true set's size with the true rates, and compare with the truth.
pub fn oracle_identify(
    graph: &CausalGraph,
    action: &str,
    true_policy: &AgentPolicy,
    levers: &LeverMap,
    n_per_arm: usize,
    seed: u64,
) -> Result<OracleRun> {
    let model = bind_agent(graph, action, true_policy.clone())?;
    let experiments = full_battery(graph, action, levers)?;
    let results: Vec<ExperimentResult> = run_battery(&model, &experiments, n_per_arm, seed, DEFAULT_ALPHA)?
        .into_iter()
        .map(|(r, _)| r)
        .collect();
    let hypotheses = enumerate_hypotheses(graph, action, true_policy.intention.len(), DEFAULT_HYPOTHESIS_CAP)?;
    let scoring = score_hypotheses(
        &arms_from_results(&results),
        graph,
        action,
        true_policy,
        &hypotheses,
        ScoringConfig::default(),
    )?;
    let identification = identify(&scoring.scores);
    let agreement = identification.unique() == Some(&true_policy.intention);
    Ok(OracleRun {
        truth: true_policy.intention.clone(),
        results,
        scoring,
        identification,
        agreement,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub p_act: f64,
    pub p_base: f64,
    pub theta: f64,
    pub identification: Identification,
    /// Same identification as under the reference policy.
    pub stable: bool,
}

/// Re-score under every valid combination of the grid values and report
/// whether the identification changes. Invalid combinations are skipped.
pub fn sensitivity(
    arms: &[ArmObservation],
    graph: &CausalGraph,
    action: &str,
    policy: &AgentPolicy,
    hypotheses: &[Hypothesis],
    grid: (&[f64], &[f64], &[f64]),
    config: ScoringConfig,
) -> Result<Vec<SensitivityPoint>> {
    let reference = identify(&score_hypotheses(arms, graph, action, policy, hypotheses, config)?.scores);
    let mut out = Vec::new();
    for (&p_act, &p_base, &theta) in itertools::iproduct!(grid.0, grid.1, grid.2) {
        let mut p = policy.clone();
        p.p_act = p_act;
        p.p_base = p_base;
        p.theta = theta;
        if p.validate().is_err() {
            continue;
        }
        let identification = identify(&score_hypotheses(arms, graph, action, &p, hypotheses, config)?.scores);
        out.push(SensitivityPoint {
            p_act,
            p_base,
            theta,
            stable: identification == reference,
            identification,
        });
    }
    Ok(out)
}
