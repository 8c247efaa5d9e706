//! Interference experiments: planning a battery from an effect
//! classification, running randomized two-arm trials on a bound agent, and
//! checking the row patterns each experiment predicts.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::TeleologicalModel;
use crate::classify::{EffectClass, EffectClassification};
use crate::error::{Error, Result};
use crate::graph::{Assignment, CausalGraph};
use crate::scm::{self, Dataset, Regime};
use crate::stats::normal_two_sided_p;

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Arms with fewer acts than this in both arms are underpowered.
pub const MIN_ACTS: u64 = 5;

/// The variable actually clamped to neutralize a target effect.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Lever {
    pub variable: String,
    pub value: bool,
}

impl Lever {
    pub fn new(variable: impl Into<String>, value: bool) -> Self {
        Lever {
            variable: variable.into(),
            value,
        }
    }

    pub fn regime(&self) -> Regime {
        Regime::interference(self.variable.clone(), self.value)
    }
}

impl fmt::Display for Lever {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.variable, self.value as u8)
    }
}

/// Target effect -> lever.
pub type LeverMap = BTreeMap<String, Lever>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rationale {
    Parallel,
    Further,
    HypothesizedItself,
}

impl Rationale {
    pub fn as_str(self) -> &'static str {
        match self {
            Rationale::Parallel => "parallel",
            Rationale::Further => "further",
            Rationale::HypothesizedItself => "hypothesized-itself",
        }
    }
}

impl fmt::Display for Rationale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternMode {
    MustObserve,
    MustNotObserve,
}

impl fmt::Display for PatternMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternMode::MustObserve => "must-observe",
            PatternMode::MustNotObserve => "must-not-observe",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceExperiment {
    pub target: String,
    pub lever: Lever,
    pub rationale: Rationale,
    /// Row the hypothesis predicts under the lever: present for parallel and
    /// further effects, (nearly) absent for the hypothesized effect itself.
    pub expected_pattern: Assignment,
    pub mode: PatternMode,
}

impl InterferenceExperiment {
    pub fn regime(&self) -> Regime {
        self.lever.regime()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unleverable {
    pub target: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub action: String,
    pub hypothesized: String,
    pub experiments: Vec<InterferenceExperiment>,
    pub unleverable: Vec<Unleverable>,
}

/// One experiment per leverable parallel and further effect plus one for the
/// hypothesized effect itself. Mediators are never targeted or clamped.
pub fn plan(graph: &CausalGraph, classification: &EffectClassification, levers: &LeverMap) -> Result<Plan> {
    let c = classification;
    for (target, lever) in levers {
        graph.index_of(target)?;
        graph.index_of(&lever.variable)?;
        if lever.variable != *target && !graph.variable(target)?.parents.contains(&lever.variable) {
            return Err(Error::InvalidLever {
                target: target.clone(),
                lever: lever.variable.clone(),
                reason: "lever must be the target or one of its parents".into(),
            });
        }
    }

    let mut targets: Vec<(String, Rationale)> = Vec::new();
    for (set, rationale) in [(&c.parallel, Rationale::Parallel), (&c.further, Rationale::Further)] {
        targets.extend(
            graph
                .in_declaration_order(set)
                .into_iter()
                .map(|v| (v.to_string(), rationale)),
        );
    }
    targets.push((c.hypothesized.clone(), Rationale::HypothesizedItself));

    let mut experiments = Vec::new();
    let mut unleverable = Vec::new();
    for (target, rationale) in targets {
        let Some(lever) = levers.get(&target) else {
            unleverable.push(Unleverable {
                target,
                reason: "no lever declared".into(),
            });
            continue;
        };
        let reason = if lever.variable == c.action {
            Some("lever clamps the action")
        } else if c.class_of(&lever.variable) == EffectClass::Mediating {
            Some("lever is a mediating effect")
        } else {
            None
        };
        if let Some(reason) = reason {
            unleverable.push(Unleverable {
                target,
                reason: reason.into(),
            });
            continue;
        }
        let expected_pattern = expected_pattern(graph, c, &target, lever)?;
        let mode = match rationale {
            Rationale::HypothesizedItself => PatternMode::MustNotObserve,
            _ => PatternMode::MustObserve,
        };
        experiments.push(InterferenceExperiment {
            target,
            lever: lever.clone(),
            rationale,
            expected_pattern,
            mode,
        });
    }

    Ok(Plan {
        action: c.action.clone(),
        hypothesized: c.hypothesized.clone(),
        experiments,
        unleverable,
    })
}

/// Action = 1 and lever at its clamp value; the mediators, the hypothesized
/// effect and the target take their most probable value given
/// `do(action = 1)` under the lever (ties go to 1).
fn expected_pattern(
    graph: &CausalGraph,
    c: &EffectClassification,
    target: &str,
    lever: &Lever,
) -> Result<Assignment> {
    let regime = lever.regime().union(&Regime::do_(c.action.clone(), true))?;
    let joint = scm::joint_enumerate(&scm::mutilate(graph, &regime)?)?;
    let mut pattern = Assignment::new();
    let shown = c
        .mediating
        .iter()
        .map(String::as_str)
        .chain([c.hypothesized.as_str(), target]);
    for v in shown {
        let p1 = joint.marginal(&[(v.to_string(), true)].into())?;
        pattern.insert(v.to_string(), p1 >= 0.5);
    }
    pattern.insert(c.action.clone(), true);
    pattern.insert(lever.variable.clone(), lever.value);
    Ok(pattern)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    NoChange,
    Change,
    Underpowered,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::NoChange => "no-change",
            Verdict::Change => "change",
            Verdict::Underpowered => "underpowered",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub control_regime: Regime,
    pub treated_regime: Regime,
    pub control_n: u64,
    pub control_acts: u64,
    pub treated_n: u64,
    pub treated_acts: u64,
    pub z_statistic: f64,
    pub p_value: f64,
    pub verdict: Verdict,
}

impl ExperimentResult {
    pub fn from_counts(
        control_regime: Regime,
        treated_regime: Regime,
        (control_acts, control_n): (u64, u64),
        (treated_acts, treated_n): (u64, u64),
        alpha: f64,
    ) -> Result<Self> {
        let (z, p) = two_proportion_test(control_acts, control_n, treated_acts, treated_n)?;
        let verdict = if control_acts < MIN_ACTS && treated_acts < MIN_ACTS {
            Verdict::Underpowered
        } else if p < alpha {
            Verdict::Change
        } else {
            Verdict::NoChange
        };
        Ok(ExperimentResult {
            control_regime,
            treated_regime,
            control_n,
            control_acts,
            treated_n,
            treated_acts,
            z_statistic: z,
            p_value: p,
            verdict,
        })
    }
}

/// Pooled two-proportion z-test, two-sided. `z` is positive when the first
/// arm's proportion is larger.
pub fn two_proportion_test(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<(f64, f64)> {
    if n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2 {
        return Err(Error::InvalidArgument(format!(
            "two-proportion test needs 0 <= k <= n and n >= 1, got {k1}/{n1} and {k2}/{n2}"
        )));
    }
    let (p1, p2) = (k1 as f64 / n1 as f64, k2 as f64 / n2 as f64);
    let pooled = (k1 + k2) as f64 / (n1 + n2) as f64;
    let var = pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64);
    if var <= 0.0 {
        // All zeros or all ones across both arms: the proportions coincide.
        return Ok((0.0, 1.0));
    }
    let z = (p1 - p2) / var.sqrt();
    Ok((z, normal_two_sided_p(z)))
}

/// Both arms' rows of a randomized experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmData {
    pub control: Dataset,
    pub treated: Dataset,
}

fn check_lever(model: &TeleologicalModel, experiment: &InterferenceExperiment) -> Result<()> {
    if experiment.lever.variable == model.action() {
        return Err(Error::ActionClamped(model.action().to_string()));
    }
    Ok(())
}

/// Randomized trial: control under the natural regime, treated under the
/// lever. Streams `stream_base` and `stream_base + 1` of `seed` feed the two arms.
pub fn run_randomized_on_streams(
    model: &TeleologicalModel,
    experiment: &InterferenceExperiment,
    n_per_arm: usize,
    seed: u64,
    stream_base: u64,
    alpha: f64,
) -> Result<(ExperimentResult, ArmData)> {
    check_lever(model, experiment)?;
    if n_per_arm == 0 {
        return Err(Error::InvalidArgument("n_per_arm must be at least 1".into()));
    }
    let control_regime = Regime::natural();
    let treated_regime = experiment.regime();
    let control = model.sample(&control_regime, n_per_arm, seed, stream_base)?;
    let treated = model.sample(&treated_regime, n_per_arm, seed, stream_base + 1)?;
    let acts = |d: &Dataset| -> Result<u64> {
        Ok(d.count_matching(&[(model.action().to_string(), true)].into())? as u64)
    };
    let result = ExperimentResult::from_counts(
        control_regime,
        treated_regime,
        (acts(&control)?, n_per_arm as u64),
        (acts(&treated)?, n_per_arm as u64),
        alpha,
    )?;
    Ok((result, ArmData { control, treated }))
}

pub fn run_randomized(
    model: &TeleologicalModel,
    experiment: &InterferenceExperiment,
    n_per_arm: usize,
    seed: u64,
    alpha: f64,
) -> Result<ExperimentResult> {
    Ok(run_randomized_on_streams(model, experiment, n_per_arm, seed, 0, alpha)?.0)
}

/// Run every experiment of a plan; experiment `i` uses streams `2i` and `2i + 1`.
pub fn run_battery(
    model: &TeleologicalModel,
    experiments: &[InterferenceExperiment],
    n_per_arm: usize,
    seed: u64,
    alpha: f64,
) -> Result<Vec<(ExperimentResult, ArmData)>> {
    experiments
        .iter()
        .enumerate()
        .map(|(i, e)| run_randomized_on_streams(model, e, n_per_arm, seed, 2 * i as u64, alpha))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternConfig {
    pub min_support: usize,
    pub max_violations: usize,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            min_support: 1,
            max_violations: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternOutcome {
    pub pattern: Assignment,
    pub mode: PatternMode,
    pub count: usize,
    pub threshold: usize,
    pub passed: bool,
}

pub fn pattern_check(
    dataset: &Dataset,
    pattern: &Assignment,
    mode: PatternMode,
    config: PatternConfig,
) -> Result<PatternOutcome> {
    let count = dataset.count_matching(pattern)?;
    let (threshold, passed) = match mode {
        PatternMode::MustObserve => (config.min_support, count >= config.min_support),
        PatternMode::MustNotObserve => (config.max_violations, count <= config.max_violations),
    };
    Ok(PatternOutcome {
        pattern: pattern.clone(),
        mode,
        count,
        threshold,
        passed,
    })
}

/// Rows a forbidden pattern may still show when the agent falls back to its
/// base rate: `n * p_base` plus three binomial standard deviations.
pub fn base_rate_allowance(n: usize, p_base: f64) -> usize {
    let n = n as f64;
    (n * p_base + 3.0 * (n * p_base * (1.0 - p_base)).sqrt()).floor() as usize
}

/// Pattern check with the thresholds used for battery reports: must-observe
/// needs one row, must-not-observe tolerates the base-rate allowance.
pub fn battery_pattern_check(
    dataset: &Dataset,
    experiment: &InterferenceExperiment,
    p_base: f64,
) -> Result<PatternOutcome> {
    let config = PatternConfig {
        min_support: 1,
        max_violations: base_rate_allowance(dataset.len(), p_base),
    };
    pattern_check(dataset, &experiment.expected_pattern, experiment.mode, config)
}
