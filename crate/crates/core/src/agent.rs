//! An action variable that "listens to" its intended effects.
//!
//! Binding an [`AgentPolicy`] replaces the action's mechanism: under a regime
//! the agent acts with probability `p_act` (times any cause modifiers) when
//! every intended effect is still servable, and with `p_base` otherwise.
//! Servability of `A = a` is the interventional contrast
//! `P(A=a | do(action=1)) - P(A=a | do(action=0))` in the regime-mutilated
//! graph, compared against `theta`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    check_intentions, row_index, row_values, Assignment, CausalGraph, Intention, Variable,
};
use crate::scm::{self, ClampKind, Dataset, Regime};

pub const DEFAULT_P_ACT: f64 = 0.8;
pub const DEFAULT_P_BASE: f64 = 0.05;
pub const DEFAULT_THETA: f64 = 0.1;

/// Multiplies `p_act` when the action's parent `variable` takes `value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseModifier {
    pub variable: String,
    pub value: bool,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPolicy {
    pub intention: BTreeSet<Intention>,
    pub p_act: f64,
    pub p_base: f64,
    pub theta: f64,
    #[serde(default)]
    pub cause_modifiers: Vec<CauseModifier>,
}

impl AgentPolicy {
    pub fn new(
        intention: impl IntoIterator<Item = Intention>,
        p_act: f64,
        p_base: f64,
        theta: f64,
    ) -> Result<Self> {
        let policy = AgentPolicy {
            intention: intention.into_iter().collect(),
            p_act,
            p_base,
            theta,
            cause_modifiers: Vec::new(),
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn with_defaults(intention: impl IntoIterator<Item = Intention>) -> Result<Self> {
        AgentPolicy::new(intention, DEFAULT_P_ACT, DEFAULT_P_BASE, DEFAULT_THETA)
    }

    pub fn with_modifier(mut self, variable: impl Into<String>, value: bool, factor: f64) -> Result<Self> {
        self.cause_modifiers.push(CauseModifier {
            variable: variable.into(),
            value,
            factor,
        });
        self.validate()?;
        Ok(self)
    }

    /// Same rates and modifiers, different intention set.
    pub fn retarget(&self, intention: impl IntoIterator<Item = Intention>) -> Result<Self> {
        let mut p = self.clone();
        p.intention = intention.into_iter().collect();
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.intention.is_empty() {
            return Err(Error::EmptyIntention);
        }
        if !(0.0 <= self.p_base && self.p_base < self.p_act && self.p_act <= 1.0) {
            return Err(Error::InvalidPolicy(format!(
                "need 0 <= p_base < p_act <= 1, got p_base={} p_act={}",
                self.p_base, self.p_act
            )));
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(Error::InvalidPolicy(format!("theta must be >= 0, got {}", self.theta)));
        }
        for m in &self.cause_modifiers {
            if !(m.factor >= 0.0 && m.factor.is_finite()) {
                return Err(Error::InvalidPolicy(format!(
                    "modifier factor for {}={} must be finite and >= 0, got {}",
                    m.variable, m.value as u8, m.factor
                )));
            }
        }
        Ok(())
    }

    /// Act probability when servable, for the given parent assignment.
    fn servable_rate(&self, parents: &[String], values: &[bool]) -> f64 {
        let factor: f64 = self
            .cause_modifiers
            .iter()
            .filter(|m| {
                parents
                    .iter()
                    .position(|p| *p == m.variable)
                    .is_some_and(|i| values[i] == m.value)
            })
            .map(|m| m.factor)
            .product();
        (self.p_act * factor).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub intention: Intention,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Servability {
    pub servable: bool,
    pub margins: Vec<Margin>,
}

/// Whether acting still raises every intended effect by at least `theta`
/// under `regime`. The regime must leave the action free.
pub fn servable<'a>(
    graph: &CausalGraph,
    action: &str,
    intention: impl IntoIterator<Item = &'a Intention>,
    theta: f64,
    regime: &Regime,
) -> Result<Servability> {
    let intention: Vec<&Intention> = intention.into_iter().collect();
    check_intentions(graph, action, intention.iter().copied())?;
    if regime.clamp(action).is_some() {
        return Err(Error::ActionClamped(action.to_string()));
    }
    let under = scm::mutilate(graph, regime)?;
    let on = scm::joint_enumerate(&scm::mutilate(&under, &Regime::do_(action, true))?)?;
    let off = scm::joint_enumerate(&scm::mutilate(&under, &Regime::do_(action, false))?)?;
    let margins = intention
        .into_iter()
        .map(|i| {
            let event: Assignment = [(i.variable.clone(), i.target)].into();
            Ok(Margin {
                intention: i.clone(),
                margin: on.marginal(&event)? - off.marginal(&event)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Servability {
        servable: margins.iter().all(|m| m.margin >= theta),
        margins,
    })
}

/// A causal graph whose action variable is driven by an agent policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TeleologicalModel {
    base: CausalGraph,
    action: String,
    policy: AgentPolicy,
}

pub fn bind_agent(graph: &CausalGraph, action: &str, policy: AgentPolicy) -> Result<TeleologicalModel> {
    policy.validate()?;
    check_intentions(graph, action, &policy.intention)?;
    let parents = &graph.variable(action)?.parents;
    for m in &policy.cause_modifiers {
        if !parents.contains(&m.variable) {
            return Err(Error::InvalidPolicy(format!(
                "modifier variable `{}` is not a parent of `{action}`",
                m.variable
            )));
        }
    }
    Ok(TeleologicalModel {
        base: graph.clone(),
        action: action.to_string(),
        policy,
    })
}

impl TeleologicalModel {
    /// The graph with the action's original mechanism.
    pub fn base(&self) -> &CausalGraph {
        &self.base
    }

    pub fn action(&self) -> &str {
        &self.action
    }

    pub fn policy(&self) -> &AgentPolicy {
        &self.policy
    }

    pub fn servability(&self, regime: &Regime) -> Result<Servability> {
        servable(&self.base, &self.action, &self.policy.intention, self.policy.theta, regime)
    }

    /// The regime-mutilated graph with the action's CPT replaced by the policy.
    pub fn effective_graph(&self, regime: &Regime) -> Result<CausalGraph> {
        self.effective_graph_observing(regime, &[])
    }

    /// Like [`effective_graph`](Self::effective_graph), but the agent also sees
    /// the realized values of `circumstances` before acting and judges
    /// servability as if those values were clamped. Circumstances become extra
    /// parents of the action, so they must not be descendants of it.
    pub fn effective_graph_observing(&self, regime: &Regime, circumstances: &[String]) -> Result<CausalGraph> {
        if regime.clamp(&self.action).is_some() {
            return Err(Error::ActionClamped(self.action.clone()));
        }
        let mutilated = scm::mutilate(&self.base, regime)?;
        let original = self.base.variable(&self.action)?;
        let parents = &original.parents;

        let mut extra: Vec<String> = Vec::new();
        for c in circumstances {
            if c == &self.action || self.base.is_strict_descendant(&self.action, c)? {
                return Err(Error::InvalidArgument(format!(
                    "circumstance `{c}` is not a non-descendant of `{}`",
                    self.action
                )));
            }
            if !parents.contains(c) && !extra.contains(c) {
                extra.push(c.clone());
            }
        }

        // Servability for each assignment of the circumstance variables.
        let mut servable_by_circumstance = Vec::with_capacity(1 << circumstances.len());
        for row in 0..1usize << circumstances.len() {
            let values = row_values(row, circumstances.len());
            let mut r = regime.clone();
            for (c, &v) in circumstances.iter().zip(&values) {
                if r.clamp(c).is_none() {
                    r.insert(c.clone(), v, ClampKind::Interference)?;
                }
            }
            servable_by_circumstance.push(self.servability(&r)?.servable);
        }

        let all_parents: Vec<String> = parents.iter().chain(&extra).cloned().collect();
        let k = all_parents.len();
        let circumstance_pos: Vec<usize> = circumstances
            .iter()
            .map(|c| all_parents.iter().position(|p| p == c).expect("circumstance is a parent"))
            .collect();
        let cpt: Vec<f64> = (0..1usize << k)
            .map(|row| {
                let values = row_values(row, k);
                let key: Vec<bool> = circumstance_pos.iter().map(|&i| values[i]).collect();
                if servable_by_circumstance[row_index(&key)] {
                    self.policy.servable_rate(&all_parents, &values)
                } else {
                    self.policy.p_base
                }
            })
            .collect();

        let variables = mutilated
            .into_variables()
            .into_iter()
            .map(|v| {
                if v.name == self.action {
                    Variable {
                        name: v.name,
                        parents: all_parents.clone(),
                        cpt: cpt.clone(),
                    }
                } else {
                    v
                }
            })
            .collect();
        CausalGraph::new(variables)
    }

    /// Rows generated under `regime`, labeled with the regime.
    pub fn sample(&self, regime: &Regime, n: usize, seed: u64, stream: u64) -> Result<Dataset> {
        let g = self.effective_graph(regime)?;
        Ok(scm::sample_labeled(&g, n, seed, stream, &regime.label()))
    }
}

/// Exact `P(action = 1)` under the policy and `regime`.
pub fn agent_action_rate(model: &TeleologicalModel, regime: &Regime) -> Result<f64> {
    agent_action_rate_given(model, regime, &Assignment::new())
}

/// Exact `P(action = 1 | given)` under the policy and `regime`.
pub fn agent_action_rate_given(model: &TeleologicalModel, regime: &Regime, given: &Assignment) -> Result<f64> {
    let g = model.effective_graph(regime)?;
    let event: Assignment = [(model.action.clone(), true)].into();
    scm::query(&g, &event, given)
}
