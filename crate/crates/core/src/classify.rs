//! Partition of an action's effects relative to a hypothesized intended effect.
//!
//! - mediating: strictly between the action and the hypothesized effect
//! - further: downstream of the hypothesized effect
//! - parallel: every other effect of the action
//!
//! Mediating status wins over the other two; a descendant of the hypothesized
//! effect that also hangs off a mediator is further.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CausalGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectClass {
    Mediating,
    Further,
    Parallel,
    Hypothesized,
    NotAnEffect,
}

impl EffectClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EffectClass::Mediating => "mediating",
            EffectClass::Further => "further",
            EffectClass::Parallel => "parallel",
            EffectClass::Hypothesized => "hypothesized",
            EffectClass::NotAnEffect => "not an effect",
        }
    }
}

impl fmt::Display for EffectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectClassification {
    pub action: String,
    pub hypothesized: String,
    pub mediating: BTreeSet<String>,
    pub further: BTreeSet<String>,
    pub parallel: BTreeSet<String>,
}

impl EffectClassification {
    pub fn class_of(&self, v: &str) -> EffectClass {
        if v == self.hypothesized {
            EffectClass::Hypothesized
        } else if self.mediating.contains(v) {
            EffectClass::Mediating
        } else if self.further.contains(v) {
            EffectClass::Further
        } else if self.parallel.contains(v) {
            EffectClass::Parallel
        } else {
            EffectClass::NotAnEffect
        }
    }

    /// Every strict descendant of the action, hypothesized effect included.
    pub fn effects(&self) -> BTreeSet<String> {
        let mut all: BTreeSet<String> = self
            .mediating
            .iter()
            .chain(&self.further)
            .chain(&self.parallel)
            .cloned()
            .collect();
        all.insert(self.hypothesized.clone());
        all
    }
}

pub fn classify_effects(graph: &CausalGraph, action: &str, hypothesized: &str) -> Result<EffectClassification> {
    let a = graph.index_of(action)?;
    let h = graph.index_of(hypothesized)?;
    let from_action = graph.descendant_mask(a);
    if a == h || !from_action[h] {
        return Err(Error::NotADescendant {
            action: action.to_string(),
            effect: hypothesized.to_string(),
        });
    }
    let to_hypothesized = graph.ancestor_mask(h);
    let from_hypothesized = graph.descendant_mask(h);

    let mut out = EffectClassification {
        action: action.to_string(),
        hypothesized: hypothesized.to_string(),
        mediating: BTreeSet::new(),
        further: BTreeSet::new(),
        parallel: BTreeSet::new(),
    };
    for v in 0..graph.len() {
        if v == a || v == h || !from_action[v] {
            continue;
        }
        let name = graph.name(v).to_string();
        if to_hypothesized[v] {
            out.mediating.insert(name);
        } else if from_hypothesized[v] {
            out.further.insert(name);
        } else {
            out.parallel.insert(name);
        }
    }
    Ok(out)
}

pub fn classify_variable(classification: &EffectClassification, v: &str) -> EffectClass {
    classification.class_of(v)
}

/// Common ancestors of `action` and `effect`, excluding both.
pub fn confounding_causes(graph: &CausalGraph, action: &str, effect: &str) -> Result<BTreeSet<String>> {
    let a = graph.index_of(action)?;
    let e = graph.index_of(effect)?;
    let from_a = graph.ancestor_mask(a);
    let from_e = graph.ancestor_mask(e);
    Ok((0..graph.len())
        .filter(|&v| v != a && v != e && from_a[v] && from_e[v])
        .map(|v| graph.name(v).to_string())
        .collect())
}

/// Directed paths that justify a variable's class.
pub fn justifying_paths(
    graph: &CausalGraph,
    classification: &EffectClassification,
    v: &str,
) -> Result<Vec<Vec<String>>> {
    let c = classification;
    Ok(match c.class_of(v) {
        EffectClass::Mediating => graph
            .directed_paths(&c.action, &c.hypothesized)?
            .into_iter()
            .filter(|p| p.iter().any(|x| x == v))
            .collect(),
        EffectClass::Further => graph.directed_paths(&c.hypothesized, v)?,
        EffectClass::Parallel | EffectClass::Hypothesized => graph.directed_paths(&c.action, v)?,
        EffectClass::NotAnEffect => Vec::new(),
    })
}
