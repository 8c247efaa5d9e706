//! Teleological inference on binary structural causal models.
//!
//! Given a causal DAG, an action variable and a hypothesized intended effect,
//! the crate classifies the action's other effects, plans interference
//! experiments that neutralize them, runs those experiments on a simulated
//! agent or reads them off observational data, and scores which intention
//! sets explain the agent's behaviour.

pub mod agent;
pub mod classify;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod infer;
pub mod io;
pub mod lab;
pub mod observe;
pub mod scm;
pub mod stats;

pub use error::{Error, Result};
