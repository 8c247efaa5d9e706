use thiserror::Error;

use crate::graph::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("invalid graph:\n{0}")]
    InvalidGraph(ValidationReport),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("`{effect}` is not a strict descendant of `{action}`")]
    NotADescendant { action: String, effect: String },

    #[error("conditioning event has zero probability")]
    ZeroProbability,

    #[error("{count} variables exceed the enumeration cap of {cap}")]
    TooManyVariables { count: usize, cap: usize },

    #[error("regime clamps the action variable `{0}`")]
    ActionClamped(String),

    #[error("variable `{0}` is clamped more than once")]
    DuplicateClamp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("intention set is empty")]
    EmptyIntention,

    #[error("invalid lever `{lever}` for `{target}`: {reason}")]
    InvalidLever {
        target: String,
        lever: String,
        reason: String,
    },

    #[error("invalid regime label `{0}`")]
    RegimeLabel(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("regime column `{0}` has fewer than two distinct values")]
    SingleRegime(String),

    #[error("regime `{0}` is absent from the data")]
    MissingRegime(String),

    #[error("adjustment set contains the action variable `{0}`")]
    AdjustmentContainsAction(String),

    #[error("hypothesis enumeration yields {count} sets, above the cap of {cap}")]
    TooManyHypotheses { count: u128, cap: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
