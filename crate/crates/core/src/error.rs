use thiserror::Error;

use crate::graph::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph is not well formed ({} violation(s)); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidGraph(Vec<Violation>),

    #[error("{context}: need at least {required} samples, got {available}")]
    Underdetermined {
        context: String,
        required: usize,
        available: usize,
    },

    #[error("insufficient samples: need at least {required}, got {available}")]
    InsufficientSamples { required: usize, available: usize },

    #[error("output {target} is not attainable within the input box (attainable range [{lo}, {hi}])")]
    Unattainable { target: f64, lo: f64, hi: f64 },

    #[error("unresolved node `{0}`")]
    UnresolvedNode(String),

    #[error("algebraic loop through node `{0}`; it needs the fixed-point solver")]
    AlgebraicLoop(String),

    #[error("forward pass memo is missing or stale: {0}")]
    StaleMemo(String),

    #[error("missing spec for component `{0}`")]
    MissingSpec(String),

    #[error("spec for component `{component}` does not fit its kind: {reason}")]
    SpecMismatch { component: String, reason: String },

    #[error("no calibration error is defined for latent parameter `{0}`")]
    LatentParameter(String),

    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("record row {row}, column `{column}`: {reason}")]
    BadRecord {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("time grid is not strictly ascending at index {index}")]
    NonAscendingGrid { index: usize },

    #[error(transparent)]
    Parse(#[from] crate::io::ParseError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
