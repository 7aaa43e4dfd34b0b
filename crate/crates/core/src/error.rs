use thiserror::Error;

use crate::protocol::TreeIssue;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("masses sum to {total} (deficit {deficit:+e}); input is not renormalized")]
    Normalization { total: f64, deficit: f64 },

    #[error("invalid probability mass {value} at index {index}")]
    InvalidMass { index: usize, value: f64 },

    #[error("unknown axis `{0}`")]
    UnknownAxis(String),

    #[error("input out of range: {0}")]
    OutOfRange(String),

    #[error("cannot condition on a zero-mass event: {0}")]
    ZeroMass(String),

    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("invalid protocol tree: {} issue(s), first: {}", .0.len(), .0.first().map(|i| i.to_string()).unwrap_or_default())]
    InvalidTree(Vec<TreeIssue>),

    #[error("unknown builtin protocol `{0}`")]
    UnknownProtocol(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("mode `paper` uses success probabilities near 2^(-50(i+1)) and cannot be simulated; use the exact evaluator (simulate_advantage_exact / pi1_exact)")]
    PaperModeUnsimulatable,

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
