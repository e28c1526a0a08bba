use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by the solvers, diagnostics and I/O layers.
#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ElsError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("range error: {0}")]
    Range(String),

    /// A field became non-finite or exceeded the divergence guard.
    #[error("solver diverged at t = {time}: {reason}")]
    Divergence { time: f64, reason: String },

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("degenerate fit: {0}")]
    FitDegenerate(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl ElsError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        ElsError::Config(msg.into())
    }

    pub(crate) fn range(msg: impl Into<String>) -> Self {
        ElsError::Range(msg.into())
    }
}

impl From<std::io::Error> for ElsError {
    fn from(e: std::io::Error) -> Self {
        ElsError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ElsError>;
