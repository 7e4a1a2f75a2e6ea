use thiserror::Error;

use crate::conic::SolveStatus;

/// Errors produced across the localization pipeline.
#[derive(Debug, Error)]
pub enum SlatError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("conic solver finished with status {status:?}: {detail}")]
    Solver { status: SolveStatus, detail: String },

    #[error("linear system is singular beyond ridge rescue: {0}")]
    Singular(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SlatError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        SlatError::Config(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        SlatError::Dimension(msg.into())
    }

    /// True when the error originates in a numerical solver rather than user input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            SlatError::Solver { .. } | SlatError::Singular(_) | SlatError::DegenerateGeometry(_)
        )
    }
}

pub type Result<T, E = SlatError> = std::result::Result<T, E>;
