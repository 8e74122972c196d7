//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DuelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("instance too large: {0}")]
    Size(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unbounded: {0}")]
    Unbounded(String),

    #[error("oracle contract violation: {0}")]
    OracleContract(String),
}

pub type Result<T> = std::result::Result<T, DuelError>;
