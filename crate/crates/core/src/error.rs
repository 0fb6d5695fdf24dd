//! Error types shared across the crate.
//!
//! The grid solver has its own error type carrying the last iterate; see
//! [`crate::solver::SolverError`].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("gauge domain violation: {0}")]
    GaugeDomain(String),

    #[error("evaluation produced a non-finite value: {0}")]
    NonFinite(String),

    #[error("stencil crosses the mask at node ({0}, {1})")]
    Stencil(usize, usize),

    #[error("grid cannot resolve the request: {0}")]
    Resolution(String),

    #[error("projection onto the zero level set failed: {0}")]
    Projection(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
