//! Shared error type for the modeling library.

use thiserror::Error;

/// Errors surfaced by model construction, likelihood evaluation, and fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite: {0}")]
    NonPositiveDefinite(String),

    /// A fitter failed to converge or a sampler produced a degenerate run.
    #[error("divergence: {0}")]
    Divergence(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn non_pd(msg: impl Into<String>) -> Self {
        Error::NonPositiveDefinite(msg.into())
    }
}
