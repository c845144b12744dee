//! Crate-wide error type.

use thiserror::Error;

/// Errors raised across the modelling, sampling and preprocessing layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller passed an argument outside the documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Matrix or vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A computation produced a non-finite value it cannot recover from.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Step-size / mass adaptation never stabilised.
    #[error("adaptation failure: {0}")]
    AdaptationFailure(String),

    /// Every initialization of a run failed.
    #[error("run failure: {0}")]
    RunFailure(String),

    /// A tabular input could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Sample IDs do not align across input files.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// A preprocessing step would leave a degenerate dataset behind.
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// The confound matrix is rank deficient.
    #[error("collinear confounds: {0}")]
    Collinearity(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
