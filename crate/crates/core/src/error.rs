use thiserror::Error;

/// Errors raised by samplers, bound calculators and the verification harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fidelity constraint violated: delta_Q = {delta_q} must lie in (0, {cap})")]
    ConstraintViolation { delta_q: f64, cap: f64 },

    #[error("sink failed after {emitted} elements: {source}")]
    Sink {
        emitted: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },

    #[error("non-finite value in input at index {0}")]
    NonFinite(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
