use std::path::PathBuf;

use crate::sam::Trajectory;

/// Errors raised by the integrators and the experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("state lives on basis {found} but the operation expects {expected}")]
    BasisMismatch { expected: String, found: String },

    #[error("size mismatch: expected {expected} values, got {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("index {index:?} is outside the basis")]
    IndexOutOfRange { index: (i64, i64) },

    #[error(
        "implicit macro step {step} failed to converge after {iterations} iterations (residual {residual:e})"
    )]
    StepFailure {
        step: usize,
        iterations: usize,
        residual: f64,
        partial: Option<Box<Trajectory>>,
    },

    #[error("trace needs at least 2 samples, got {0}")]
    TraceTooShort(usize),

    #[error("CFL guard violated: h*(N/2)^2 = {value} >= 2*pi")]
    Cfl { value: f64 },

    #[error("reference cache entry {path} is unusable: {reason}")]
    Cache { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
