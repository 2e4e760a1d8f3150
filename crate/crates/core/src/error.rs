use std::path::PathBuf;

/// Errors raised by table construction, evaluation and the experiment drivers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("limit {limit} exceeds the supported maximum {max}")]
    LimitTooLarge { limit: usize, max: usize },

    #[error("128-bit overflow while computing {stage}")]
    Overflow { stage: &'static str },

    #[error("{what} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("table too short: need limit >= {need}, have {have}")]
    TableTooShort { need: usize, have: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-positive value {value} at index {index} cannot be log-transformed")]
    NonPositive { index: usize, value: f64 },

    #[error("quadrature did not converge: last refinement changed the result by {change:e}")]
    NonConvergence { change: f64 },

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("corrupt cache file {path}: {reason}")]
    CacheCorrupt { path: PathBuf, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn out_of_range(what: &'static str, value: f64, lo: f64, hi: f64) -> Error {
    Error::OutOfRange { what, value, lo, hi }
}
