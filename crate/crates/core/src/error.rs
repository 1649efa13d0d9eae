use thiserror::Error;

use crate::model::ClubState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("class {class} count {count} outside [0, {size}]")]
    StateOutOfBounds { class: usize, count: f64, size: u64 },

    #[error("total population is zero")]
    EmptyPopulation,

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        state: ClubState,
        residual: f64,
        iterations: usize,
    },

    #[error("trace has {len} rows, need at least warmup {warmup} + {min_rows} batch rows")]
    TraceTooShort {
        len: usize,
        warmup: usize,
        min_rows: usize,
    },

    #[error("{context}: {source}")]
    Sweep {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for numeric failures (as opposed to malformed input).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonConvergence { .. } => true,
            Error::Sweep { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
