use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HnpError>;

#[derive(Debug, Error)]
pub enum HnpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no feasible rank: (1 - {alpha})^{n} exceeds delta = {delta}; sample too small")]
    NoFeasibleRank { n: usize, alpha: f64, delta: f64 },

    #[error(
        "infeasible split for class {class}: {available} threshold observations, at least {required} required"
    )]
    InfeasibleSplit {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl HnpError {
    /// Stable machine-readable code, used in CLI error objects.
    pub fn code(&self) -> &'static str {
        match self {
            HnpError::InvalidArgument(_) => "invalid_argument",
            HnpError::NoFeasibleRank { .. } => "no_feasible_rank",
            HnpError::InfeasibleSplit { .. } => "infeasible_split",
            HnpError::DimensionMismatch { .. } => "dimension_mismatch",
            HnpError::Parse { .. } => "parse_error",
            HnpError::Io { .. } => "io_error",
            HnpError::Numerical(_) => "numerical_failure",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        HnpError::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HnpError::Io {
            path: path.into(),
            source,
        }
    }
}
