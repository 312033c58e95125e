use std::path::PathBuf;

use thiserror::Error;

/// A row-level problem found while reading a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the source file (the header is line 1).
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("utility must be strictly positive, got {0}")]
    NonPositiveUtility(f64),

    #[error("admission probability must lie in [0, 1], got {0}")]
    ProbabilityOutOfRange(f64),

    #[error("noise argument {x} lies below the concave domain anchor {anchor}")]
    OutsideConcaveDomain { x: f64, anchor: f64 },

    #[error("brute-force guard exceeded: {offers} offers, budget {budget} (limits 12 and 5)")]
    GuardExceeded { offers: usize, budget: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("need at least 2 programs in common, found {0}")]
    TooFewCommon(usize),

    #[error("rank correlation undefined: {0}")]
    Degenerate(String),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("{} row error(s); first: {}", .0.len(), .0[0])]
    Rows(Vec<RowError>),

    #[error("dataset failed validation with {0} violation(s)")]
    Invalid(usize),

    #[error("invalid market config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
