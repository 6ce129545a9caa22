use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("category `{0}` has no consumption mass")]
    ZeroColumn(String),

    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("column `{column}` is {:.1}% missing (limit {:.1}%)", .fraction * 100.0, .limit * 100.0)]
    TooMuchMissing {
        column: String,
        fraction: f64,
        limit: f64,
    },

    #[error(
        "design matrix is rank deficient: column `{0}` is linearly dependent on earlier columns"
    )]
    RankDeficient(String),

    #[error("constant input: `{0}`")]
    Constant(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("user `{user}`: {source}")]
    User {
        user: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn parse(path: &std::path::Path, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
