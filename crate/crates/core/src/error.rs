use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid test point: {0}")]
    InvalidTestPoint(#[from] TestPointError),

    #[error("no valid test point in the domain ({0})")]
    NoValidTestPoint(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

/// Reason a test point cannot be used to evaluate a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TestPointError {
    #[error("test point is zero")]
    Zero,
    #[error("shifted prior support does not overlap the prior support")]
    OutsideDomain,
    #[error("closed-form denominator is degenerate")]
    DegenerateDenominator,
    #[error("test point dimension does not match the model")]
    Dimension,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
