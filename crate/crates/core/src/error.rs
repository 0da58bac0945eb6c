use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the regression toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symmetric (max relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite after jitter ladder {attempted:?}")]
    Singular { attempted: Vec<f64> },

    #[error("factorization failed at query point {point:?}")]
    QueryFailed {
        point: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("non-numeric cell {value:?} at row {row}, column {column}")]
    Parse {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("row {row} has {found} cells, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("missing target column {0:?}")]
    MissingColumn(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
