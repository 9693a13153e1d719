use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a structural invariant (lengths, signs, flags).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A fitting or likelihood operation was handed a dataset without events.
    #[error("dataset contains no observed events")]
    NoEvents,

    /// A vector or matrix has the wrong length along some axis.
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },

    /// A configuration value is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An objective or input produced a non-finite value.
    #[error("non-finite value in {what} at {at}")]
    NonFinite { what: String, at: f64 },

    /// Numerical failure inside the coordinate-ascent loop.
    #[error("numerical failure at iteration {iteration}, coordinate {coordinate}: {source}")]
    Fit {
        iteration: usize,
        coordinate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the arithmetic rather than by the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Fit { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
