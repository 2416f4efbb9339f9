use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("{n} sample spins exceed the cap of {max} (dimension 2^(N+2) <= 4096)")]
    DimensionCap { n: usize, max: usize },

    #[error("sample index {index} out of range 1..={n}")]
    SampleIndex { index: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("malformed program: {0}")]
    MalformedProgram(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("no peak: maximum deviation {deviation:.3e} below noise threshold {threshold:.3e}")]
    NoPeak { deviation: f64, threshold: f64 },

    #[error("no calibration variant satisfies both criteria\n{0}")]
    NoCalibration(String),

    #[error("empty scan result")]
    EmptyResult,

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
