use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("multiplier search did not converge after {iterations} iterations (|sum - 1| = {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("bound violation in space {space}: {what} {observed} exceeds declared bound {bound}")]
    BoundViolation {
        space: usize,
        what: &'static str,
        observed: f64,
        bound: f64,
    },

    #[error("example stream exhausted: client {client} has {available} examples, round {round} requested")]
    StreamExhausted {
        client: usize,
        round: usize,
        available: usize,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("target column {wanted:?} not found; available columns: {available:?}")]
    MissingColumn { wanted: String, available: Vec<String> },

    #[error("malformed frame: {0}")]
    Frame(String),

    #[error("i/o error on {path}: {source}")]
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

    /// Short machine-readable tag used by the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Convergence { .. } => "convergence",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Protocol(_) => "protocol",
            Error::BoundViolation { .. } => "bound_violation",
            Error::StreamExhausted { .. } => "stream_exhausted",
            Error::Parse { .. } => "parse",
            Error::MissingColumn { .. } => "missing_column",
            Error::Frame(_) => "frame",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
