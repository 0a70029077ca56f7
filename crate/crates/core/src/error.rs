use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A quantity fell outside the domain where the operation is defined.
    #[error("domain violation: {0}")]
    Domain(String),

    /// A document or value failed validation; `path` locates the field.
    #[error("invalid value at `{path}`: {message}")]
    Invalid { path: String, message: String },

    /// Generation fell outside the net-zero zone passed to the price solver.
    #[error(
        "aggregate generation {generation} is outside the net-zero zone [{d_plus}, {d_minus}] (tolerance {tol})"
    )]
    OutsideNetZeroZone {
        generation: f64,
        d_plus: f64,
        d_minus: f64,
        tol: f64,
    },

    #[error("member sets do not match: {0}")]
    MemberMismatch(String),

    #[error("line {line}: malformed row: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("line {line}: duplicate record for member `{member_id}` at {timestamp}")]
    DuplicateKey {
        line: u64,
        timestamp: String,
        member_id: String,
    },

    #[error("line {line}: timestamp {timestamp} precedes previous timestamp {previous}")]
    NonMonotoneTimestamp {
        line: u64,
        timestamp: String,
        previous: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl<E: std::fmt::Display> From<serde_path_to_error::Error<E>> for Error {
    fn from(err: serde_path_to_error::Error<E>) -> Self {
        let path = err.path().to_string();
        Error::Invalid {
            path,
            message: err.inner().to_string(),
        }
    }
}
