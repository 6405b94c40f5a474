//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the reconstruction pipeline.
#[derive(Error, Debug)]
pub enum Error {
    /// Rejected input data (non-finite coordinates, empty point sets, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Invalid configuration or hyper-parameter combination.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed file content; `offset` is the byte position where parsing failed.
    #[error("parse error in {path} at byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    /// A covariance matrix with an eigenvalue below the PSD tolerance.
    #[error("covariance is not positive semi-definite (eigenvalue {0:.3e})")]
    InvalidCovariance(f64),

    /// An I/O failure, annotated with the path it occurred on.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }
}
