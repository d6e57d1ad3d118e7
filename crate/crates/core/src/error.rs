use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the projection toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {context} at row {row}, column {column}")]
    NonFinite {
        context: &'static str,
        row: usize,
        column: usize,
    },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("optimization diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("parse error in {path}, line {line}, column {column}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        detail: String,
    },

    #[error("invalid format: {0}")]
    Format(String),

    #[error("dataset fingerprint mismatch: archive has {archive}, dataset has {dataset}")]
    FingerprintMismatch { archive: String, dataset: String },

    #[error("h = {h} is outside the trained range [{lo}, {hi}] for '{name}'; extrapolation was not requested")]
    Extrapolation { name: String, h: f64, lo: f64, hi: f64 },

    #[error("engine failed at h = {h}: {source}")]
    Engine {
        h: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("I/O error: {0}")]
    Stream(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable class name, used by the CLI for exit codes.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Io { .. } | Error::Stream(_) => "io",
            Error::Parse { .. } | Error::Format(_) | Error::FingerprintMismatch { .. } => "format",
            Error::InvalidConfig(_) | Error::InvalidArgument(_) => "config",
            Error::InvalidHyperparameter(_) | Error::Extrapolation { .. } => "hyperparameter",
            Error::DimensionMismatch { .. } | Error::NonFinite { .. } | Error::InvalidData(_) => {
                "data"
            }
            Error::NonFiniteLoss { .. } | Error::Diverged { .. } => "numeric",
            Error::Engine { source, .. } => source.class(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
