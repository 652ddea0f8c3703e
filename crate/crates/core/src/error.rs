use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("syntax error at offset {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("unsupported feature: {0}")]
    Unsupported(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("capacity exceeded: private size {used} > capacity {capacity}")]
    Capacity { used: u64, capacity: u64 },

    #[error("placement coverage error: {0}")]
    Coverage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("missing statistics for {0}")]
    MissingStats(String),

    #[error("unmappable predicate: {0}")]
    Unmappable(String),

    #[error("crypto error: {0}")]
    Crypto(String),

    #[error("planning error: {0}")]
    Planning(String),

    #[error("execution error: {0}")]
    Execution(String),

    #[error("placement mismatch: plan compiled for {plan}, stores loaded for {stores}")]
    PlacementMismatch { plan: String, stores: String },

    #[error("instance too large for exhaustive search: {0} attributes (limit {1})")]
    InstanceTooLarge(usize, usize),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Coarse failure class for diagnostics and exit codes.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Validation(_)
            | Error::Capacity { .. }
            | Error::Coverage(_)
            | Error::Domain(_)
            | Error::Calibration(_) => "config",
            Error::Parse(_) | Error::MissingStats(_) | Error::Io { .. } | Error::Csv(_) | Error::Json(_) => "data",
            Error::Syntax { .. }
            | Error::Unsupported(_)
            | Error::Unmappable(_)
            | Error::Planning(_)
            | Error::InstanceTooLarge(..) => "planning",
            Error::Crypto(_) | Error::Execution(_) | Error::PlacementMismatch { .. } => "execution",
        }
    }
}
