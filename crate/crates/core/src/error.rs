//! Error types shared across the detection pipeline.

use std::path::PathBuf;

use thiserror::Error;

/// Coarse error category, used by callers to map failures to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Invalid configuration or scenario parameters.
    Config,
    /// Input file does not have the expected columns or layout.
    Schema,
    /// Sample stream violates ordering or value contracts.
    Stream,
    /// Filesystem failure.
    Io,
    /// Anything else.
    Internal,
}

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("stream error at line {line}: {message}")]
    Stream { line: u64, message: String },

    #[error("malformed row at line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("non-finite value for {what}")]
    NonFinite { what: &'static str },

    #[error("regressor has {got} entries, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("statistics undefined: {0}")]
    UndefinedStatistics(&'static str),

    #[error("unstable dynamics: spectral radius {radius:.4} is not below {limit}")]
    UnstableDynamics { radius: f64, limit: f64 },

    #[error("timestamp regressed from {previous} to {current}")]
    TimestampRegression { previous: f64, current: f64 },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            CoreError::Config(_) | CoreError::UnstableDynamics { .. } => ErrorCategory::Config,
            CoreError::Schema { .. } => ErrorCategory::Schema,
            CoreError::Stream { .. }
            | CoreError::Row { .. }
            | CoreError::NonFinite { .. }
            | CoreError::TimestampRegression { .. } => ErrorCategory::Stream,
            CoreError::Io { .. } => ErrorCategory::Io,
            CoreError::DimensionMismatch { .. } | CoreError::UndefinedStatistics(_) => {
                ErrorCategory::Internal
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
