use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the feature-importance pipeline.
#[derive(Debug, Error)]
pub enum QfiError {
    /// Malformed arguments: shape mismatches, out-of-range indices, bad parameters.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("capacity error: {n_qubits} qubits exceeds the dense-simulation limit of {max}")]
    Capacity { n_qubits: usize, max: usize },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("degenerate feature {feature}: all values equal")]
    DegenerateFeature { feature: usize },

    #[error("degenerate normalization: importance vector has no positive mass")]
    DegenerateNormalization,

    #[error("optimizer aborted at iteration {iteration}: {reason}")]
    Optimizer { iteration: usize, reason: String },

    #[error("ingestion error in {path}: {message}")]
    Ingestion { path: PathBuf, message: String },

    #[error("tier {tier} failed")]
    Tier {
        tier: usize,
        #[source]
        source: Box<QfiError>,
    },

    #[error("io error at {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl QfiError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        QfiError::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        QfiError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than a failure while running.
    pub fn is_input_error(&self) -> bool {
        match self {
            QfiError::Validation(_)
            | QfiError::Capacity { .. }
            | QfiError::DegenerateLabels(_)
            | QfiError::DegenerateFeature { .. }
            | QfiError::DegenerateNormalization
            | QfiError::Ingestion { .. } => true,
            QfiError::Tier { source, .. } => source.is_input_error(),
            QfiError::Optimizer { .. } | QfiError::Io { .. } | QfiError::Serde(_) => false,
        }
    }
}

impl From<serde_json::Error> for QfiError {
    fn from(e: serde_json::Error) -> Self {
        QfiError::Serde(e.to_string())
    }
}

impl From<csv::Error> for QfiError {
    fn from(e: csv::Error) -> Self {
        QfiError::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, QfiError>;
