//! Common surface of every trained classifier the explainers can inspect.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{QfiError, Result};

/// Model families the pipeline can train per tier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Qsvc,
    Vqc,
    Gbdt,
}

impl ModelKind {
    pub fn is_quantum(self) -> bool {
        matches!(self, ModelKind::Qsvc | ModelKind::Vqc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Qsvc => "qsvc",
            ModelKind::Vqc => "vqc",
            ModelKind::Gbdt => "gbdt",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = QfiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qsvc" | "qsvm" => Ok(ModelKind::Qsvc),
            "vqc" => Ok(ModelKind::Vqc),
            "gbdt" | "xgboost" => Ok(ModelKind::Gbdt),
            other => Err(QfiError::validation(format!("unknown model '{other}'"))),
        }
    }
}

/// A fitted binary classifier over a fixed feature width.
pub trait Classifier: Sync {
    fn n_features(&self) -> usize;

    /// Real-valued output used by ALE and PDP: a decision value or a probability.
    fn scores(&self, x: ArrayView2<f64>) -> Result<Vec<f64>>;

    /// Hard labels in {0, 1}.
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<u8>>;

    fn accuracy(&self, x: ArrayView2<f64>, y: &[u8]) -> Result<f64> {
        let pred = self.predict(x)?;
        if pred.len() != y.len() || pred.is_empty() {
            return Err(QfiError::validation(format!(
                "accuracy over {} predictions and {} labels",
                pred.len(),
                y.len()
            )));
        }
        let hits = pred.iter().zip(y).filter(|(p, t)| p == t).count();
        Ok(hits as f64 / y.len() as f64)
    }
}

pub(crate) fn check_width(x: ArrayView2<f64>, expected: usize) -> Result<()> {
    if x.ncols() != expected {
        return Err(QfiError::validation(format!(
            "input has {} features, model expects {expected}",
            x.ncols()
        )));
    }
    Ok(())
}
