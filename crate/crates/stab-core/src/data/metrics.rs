//! Evaluation metrics: accuracy for classification, MSE for regression.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StabError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Mse,
}

impl MetricKind {
    /// True when `candidate` beats `incumbent` in this metric's direction.
    pub fn improves(&self, candidate: f64, incumbent: f64) -> bool {
        match self {
            MetricKind::Accuracy => candidate > incumbent,
            MetricKind::Mse => candidate < incumbent,
        }
    }

    pub fn worst(&self) -> f64 {
        match self {
            MetricKind::Accuracy => f64::NEG_INFINITY,
            MetricKind::Mse => f64::INFINITY,
        }
    }
}

/// Predictions with aligned ground truth, both in original label units.
#[derive(Debug, Clone)]
pub enum EvalData {
    Classes { predicted: Vec<usize>, actual: Vec<usize> },
    Values { predicted: Vec<f64>, actual: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: MetricKind,
    pub value: f64,
    pub count: usize,
    /// Per-seed values when this report aggregates repeated evaluations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_seed: Vec<f64>,
}

pub fn evaluate(data: &EvalData) -> Result<EvalReport> {
    match data {
        EvalData::Classes { predicted, actual } => {
            if predicted.len() != actual.len() {
                return Err(StabError::Contract(format!(
                    "prediction/target length mismatch: {} vs {}",
                    predicted.len(),
                    actual.len()
                )));
            }
            let correct = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
            Ok(EvalReport {
                metric: MetricKind::Accuracy,
                value: correct as f64 / predicted.len().max(1) as f64,
                count: predicted.len(),
                per_seed: Vec::new(),
            })
        }
        EvalData::Values { predicted, actual } => {
            if predicted.len() != actual.len() {
                return Err(StabError::Contract(format!(
                    "prediction/target length mismatch: {} vs {}",
                    predicted.len(),
                    actual.len()
                )));
            }
            let mse = predicted
                .iter()
                .zip(actual)
                .map(|(p, a)| (p - a) * (p - a))
                .sum::<f64>()
                / predicted.len().max(1) as f64;
            Ok(EvalReport {
                metric: MetricKind::Mse,
                value: mse,
                count: predicted.len(),
                per_seed: Vec::new(),
            })
        }
    }
}
