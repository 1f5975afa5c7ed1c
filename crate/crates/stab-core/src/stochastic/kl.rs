//! KL divergence against a uniform discrete prior, plus the per-pass
//! accumulator that collects every competition's contribution.

use crate::error::{Result, StabError};
use crate::tensor::{Graph, TensorId};

/// KL(q || uniform(U)) = sum_i q_i log(q_i * U), with 0 log 0 taken as 0.
/// The result is clamped at zero: it is non-negative by Gibbs' inequality
/// and only rounding can push it below.
pub fn kl_to_uniform(q: &[f64]) -> Result<f64> {
    if q.is_empty() {
        return Err(StabError::Contract("kl_to_uniform: empty distribution".into()));
    }
    if q.iter().any(|&v| v < 0.0) {
        return Err(StabError::Contract("kl_to_uniform: negative probability".into()));
    }
    let total: f64 = q.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(StabError::Contract(format!(
            "kl_to_uniform: probabilities sum to {total}, not 1"
        )));
    }
    let u = q.len() as f64;
    let kl: f64 = q.iter().filter(|&&v| v > 0.0).map(|&v| v * (v * u).ln()).sum();
    Ok(kl.max(0.0))
}

/// Running sum of the KL terms produced during one forward pass. The total
/// is kept in-graph so the regularizer stays differentiable; it is the sum
/// of individually non-negative terms. One accumulator per pass.
#[derive(Debug, Default)]
pub struct KlAccumulator {
    total: Option<TensorId>,
    term_count: usize,
}

impl KlAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold in an in-graph scalar that is the sum of `terms` individual
    /// KL contributions.
    pub fn add(&mut self, graph: &mut Graph, partial: TensorId, terms: usize) -> Result<()> {
        debug_assert_eq!(graph.tensor(partial).numel(), 1);
        self.total = Some(match self.total {
            Some(t) => graph.add(t, partial)?,
            None => partial,
        });
        self.term_count += terms;
        Ok(())
    }

    /// In-graph total, when any term was accumulated.
    pub fn total_id(&self) -> Option<TensorId> {
        self.total
    }

    pub fn total_value(&self, graph: &Graph) -> f64 {
        self.total.map(|id| graph.value(id)).unwrap_or(0.0)
    }

    pub fn term_count(&self) -> usize {
        self.term_count
    }
}

/// In-graph sum of KL(q_row || uniform) over every `width`-sized row of
/// `probs`: sum(q log q) + rows * log(width). Rows must already be softmax
/// outputs (strictly positive), so the log is domain-safe.
pub fn kl_rows_to_uniform(
    graph: &mut Graph,
    probs: TensorId,
    width: usize,
) -> Result<TensorId> {
    let rows = graph.tensor(probs).numel() / width;
    let logq = graph.log(probs)?;
    let qlogq = graph.mul(probs, logq)?;
    let neg_entropy = graph.sum(qlogq)?;
    let shift = graph.scalar(rows as f64 * (width as f64).ln());
    graph.add(neg_entropy, shift)
}
