//! Model hyperparameters and task definition.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StabError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TaskKind {
    Classification { classes: usize },
    Regression,
}

impl TaskKind {
    pub fn output_width(&self) -> usize {
        match self {
            TaskKind::Classification { classes } => *classes,
            TaskKind::Regression => 1,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, TaskKind::Classification { .. })
    }
}

/// Architecture and sampling hyperparameters. The variant flags (stochastic,
/// parallel branch, attention bias) are consistent across every layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding width d.
    pub d: usize,
    /// Encoder depth.
    pub depth: usize,
    pub heads: usize,
    pub dropout: f64,
    /// LWTA block size U.
    pub u: usize,
    /// Mixture embedding components J.
    pub j: usize,
    /// Gumbel-Softmax temperature used in train mode.
    pub t_train: f64,
    /// Temperature used in infer mode (near-hard).
    pub t_infer: f64,
    /// Samples per training step.
    pub n_train: usize,
    /// Samples for Bayesian-averaged inference.
    pub n_infer: usize,
    pub task: TaskKind,
    /// Stochastic competition elements active (LWTA sampling, mixture
    /// selection, MC-dropout inference).
    pub stochastic: bool,
    /// Parallel aggregation branch present in each layer.
    pub parallel: bool,
    /// Learnable attention-logit bias present in each layer.
    pub attn_bias: bool,
}

impl ModelConfig {
    /// Recommended defaults; callers override d/depth/dropout per dataset.
    pub fn defaults(task: TaskKind) -> Self {
        ModelConfig {
            d: 32,
            depth: 2,
            heads: 8,
            dropout: 0.1,
            u: 2,
            j: 16,
            t_train: 0.69,
            t_infer: 0.01,
            n_train: 1,
            n_infer: 64,
            task,
            stochastic: true,
            parallel: true,
            attn_bias: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(StabError::Config(msg));
        if self.d == 0 || self.depth == 0 || self.heads == 0 {
            return fail("d, depth and heads must be positive".into());
        }
        if !self.d.is_multiple_of(self.heads) {
            return fail(format!("embedding width {} not divisible by {} heads", self.d, self.heads));
        }
        if self.u < 2 {
            return fail(format!("LWTA block size must be at least 2, got {}", self.u));
        }
        if !(2 * self.d).is_multiple_of(self.u) {
            return fail(format!("hidden width {} not divisible by block size {}", 2 * self.d, self.u));
        }
        if self.j < 1 {
            return fail("mixture needs at least one component".into());
        }
        if self.t_train <= 0.0 || self.t_infer <= 0.0 {
            return fail("temperatures must be positive".into());
        }
        if self.n_train < 1 || self.n_infer < 1 {
            return fail("sample counts must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if let TaskKind::Classification { classes } = self.task {
            if classes < 2 {
                return fail("classification needs at least two classes".into());
            }
        }
        Ok(())
    }
}
