//! The assembled STab model: tokenizer, hybrid layer stack and task head,
//! with single-pass forward and Bayesian-averaged prediction.

mod config;
mod tokenizer;

pub use config::{ModelConfig, TaskKind};
pub use tokenizer::FeatureTokenizer;

use serde::{Deserialize, Serialize};

use crate::encoder::{hybrid_layer_forward, HybridLayer, HybridLayerSpec, LayerNorm};
use crate::error::{Result, StabError};
use crate::param::{Linear, Param, ParamInit, ParamStore};
use crate::pass::Pass;
use crate::stochastic::GumbelSampler;
use crate::tensor::TensorId;

/// Model-ready rows, stored column-wise: numerics are already normalized,
/// categoricals are vocabulary indices.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub rows: usize,
    pub numeric_cols: Vec<Vec<f64>>,
    pub cat_cols: Vec<Vec<usize>>,
}

impl Batch {
    pub fn new(rows: usize, numeric_cols: Vec<Vec<f64>>, cat_cols: Vec<Vec<usize>>) -> Self {
        Batch { rows, numeric_cols, cat_cols }
    }

    pub fn single(numerics: &[f64], categoricals: &[usize]) -> Self {
        Batch {
            rows: 1,
            numeric_cols: numerics.iter().map(|&v| vec![v]).collect(),
            cat_cols: categoricals.iter().map(|&c| vec![c]).collect(),
        }
    }
}

/// Shape of the data the model was built for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataProfile {
    pub numeric_count: usize,
    pub categorical_cards: Vec<usize>,
}

impl DataProfile {
    /// Feature count s (special token excluded).
    pub fn features(&self) -> usize {
        self.numeric_count + self.categorical_cards.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Index of the largest entry; ties break to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Bayesian-averaged predictions in model space (standardized label units
/// for regression, probabilities for classification).
#[derive(Debug, Clone)]
pub enum Predictions {
    Classification { probs: Vec<f64>, classes: usize },
    Regression(Vec<f64>),
}

impl Predictions {
    pub fn rows(&self) -> usize {
        match self {
            Predictions::Classification { probs, classes } => probs.len() / classes,
            Predictions::Regression(v) => v.len(),
        }
    }

    /// Per-row class decisions (classification only).
    pub fn labels(&self) -> Vec<usize> {
        match self {
            Predictions::Classification { probs, classes } => {
                probs.chunks(*classes).map(argmax).collect()
            }
            Predictions::Regression(_) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StabModel {
    pub config: ModelConfig,
    pub profile: DataProfile,
    pub tokenizer: FeatureTokenizer,
    pub layers: Vec<HybridLayer>,
    pub final_norm: LayerNorm,
    pub head: Linear,
}

impl StabModel {
    pub fn new(config: ModelConfig, profile: DataProfile, seed: u64) -> Result<Self> {
        config.validate()?;
        if profile.features() == 0 {
            return Err(StabError::Config("model needs at least one feature".into()));
        }
        if config.parallel && profile.features() < 2 {
            // the parallel LWTA competes over the s-wide aggregate
            return Err(StabError::Config(
                "the parallel branch needs at least two features".into(),
            ));
        }
        let mut init = ParamInit::new(seed);
        let tokens = profile.features() + 1;
        let tokenizer = FeatureTokenizer::new(
            &mut init,
            config.d,
            config.j,
            &profile.categorical_cards,
            profile.numeric_count,
        );
        let spec = HybridLayerSpec {
            dim: config.d,
            heads: config.heads,
            tokens,
            stochastic_ffn: config.stochastic,
            block_size: config.u,
            attn_bias: config.attn_bias,
            parallel: config.parallel,
        };
        let layers = (0..config.depth)
            .map(|l| HybridLayer::new(&mut init, &format!("layer{l}"), &spec))
            .collect();
        let final_norm = LayerNorm::new("final_norm", config.d);
        let head = Linear::new(&mut init, "head", config.d, config.task.output_width());
        Ok(StabModel { config, profile, tokenizer, layers, final_norm, head })
    }

    pub fn tokens(&self) -> usize {
        self.profile.features() + 1
    }

    /// Open a pass in the given mode. `trainable` controls whether
    /// parameters are bound as gradient leaves.
    pub fn begin_pass(&self, mode: Mode, sampler: GumbelSampler, trainable: bool) -> Pass {
        let temperature = match mode {
            Mode::Train => self.config.t_train,
            Mode::Infer => self.config.t_infer,
        };
        // dropout trains every variant; at inference it stays live only for
        // stochastic models (MC-dropout)
        let dropout_active = matches!(mode, Mode::Train) || self.config.stochastic;
        Pass::new(
            sampler,
            temperature,
            self.config.stochastic,
            dropout_active,
            self.config.dropout,
            trainable,
        )
    }

    /// Run the network inside an open pass: tokenize, encoder stack, final
    /// norm of the special token, task head. Returns raw logits
    /// (classification) or standardized predictions (regression), shaped
    /// (rows, output_width).
    pub fn forward_into(&self, pass: &mut Pass, batch: &Batch) -> Result<TensorId> {
        let mut h = self.tokenizer.tokenize_batch(pass, batch)?;
        for layer in &self.layers {
            h = hybrid_layer_forward(pass, h, layer)?;
        }
        let special = pass.graph.slice(h, 1, 0, 1)?;
        let special = pass.graph.reshape(special, &[batch.rows, self.config.d])?;
        let normed = self.final_norm.forward(pass, special)?;
        self.head.forward(pass, normed)
    }

    /// One forward pass; returns the flat row-major outputs and the
    /// accumulated KL total.
    pub fn forward(
        &self,
        batch: &Batch,
        mode: Mode,
        sampler: GumbelSampler,
    ) -> Result<(Vec<f64>, f64)> {
        let mut pass = self.begin_pass(mode, sampler, false);
        let out = self.forward_into(&mut pass, batch)?;
        Ok((pass.graph.data(out).to_vec(), pass.kl.total_value(&pass.graph)))
    }

    /// Bayesian averaging over `n` stochastic infer-mode passes with sampler
    /// streams base_seed XOR 1..=n. Classification averages post-softmax
    /// probabilities; regression averages the scalar outputs.
    pub fn predict_bayesian(&self, batch: &Batch, n: usize, base_seed: u64) -> Result<Predictions> {
        if n == 0 {
            return Err(StabError::Contract("predict_bayesian needs n >= 1".into()));
        }
        let width = self.config.task.output_width();
        let mut acc = vec![0.0; batch.rows * width];
        for i in 1..=n as u64 {
            let sampler = GumbelSampler::new(base_seed, base_seed ^ i);
            let mut pass = self.begin_pass(Mode::Infer, sampler, false);
            let out = self.forward_into(&mut pass, batch)?;
            let out = if self.config.task.is_classification() {
                pass.graph.softmax_lastdim(out)?
            } else {
                out
            };
            for (a, v) in acc.iter_mut().zip(pass.graph.data(out)) {
                *a += v;
            }
        }
        for a in &mut acc {
            *a /= n as f64;
        }
        Ok(match self.config.task {
            TaskKind::Classification { classes } => {
                Predictions::Classification { probs: acc, classes }
            }
            TaskKind::Regression => Predictions::Regression(acc),
        })
    }

    pub fn count_parameters(&self) -> ParamCountReport {
        let count = |ps: Vec<&Param>| ps.iter().map(|p| p.numel()).sum::<usize>();
        let tokenizer = count(self.tokenizer.params());
        let mut attention = 0;
        let mut ffn = 0;
        let mut parallel = 0;
        for layer in &self.layers {
            attention += count(layer.norm_attn.params()) + count(layer.attention.params());
            ffn += count(layer.norm_ffn.params()) + count(layer.ffn.params());
            if let Some(par) = &layer.parallel {
                parallel += count(par.params());
            }
        }
        let head = count(self.final_norm.params()) + count(self.head.params());
        ParamCountReport { tokenizer, attention, ffn, parallel, head }
    }
}

impl ParamStore for StabModel {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.tokenizer.params();
        for layer in &self.layers {
            p.extend(layer.params());
        }
        p.extend(self.final_norm.params());
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.tokenizer.params_mut();
        for layer in &mut self.layers {
            p.extend(layer.params_mut());
        }
        p.extend(self.final_norm.params_mut());
        p.extend(self.head.params_mut());
        p
    }
}

/// Exact trainable scalar counts per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCountReport {
    pub tokenizer: usize,
    pub attention: usize,
    pub ffn: usize,
    pub parallel: usize,
    pub head: usize,
}

impl ParamCountReport {
    pub fn total(&self) -> usize {
        self.tokenizer + self.attention + self.ffn + self.parallel + self.head
    }

    /// Parameter overhead of the parallel branch relative to the rest of
    /// the network.
    pub fn hybrid_overhead(&self) -> f64 {
        let base = self.total() - self.parallel;
        self.parallel as f64 / base as f64
    }
}
