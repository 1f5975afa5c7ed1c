//! Training loop: seeded mini-batches, AdamW updates, warm-up and plateau
//! scheduling, and validation-driven early stopping with best-parameter
//! restoration.

mod loss;
mod optimizer;
mod schedule;

pub use loss::{loss, Targets};
pub use optimizer::OptimizerState;
pub use schedule::LrSchedule;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{evaluate, EvalData, MetricKind, Prepared, PreparedTargets, SplitSets};
use crate::error::{Result, StabError};
use crate::model::{Mode, Predictions, StabModel, TaskKind};
use crate::param::ParamStore;
use crate::stochastic::GumbelSampler;

/// Epoch shuffling is deliberately independent of the experiment seed: all
/// run-to-run randomness flows through the sampler streams, so deterministic
/// variants give identical results under different seeds.
const SHUFFLE_SALT: u64 = 0x5348_5546_464c_4531;
/// Salt separating validation sampler streams from training streams.
const VAL_SALT: u64 = 0x5641_4c5f_5354_4142;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_base: f64,
    pub weight_decay: f64,
    /// None: min(1000, 5% of planned steps).
    #[serde(default)]
    pub warmup_steps: Option<usize>,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// KL scale in the objective. None: 1/|train| so one epoch matches the
    /// dataset-level objective.
    #[serde(default)]
    pub kl_scale: Option<f64>,
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Bayesian samples for the per-epoch validation metric.
    pub val_samples: usize,
    /// None: 1e-4 absolute (accuracy) or 1e-3 relative (MSE).
    #[serde(default)]
    pub plateau_min_delta: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_base: 1e-3,
            weight_decay: 1e-4,
            warmup_steps: None,
            plateau_patience: 10,
            plateau_factor: 0.5,
            min_lr: 1e-5,
            max_epochs: 100,
            batch_size: 128,
            kl_scale: None,
            early_stop_patience: 40,
            seed: 0,
            val_samples: 8,
            plateau_min_delta: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(StabError::Config(msg));
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return fail(format!("plateau_factor {} outside (0, 1)", self.plateau_factor));
        }
        if self.min_lr <= 0.0 {
            return fail("min_lr must be positive".into());
        }
        if self.lr_base <= 0.0 {
            return fail("lr_base must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.val_samples == 0 {
            return fail("val_samples must be positive".into());
        }
        if let Some(beta) = self.kl_scale {
            if beta < 0.0 {
                return fail(format!("kl_scale {beta} must be non-negative"));
            }
        }
        if self.weight_decay < 0.0 {
            return fail("weight_decay must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
    pub lr: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    /// The recorded best-epoch metric is the extremum over all epochs.
    pub fn best_metric(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.epochs[e].val_metric)
    }
}

fn metric_kind(task: TaskKind) -> MetricKind {
    if task.is_classification() {
        MetricKind::Accuracy
    } else {
        MetricKind::Mse
    }
}

/// Validation metric in model space: accuracy for classification,
/// standardized-label MSE for regression.
pub fn validation_metric(
    model: &StabModel,
    set: &Prepared,
    samples: usize,
    base_seed: u64,
) -> Result<f64> {
    let batch = set.batch_all();
    let pred = model.predict_bayesian(&batch, samples, base_seed)?;
    let report = match (&pred, &set.targets) {
        (Predictions::Classification { .. }, PreparedTargets::Classes(actual)) => {
            evaluate(&EvalData::Classes { predicted: pred.labels(), actual: actual.clone() })?
        }
        (Predictions::Regression(values), PreparedTargets::Values(actual)) => {
            evaluate(&EvalData::Values { predicted: values.clone(), actual: actual.clone() })?
        }
        _ => {
            return Err(StabError::Contract(
                "prediction kind does not match the target kind".into(),
            ))
        }
    };
    Ok(report.value)
}

/// Train in place; returns the per-epoch history. The model is left holding
/// the best-validation parameters.
pub fn train(model: &mut StabModel, sets: &SplitSets, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    let mut history = TrainHistory::default();
    if cfg.max_epochs == 0 {
        return Ok(history);
    }
    let n_train = sets.train.rows;
    if n_train == 0 {
        return Err(StabError::Contract("training split is empty".into()));
    }
    let beta = cfg.kl_scale.unwrap_or(1.0 / n_train as f64);
    let batches_per_epoch = n_train.div_ceil(cfg.batch_size);
    let planned = cfg.max_epochs * batches_per_epoch;
    let warmup = cfg.warmup_steps.unwrap_or_else(|| (planned / 20).min(1000));
    let kind = metric_kind(model.config.task);
    let mut schedule = LrSchedule::new(
        cfg.lr_base,
        warmup,
        cfg.plateau_factor,
        cfg.plateau_patience,
        cfg.min_lr,
        kind,
        cfg.plateau_min_delta,
    );
    let mut opt = OptimizerState::new();
    let samples_per_step = model.config.n_train.max(1);
    let val_seed = cfg.seed ^ VAL_SALT;

    let mut best_metric = kind.worst();
    let mut best_snapshot: Option<Vec<Vec<f64>>> = None;
    // separate incumbent for early stopping, gated by the min-delta rule
    let mut stale_incumbent = kind.worst();
    let mut stale_epochs = 0usize;
    let mut global_step = 0usize;

    for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(SHUFFLE_SALT.wrapping_add(epoch as u64));
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut kl_sum = 0.0;
        let mut lr = schedule.lr_at(global_step);
        for (batch_index, chunk) in order.chunks(cfg.batch_size).enumerate() {
            lr = schedule.step(global_step, None);
            let (batch, targets) = sets.train.batch_of(chunk);
            let targets = match &targets {
                PreparedTargets::Classes(c) => Targets::Classes(c),
                PreparedTargets::Values(v) => Targets::Values(v),
            };

            let mut grds: std::collections::HashMap<String, Vec<f64>> = Default::default();
            let mut step_loss = 0.0;
            let mut step_kl = 0.0;
            for k in 0..samples_per_step {
                let stream = (global_step * samples_per_step + k) as u64;
                let sampler = GumbelSampler::new(cfg.seed, stream);
                let mut pass = model.begin_pass(Mode::Train, sampler, true);
                let out = model.forward_into(&mut pass, &batch)?;
                let l = loss(&mut pass.graph, out, &targets, pass.kl.total_id(), beta)?;
                let value = pass.graph.value(l);
                if !value.is_finite() {
                    return Err(StabError::Train(format!(
                        "non-finite loss {value} at epoch {epoch}, batch {batch_index}"
                    )));
                }
                step_loss += value;
                step_kl += pass.kl.total_value(&pass.graph);
                let map = pass.graph.backward(l)?;
                for (name, g) in pass.named_gradients(&map) {
                    let entry = grds.entry(name).or_insert_with(|| vec![0.0; g.len()]);
                    for (e, v) in entry.iter_mut().zip(&g) {
                        *e += v / samples_per_step as f64;
                    }
                }
            }
            opt.adamw_step(model.params_mut(), &grds, lr, cfg.weight_decay)?;
            loss_sum += step_loss / samples_per_step as f64;
            kl_sum += step_kl / samples_per_step as f64;
            global_step += 1;
        }

        let val_metric = validation_metric(model, &sets.val, cfg.val_samples, val_seed)?;
        schedule.step(global_step, Some(val_metric));

        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches_per_epoch as f64,
            val_metric,
            lr,
            kl: kl_sum / batches_per_epoch as f64,
        };
        println!("{}", serde_json::to_string(&record).expect("epoch record serializes"));
        history.epochs.push(record);

        if kind.improves(val_metric, best_metric) {
            best_metric = val_metric;
            best_snapshot = Some(model.params().iter().map(|p| p.data.clone()).collect());
            history.best_epoch = Some(epoch);
        }
        if epoch == 0 || schedule.improved(val_metric, stale_incumbent) {
            stale_incumbent = val_metric;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= cfg.early_stop_patience {
                break;
            }
        }
    }

    if let Some(snapshot) = best_snapshot {
        for (param, data) in model.params_mut().into_iter().zip(snapshot) {
            param.data = data;
        }
    }
    Ok(history)
}
