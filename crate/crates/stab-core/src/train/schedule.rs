//! Learning-rate schedule: linear warm-up, then halving on validation
//! plateaus with a hard floor.

use crate::data::MetricKind;

#[derive(Debug, Clone)]
pub struct LrSchedule {
    lr_base: f64,
    warmup_steps: usize,
    factor: f64,
    patience: usize,
    min_lr: f64,
    metric: MetricKind,
    min_delta: f64,
    /// Post-warm-up level, reduced on every plateau.
    level: f64,
    best: Option<f64>,
    stale: usize,
}

impl LrSchedule {
    pub fn new(
        lr_base: f64,
        warmup_steps: usize,
        factor: f64,
        patience: usize,
        min_lr: f64,
        metric: MetricKind,
        min_delta: Option<f64>,
    ) -> Self {
        let min_delta = min_delta.unwrap_or(match metric {
            MetricKind::Accuracy => 1e-4,
            MetricKind::Mse => 1e-3,
        });
        LrSchedule {
            lr_base,
            warmup_steps,
            factor,
            patience,
            min_lr,
            metric,
            min_delta,
            level: lr_base,
            best: None,
            stale: 0,
        }
    }

    /// Improvement test used for both the plateau counter and early
    /// stopping: absolute delta for accuracy, relative for MSE.
    pub fn improved(&self, candidate: f64, incumbent: f64) -> bool {
        match self.metric {
            MetricKind::Accuracy => candidate > incumbent + self.min_delta,
            MetricKind::Mse => candidate < incumbent * (1.0 - self.min_delta),
        }
    }

    /// Learning rate at a global step: a linear ramp from lr_base/100 to
    /// lr_base across the warm-up, then the plateau-controlled level.
    pub fn lr_at(&self, global_step: usize) -> f64 {
        if self.warmup_steps > 0 && global_step < self.warmup_steps {
            let t = global_step as f64 / self.warmup_steps as f64;
            self.lr_base * (0.01 + 0.99 * t)
        } else {
            self.level
        }
    }

    /// Advance the schedule. Call once per optimizer step with `None`, and
    /// once per epoch boundary with the validation metric; returns the rate
    /// to use next.
    pub fn step(&mut self, global_step: usize, epoch_val_metric: Option<f64>) -> f64 {
        if let Some(metric) = epoch_val_metric {
            // plateau bookkeeping starts once the warm-up has finished
            if global_step >= self.warmup_steps {
                match self.best {
                    Some(best) if self.improved(metric, best) => {
                        self.best = Some(metric);
                        self.stale = 0;
                    }
                    Some(_) => {
                        self.stale += 1;
                        if self.stale >= self.patience {
                            self.level = (self.level * self.factor).max(self.min_lr);
                            self.stale = 0;
                        }
                    }
                    None => {
                        self.best = Some(metric);
                        self.stale = 0;
                    }
                }
            }
        }
        self.lr_at(global_step)
    }
}
