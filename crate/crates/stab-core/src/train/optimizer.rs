//! AdamW with decoupled weight decay.

use std::collections::HashMap;

use crate::error::{Result, StabError};
use crate::param::Param;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Per-parameter first/second moment buffers plus the shared step counter.
#[derive(Debug, Clone, Default)]
pub struct OptimizerState {
    step: usize,
    moments: HashMap<String, Moments>,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One update across all parameters: decoupled decay
    /// (theta <- theta - lr * wd * theta), then the Adam step with
    /// bias-corrected moments. Parameters without a gradient entry are
    /// treated as having zero gradient.
    pub fn adamw_step(
        &mut self,
        params: Vec<&mut Param>,
        grads: &HashMap<String, Vec<f64>>,
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        if lr <= 0.0 {
            return Err(StabError::Contract(format!("learning rate must be positive, got {lr}")));
        }
        self.step += 1;
        let bias1 = 1.0 - BETA1.powi(self.step as i32);
        let bias2 = 1.0 - BETA2.powi(self.step as i32);
        for param in params {
            static ZERO: Vec<f64> = Vec::new();
            let g = grads.get(&param.name).unwrap_or(&ZERO);
            if let Some(i) = g.iter().position(|v| v.is_nan()) {
                return Err(StabError::Train(format!(
                    "NaN gradient for parameter {} at flat index {i}",
                    param.name
                )));
            }
            let state = self
                .moments
                .entry(param.name.clone())
                .or_insert_with(|| Moments { m: vec![0.0; param.numel()], v: vec![0.0; param.numel()] });
            for i in 0..param.numel() {
                let gi = g.get(i).copied().unwrap_or(0.0);
                let theta = &mut param.data[i];
                *theta -= lr * weight_decay * *theta;
                state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * gi;
                state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * gi * gi;
                let m_hat = state.m[i] / bias1;
                let v_hat = state.v[i] / bias2;
                *theta -= lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn one_param(value: f64) -> Param {
        Param::new("p", &[1], vec![value])
    }

    fn grad_of(value: f64) -> HashMap<String, Vec<f64>> {
        HashMap::from([("p".to_string(), vec![value])])
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = one_param(1.5);
        let mut opt = OptimizerState::new();
        opt.adamw_step(vec![&mut p], &grad_of(0.0), 0.1, 0.0).unwrap();
        assert_eq!(p.data[0], 1.5);
    }

    #[test]
    fn pure_decay_shrinks_by_lr_times_wd() {
        let mut p = one_param(2.0);
        let mut opt = OptimizerState::new();
        opt.adamw_step(vec![&mut p], &grad_of(0.0), 0.1, 1e-2).unwrap();
        assert_abs_diff_eq!(p.data[0], 2.0 * (1.0 - 0.1 * 1e-2), epsilon = 1e-15);
    }

    #[test]
    fn first_step_is_a_unit_magnitude_update() {
        let mut p = one_param(1.0);
        let mut opt = OptimizerState::new();
        opt.adamw_step(vec![&mut p], &grad_of(1.0), 0.1, 0.0).unwrap();
        // bias-corrected m_hat = v_hat = 1 on a fresh state
        assert_abs_diff_eq!(p.data[0], 0.9, epsilon = 1e-8);
    }

    #[test]
    fn nan_gradient_aborts_naming_the_parameter() {
        let mut p = one_param(1.0);
        let mut opt = OptimizerState::new();
        let err = opt.adamw_step(vec![&mut p], &grad_of(f64::NAN), 0.1, 0.0).unwrap_err();
        assert!(err.to_string().contains("p"), "{err}");
    }

    #[test]
    fn moments_accumulate_across_steps() {
        let mut p = one_param(1.0);
        let mut opt = OptimizerState::new();
        for _ in 0..3 {
            opt.adamw_step(vec![&mut p], &grad_of(1.0), 0.01, 0.0).unwrap();
        }
        assert_eq!(opt.step_count(), 3);
        // constant gradient keeps the update near -lr each step
        assert!(p.data[0] < 1.0 - 2.5 * 0.01);
    }
}
