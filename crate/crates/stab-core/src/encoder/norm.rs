//! Layer normalization over the feature dimension.

use crate::error::Result;
use crate::param::{Param, ParamStore};
use crate::pass::Pass;
use crate::tensor::TensorId;

const LN_EPS: f64 = 1e-5;

/// Per-feature scale and shift applied after standardizing each row.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub scale: Param,
    pub shift: Param,
}

impl LayerNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        LayerNorm {
            scale: Param::new(format!("{name}.scale"), &[dim], vec![1.0; dim]),
            shift: Param::zeros(format!("{name}.shift"), &[dim]),
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.numel()
    }

    /// Normalize each row of a (rows, d) tensor to zero mean and unit
    /// variance, then apply the learned scale and shift.
    pub fn forward(&self, pass: &mut Pass, x: TensorId) -> Result<TensorId> {
        let shape = pass.graph.shape(x).to_vec();
        let d = *shape.last().expect("layer norm input is at least rank 1");
        let rows: usize = shape.iter().product::<usize>() / d;
        let x2 = pass.graph.reshape(x, &[rows, d])?;

        let g = &mut pass.graph;
        let avg_w = g.constant(vec![1.0 / d as f64; d], &[d, 1])?;
        let ones_row = g.constant(vec![1.0; d], &[1, d])?;
        let mean = g.matmul(x2, avg_w)?;
        let mean_full = g.matmul(mean, ones_row)?;
        let centered = g.sub(x2, mean_full)?;
        let sq = g.mul(centered, centered)?;
        let var = g.matmul(sq, avg_w)?;
        let eps = g.scalar(LN_EPS);
        let var = g.add(var, eps)?;
        // 1/sqrt(v) as exp(-log(v)/2)
        let logv = g.log(var)?;
        let inv_std = g.scalar_mul(logv, -0.5)?;
        let inv_std = g.exp(inv_std)?;
        let inv_full = g.matmul(inv_std, ones_row)?;
        let normed = g.mul(centered, inv_full)?;

        let scale = pass.bind(&self.scale)?;
        let shift = pass.bind(&self.shift)?;
        let g = &mut pass.graph;
        let ones_col = g.constant(vec![1.0; rows], &[rows, 1])?;
        let scale_row = g.reshape(scale, &[1, d])?;
        let scale_full = g.matmul(ones_col, scale_row)?;
        let scaled = g.mul(normed, scale_full)?;
        let out = g.add(scaled, shift)?;
        g.reshape(out, &shape)
    }
}

impl ParamStore for LayerNorm {
    fn params(&self) -> Vec<&Param> {
        vec![&self.scale, &self.shift]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.scale, &mut self.shift]
    }
}
