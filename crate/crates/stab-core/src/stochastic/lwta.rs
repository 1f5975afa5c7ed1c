//! Stochastic Local-Winner-Takes-All layer.
//!
//! A linear map whose output units are grouped into K blocks of U. Within
//! each block the units compete: a relaxed one-hot sample (Gumbel-Softmax
//! over the block's own pre-activations) masks the block so that, at low
//! temperature, a single winner survives and the rest emit zero.

use crate::error::{Result, StabError};
use crate::param::{Param, ParamInit};
use crate::pass::Pass;
use crate::tensor::TensorId;

use super::kl::kl_rows_to_uniform;

/// Competition-structured linear layer: K blocks of U units over an
/// `in_dim`-wide input, stored as one (in_dim, K*U) weight matrix.
#[derive(Debug, Clone)]
pub struct LwtaLayer {
    pub weight: Param,
    pub bias: Param,
    pub in_dim: usize,
    pub blocks: usize,
    pub block_size: usize,
}

impl LwtaLayer {
    pub fn new(init: &mut ParamInit, name: &str, in_dim: usize, blocks: usize, block_size: usize) -> Self {
        assert!(block_size >= 2, "LWTA block size must be at least 2");
        let out = blocks * block_size;
        LwtaLayer {
            weight: init.linear(format!("{name}.w"), &[in_dim, out], in_dim),
            bias: init.linear(format!("{name}.b"), &[out], in_dim),
            in_dim,
            blocks,
            block_size,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.blocks * self.block_size
    }
}

impl crate::param::ParamStore for LwtaLayer {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Forward pass over a (rows, in_dim) input, producing (rows, K*U).
///
/// Per block: eta = W_k x + b_k; the relaxed winner indicator is
/// xi = softmax((eta + g)/T) with Gumbel noise g when the pass is
/// stochastic and g = 0 in test mode; the block output is xi (*) eta.
/// The selection posterior softmax(eta) (temperature 1, no noise) has its
/// KL to the uniform prior accumulated into the pass, one term per block
/// per row. Gradients flow through both eta and xi.
pub fn lwta_forward(pass: &mut Pass, x: TensorId, layer: &LwtaLayer) -> Result<TensorId> {
    let shape = pass.graph.shape(x).to_vec();
    if shape.len() != 2 || shape[1] != layer.in_dim {
        return Err(StabError::Dimension {
            op: "lwta_forward",
            detail: format!("input {:?} does not match layer width {}", shape, layer.in_dim),
        });
    }
    let rows = shape[0];
    let (k, u) = (layer.blocks, layer.block_size);

    let w = pass.bind(&layer.weight)?;
    let b = pass.bind(&layer.bias)?;
    let eta = pass.graph.matmul(x, w)?;
    let eta = pass.graph.add(eta, b)?;

    // selection posterior at temperature 1, no noise: deterministic per input
    let eta_blocks = pass.graph.reshape(eta, &[rows * k, u])?;
    let posterior = pass.graph.softmax_lastdim(eta_blocks)?;
    let kl_term = kl_rows_to_uniform(&mut pass.graph, posterior, u)?;
    pass.kl.add(&mut pass.graph, kl_term, rows * k)?;

    // relaxed winner sample
    let logits = if pass.stochastic {
        let noise = pass.gumbel_tensor(&[rows * k, u])?;
        pass.graph.add(eta_blocks, noise)?
    } else {
        eta_blocks
    };
    let scaled = pass.graph.scalar_mul(logits, 1.0 / pass.temperature)?;
    let xi = pass.graph.softmax_lastdim(scaled)?;
    let xi = pass.graph.reshape(xi, &[rows, k * u])?;
    pass.graph.mul(xi, eta)
}
