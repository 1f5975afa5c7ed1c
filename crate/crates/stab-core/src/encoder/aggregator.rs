//! Parallel aggregation branch: per-feature scalar reprojection, an LWTA
//! layer over the aggregate, and a linear map back to the embedding width.

use crate::error::{Result, StabError};
use crate::param::{Linear, Param, ParamInit, ParamStore};
use crate::pass::Pass;
use crate::stochastic::{lwta_forward, LwtaLayer};
use crate::tensor::TensorId;

/// Reprojects the s feature embeddings to scalars (one learned (w_i, b_i)
/// pair per feature slot), competes over the aggregate through an LWTA
/// layer, and maps back to a d-vector for the special token.
#[derive(Debug, Clone)]
pub struct ParallelAggregator {
    pub features: usize,
    pub dim: usize,
    /// Per-feature projection vectors, one row per slot.
    pub proj_w: Param,
    pub proj_b: Param,
    pub lwta: LwtaLayer,
    pub out: Linear,
}

impl ParallelAggregator {
    pub fn new(
        init: &mut ParamInit,
        name: &str,
        features: usize,
        dim: usize,
        block_size: usize,
    ) -> Self {
        // LWTA width mirrors the feed-forward hidden width of 2d
        let hidden = 2 * dim;
        assert!(hidden.is_multiple_of(block_size), "hidden width must split into LWTA blocks");
        ParallelAggregator {
            features,
            dim,
            proj_w: init.linear(format!("{name}.phi_w"), &[features, dim], dim),
            proj_b: init.linear(format!("{name}.phi_b"), &[features], dim),
            lwta: LwtaLayer::new(init, &format!("{name}.lwta"), features, hidden / block_size, block_size),
            out: Linear::new(init, &format!("{name}.out"), hidden, dim),
        }
    }
}

impl ParamStore for ParallelAggregator {
    fn params(&self) -> Vec<&Param> {
        let mut p = vec![&self.proj_w, &self.proj_b];
        p.extend(self.lwta.params());
        p.extend(self.out.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = vec![&mut self.proj_w, &mut self.proj_b];
        p.extend(self.lwta.params_mut());
        p.extend(self.out.params_mut());
        p
    }
}

/// Phi: (batch, s, d) feature embeddings -> (batch, s) scalars, one dot
/// product w_i . h_i + b_i per feature slot.
pub fn phi_aggregate(
    pass: &mut Pass,
    h_features: TensorId,
    agg: &ParallelAggregator,
) -> Result<TensorId> {
    let shape = pass.graph.shape(h_features).to_vec();
    if shape.len() != 3 || shape[1] != agg.features || shape[2] != agg.dim {
        return Err(StabError::Dimension {
            op: "phi_aggregate",
            detail: format!(
                "input {:?} does not match aggregator layout ({} features, width {})",
                shape, agg.features, agg.dim
            ),
        });
    }
    let (batch, s, d) = (shape[0], shape[1], shape[2]);

    let w = pass.bind(&agg.proj_w)?;
    let b = pass.bind(&agg.proj_b)?;
    let g = &mut pass.graph;
    let flat = g.reshape(h_features, &[batch, s * d])?;
    let ones_col = g.constant(vec![1.0; batch], &[batch, 1])?;
    let w_row = g.reshape(w, &[1, s * d])?;
    let w_full = g.matmul(ones_col, w_row)?;
    let prod = g.mul(flat, w_full)?;
    // row-wise dot products: sum the d-chunks via a ones column
    let prod = g.reshape(prod, &[batch * s, d])?;
    let sum_w = g.constant(vec![1.0; d], &[d, 1])?;
    let dots = g.matmul(prod, sum_w)?;
    let dots = g.reshape(dots, &[batch, s])?;
    g.add(dots, b)
}

/// The full parallel branch: z = Linear(LWTA(Phi(H_features))), shape
/// (batch, d). KL contributions from the LWTA competition accumulate into
/// the pass.
pub fn parallel_module(
    pass: &mut Pass,
    h_features: TensorId,
    agg: &ParallelAggregator,
) -> Result<TensorId> {
    let phi = phi_aggregate(pass, h_features, agg)?;
    let hidden = lwta_forward(pass, phi, &agg.lwta)?;
    agg.out.forward(pass, hidden)
}
