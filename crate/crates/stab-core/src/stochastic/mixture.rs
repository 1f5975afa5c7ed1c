//! Mixture embedding for numeric features: J alternative linear embeddings
//! competing through a value-driven stochastic selection.

use crate::error::Result;
use crate::param::{Param, ParamInit};
use crate::pass::Pass;
use crate::tensor::TensorId;

use super::kl::kl_rows_to_uniform;

/// J alternative (weight, bias) embedding pairs plus the selection
/// parameters theta. Selection logits are t = x * theta_w + theta_b.
#[derive(Debug, Clone)]
pub struct EmbeddingMixture {
    pub components: usize,
    pub dim: usize,
    /// Component weights, one d-vector per row.
    pub comp_weights: Param,
    /// Component biases, one d-vector per row.
    pub comp_biases: Param,
    pub sel_weight: Param,
    pub sel_bias: Param,
}

impl EmbeddingMixture {
    pub fn new(init: &mut ParamInit, name: &str, components: usize, dim: usize) -> Self {
        assert!(components >= 1, "mixture needs at least one component");
        let bound = 1.0 / (dim as f64).sqrt();
        EmbeddingMixture {
            components,
            dim,
            comp_weights: init.uniform(format!("{name}.w"), &[components, dim], bound),
            comp_biases: init.uniform(format!("{name}.b"), &[components, dim], bound),
            // zero-initialized selection: the posterior starts uniform
            sel_weight: Param::zeros(format!("{name}.theta_w"), &[components]),
            sel_bias: Param::zeros(format!("{name}.theta_b"), &[components]),
        }
    }

}

impl crate::param::ParamStore for EmbeddingMixture {
    fn params(&self) -> Vec<&Param> {
        vec![&self.comp_weights, &self.comp_biases, &self.sel_weight, &self.sel_bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.comp_weights,
            &mut self.comp_biases,
            &mut self.sel_weight,
            &mut self.sel_bias,
        ]
    }
}

/// Embed a whole column of feature values at once, producing (rows, d).
///
/// Selection per row: s = softmax((t + g)/T) with t = x * theta_w + theta_b,
/// g = 0 in test mode. The returned embedding is the relaxed mixture
/// sum_j s_j (x w_j + b_j) = x * (s W) + s B. KL(softmax(t) || uniform(J))
/// is accumulated per row. With J = 1 the selection path is skipped
/// entirely and the result is exactly the single linear embedding.
pub fn mixture_embed_batch(
    pass: &mut Pass,
    values: &[f64],
    layer: &EmbeddingMixture,
) -> Result<TensorId> {
    let rows = values.len();
    let (j, d) = (layer.components, layer.dim);
    let x_col = pass.graph.constant(values.to_vec(), &[rows, 1])?;
    let ones_row = pass.graph.constant(vec![1.0; d], &[1, d])?;
    let x_full = pass.graph.matmul(x_col, ones_row)?;

    let w = pass.bind(&layer.comp_weights)?;
    let b = pass.bind(&layer.comp_biases)?;

    if j == 1 {
        let ones_col = pass.graph.constant(vec![1.0; rows], &[rows, 1])?;
        let w_row = pass.graph.reshape(w, &[1, d])?;
        let w_full = pass.graph.matmul(ones_col, w_row)?;
        let scaled = pass.graph.mul(x_full, w_full)?;
        let bias = pass.graph.reshape(b, &[d])?;
        return pass.graph.add(scaled, bias);
    }

    let theta_w = pass.bind(&layer.sel_weight)?;
    let theta_b = pass.bind(&layer.sel_bias)?;
    let tw_row = pass.graph.reshape(theta_w, &[1, j])?;
    let t = pass.graph.matmul(x_col, tw_row)?;
    let t = pass.graph.add(t, theta_b)?;

    let posterior = pass.graph.softmax_lastdim(t)?;
    let kl_term = kl_rows_to_uniform(&mut pass.graph, posterior, j)?;
    pass.kl.add(&mut pass.graph, kl_term, rows)?;

    let logits = if pass.stochastic {
        let noise = pass.gumbel_tensor(&[rows, j])?;
        pass.graph.add(t, noise)?
    } else {
        t
    };
    let scaled = pass.graph.scalar_mul(logits, 1.0 / pass.temperature)?;
    let sel = pass.graph.softmax_lastdim(scaled)?;

    let mix_w = pass.graph.matmul(sel, w)?;
    let mix_b = pass.graph.matmul(sel, b)?;
    let scaled = pass.graph.mul(x_full, mix_w)?;
    pass.graph.add(scaled, mix_b)
}

/// Embed a single scalar, producing a d-vector. Same computation as one row
/// of [`mixture_embed_batch`].
pub fn mixture_embed(pass: &mut Pass, x_val: f64, layer: &EmbeddingMixture) -> Result<TensorId> {
    let out = mixture_embed_batch(pass, &[x_val], layer)?;
    pass.graph.reshape(out, &[layer.dim])
}
