//! Multi-head self-attention with a learnable additive logit bias.
//!
//! Tabular token layouts are static, so each head can carry a trainable
//! (tokens x tokens) bias added to the pre-softmax attention logits. The
//! bias is zero-initialized: at initialization the block is exactly vanilla
//! scaled dot-product attention.

use crate::error::{Result, StabError};
use crate::param::{Linear, Param, ParamInit, ParamStore};
use crate::pass::Pass;
use crate::tensor::TensorId;

#[derive(Debug, Clone)]
pub struct AttentionBlock {
    pub heads: usize,
    pub tokens: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    /// Per-head (tokens x tokens) pre-softmax bias; absent in variants
    /// without the attention-bias modification.
    pub bias: Option<Param>,
}

impl AttentionBlock {
    pub fn new(
        init: &mut ParamInit,
        name: &str,
        dim: usize,
        heads: usize,
        tokens: usize,
        with_bias: bool,
    ) -> Self {
        assert!(dim.is_multiple_of(heads), "embedding width must divide evenly across heads");
        AttentionBlock {
            heads,
            tokens,
            query: Linear::new(init, &format!("{name}.wq"), dim, dim),
            key: Linear::new(init, &format!("{name}.wk"), dim, dim),
            value: Linear::new(init, &format!("{name}.wv"), dim, dim),
            output: Linear::new(init, &format!("{name}.wo"), dim, dim),
            bias: with_bias.then(|| Param::zeros(format!("{name}.bias"), &[heads, tokens, tokens])),
        }
    }

    pub fn dim(&self) -> usize {
        self.query.w.shape[0]
    }
}

impl ParamStore for AttentionBlock {
    fn params(&self) -> Vec<&Param> {
        let mut p = vec![&self.query.w, &self.query.b, &self.key.w, &self.key.b];
        p.extend([&self.value.w, &self.value.b, &self.output.w, &self.output.b]);
        if let Some(b) = &self.bias {
            p.push(b);
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = vec![&mut self.query.w, &mut self.query.b, &mut self.key.w, &mut self.key.b];
        p.extend([&mut self.value.w, &mut self.value.b, &mut self.output.w, &mut self.output.b]);
        if let Some(b) = &mut self.bias {
            p.push(b);
        }
        p
    }
}

/// Biased multi-head self-attention over (batch, tokens, d). Per head:
/// logits = Q K^T / sqrt(d/heads) + B_h, weights = softmax over keys with
/// dropout when active, output = concatenated head contexts through the
/// output projection.
pub fn biased_attention(pass: &mut Pass, h: TensorId, block: &AttentionBlock) -> Result<TensorId> {
    let shape = pass.graph.shape(h).to_vec();
    if shape.len() != 3 || shape[2] != block.dim() {
        return Err(StabError::Dimension {
            op: "biased_attention",
            detail: format!("input {:?} does not match width {}", shape, block.dim()),
        });
    }
    let (batch, tokens, dim) = (shape[0], shape[1], shape[2]);
    if tokens != block.tokens {
        return Err(StabError::Dimension {
            op: "biased_attention",
            detail: format!(
                "token count {} does not match the block's bias layout {}",
                tokens, block.tokens
            ),
        });
    }
    let head_dim = dim / block.heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let flat = pass.graph.reshape(h, &[batch * tokens, dim])?;
    let q = block.query.forward(pass, flat)?;
    let k = block.key.forward(pass, flat)?;
    let v = block.value.forward(pass, flat)?;
    let q = pass.graph.reshape(q, &[batch, tokens, dim])?;
    let k = pass.graph.reshape(k, &[batch, tokens, dim])?;
    let v = pass.graph.reshape(v, &[batch, tokens, dim])?;

    let bias = block.bias.as_ref().map(|b| pass.bind(b)).transpose()?;

    let mut contexts = Vec::with_capacity(block.heads);
    for head in 0..block.heads {
        let qh = pass.graph.slice(q, 2, head * head_dim, head_dim)?;
        let kh = pass.graph.slice(k, 2, head * head_dim, head_dim)?;
        let vh = pass.graph.slice(v, 2, head * head_dim, head_dim)?;
        let kt = pass.graph.transpose_last2(kh)?;
        let logits = pass.graph.matmul(qh, kt)?;
        let mut logits = pass.graph.scalar_mul(logits, scale)?;
        if let Some(bias) = bias {
            let bh = pass.graph.slice(bias, 0, head, 1)?;
            let bh = pass.graph.reshape(bh, &[tokens, tokens])?;
            logits = pass.graph.add(logits, bh)?;
        }
        let weights = pass.graph.softmax_lastdim(logits)?;
        let weights = pass.dropout(weights)?;
        contexts.push(pass.graph.matmul(weights, vh)?);
    }
    let merged = pass.graph.concat_lastdim(&contexts)?;
    let merged = pass.graph.reshape(merged, &[batch * tokens, dim])?;
    let out = block.output.forward(pass, merged)?;
    pass.graph.reshape(out, &[batch, tokens, dim])
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn block(dim: usize, heads: usize, tokens: usize, with_bias: bool) -> AttentionBlock {
        let mut init = ParamInit::new(17);
        AttentionBlock::new(&mut init, "attn", dim, heads, tokens, with_bias)
    }

    #[test]
    fn zero_bias_equals_unbiased_attention() {
        let with = block(8, 2, 3, true);
        let mut without = with.clone();
        without.bias = None;

        let x: Vec<f64> = (0..2 * 3 * 8).map(|i| ((i * 7919 % 100) as f64 - 50.0) / 25.0).collect();
        let mut pa = Pass::for_test(1.0, false, 0, 0);
        let xa = pa.graph.constant(x.clone(), &[2, 3, 8]).unwrap();
        let ya = biased_attention(&mut pa, xa, &with).unwrap();

        let mut pb = Pass::for_test(1.0, false, 0, 0);
        let xb = pb.graph.constant(x, &[2, 3, 8]).unwrap();
        let yb = biased_attention(&mut pb, xb, &without).unwrap();

        assert_eq!(pa.graph.data(ya), pb.graph.data(yb));
    }

    #[test]
    fn single_token_attends_only_to_itself() {
        let blk = block(4, 2, 1, true);
        let x = vec![0.3, -0.7, 1.1, 0.0];
        let mut pass = Pass::for_test(1.0, false, 0, 0);
        let xid = pass.graph.constant(x.clone(), &[1, 1, 4]).unwrap();
        let y = biased_attention(&mut pass, xid, &blk).unwrap();

        // expected: value projection of the token through the output map
        let mut expect = Pass::for_test(1.0, false, 0, 0);
        let xe = expect.graph.constant(x, &[1, 4]).unwrap();
        let v = blk.value.forward(&mut expect, xe).unwrap();
        let o = blk.output.forward(&mut expect, v).unwrap();
        for (a, b) in pass.graph.data(y).iter().zip(expect.graph.data(o)) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn large_bias_saturates_the_row() {
        let mut blk = block(4, 1, 3, true);
        // uniform Q/K: zero projections make all dot products equal
        for p in [&mut blk.query, &mut blk.key] {
            p.w.data.iter_mut().for_each(|v| *v = 0.0);
            p.b.data.iter_mut().for_each(|v| *v = 0.0);
        }
        blk.bias.as_mut().unwrap().data[2] = 50.0; // head 0, row 0, key 2

        let mut pass = Pass::for_test(1.0, false, 0, 0);
        let x = pass.graph.constant(vec![0.1; 12], &[1, 3, 4]).unwrap();

        // probe the attention weights by recomputing the head's softmax
        let xid = pass.graph.reshape(x, &[3, 4]).unwrap();
        let q = blk.query.forward(&mut pass, xid).unwrap();
        let k = blk.key.forward(&mut pass, xid).unwrap();
        let kt = pass.graph.transpose_last2(k).unwrap();
        let logits = pass.graph.matmul(q, kt).unwrap();
        let logits = pass.graph.scalar_mul(logits, 0.5).unwrap();
        let b = pass.graph.constant(blk.bias.as_ref().unwrap().data.clone(), &[3, 3]).unwrap();
        let logits = pass.graph.add(logits, b).unwrap();
        let w = pass.graph.softmax_lastdim(logits).unwrap();
        assert!(pass.graph.data(w)[2] > 0.999, "mass: {}", pass.graph.data(w)[2]);
    }

    #[test]
    fn token_count_mismatch_is_a_dimension_error() {
        let blk = block(4, 2, 3, true);
        let mut pass = Pass::for_test(1.0, false, 0, 0);
        let x = pass.graph.constant(vec![0.0; 16], &[1, 4, 4]).unwrap();
        assert!(matches!(
            biased_attention(&mut pass, x, &blk),
            Err(StabError::Dimension { op: "biased_attention", .. })
        ));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let blk = block(8, 4, 5, true);
        let x: Vec<f64> = (0..5 * 8).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut pass = Pass::for_test(1.0, false, 0, 0);
        // recompute one head's weights directly
        let x2 = pass.graph.constant(x, &[5, 8]).unwrap();
        let q = blk.query.forward(&mut pass, x2).unwrap();
        let k = blk.key.forward(&mut pass, x2).unwrap();
        let qh = pass.graph.slice(q, 1, 0, 2).unwrap();
        let kh = pass.graph.slice(k, 1, 0, 2).unwrap();
        let kt = pass.graph.transpose_last2(kh).unwrap();
        let logits = pass.graph.matmul(qh, kt).unwrap();
        let w = pass.graph.softmax_lastdim(logits).unwrap();
        for r in 0..5 {
            let total: f64 = pass.graph.data(w)[r * 5..(r + 1) * 5].iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }
}
