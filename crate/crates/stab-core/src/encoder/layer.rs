//! One hybrid encoder layer: pre-norm attention and feed-forward residual
//! sub-layers, plus the optional parallel branch added to the special token.

use crate::error::{Result, StabError};
use crate::param::{Linear, Param, ParamInit, ParamStore};
use crate::pass::Pass;
use crate::stochastic::{lwta_forward, LwtaLayer};
use crate::tensor::TensorId;

use super::aggregator::{parallel_module, ParallelAggregator};
use super::attention::{biased_attention, AttentionBlock};
use super::norm::LayerNorm;

/// Position-wise feed-forward sub-layer with hidden width 2d. Stochastic
/// variants compete through an LWTA activation; deterministic variants use
/// a rectifier. Parameter names and shapes are identical either way.
#[derive(Debug, Clone)]
pub enum Ffn {
    Deterministic { lin1: Linear, lin2: Linear },
    Stochastic { lwta: LwtaLayer, lin2: Linear },
}

impl Ffn {
    fn new(init: &mut ParamInit, name: &str, dim: usize, stochastic: bool, block_size: usize) -> Self {
        let hidden = 2 * dim;
        if stochastic {
            Ffn::Stochastic {
                lwta: LwtaLayer::new(init, &format!("{name}.lin1"), dim, hidden / block_size, block_size),
                lin2: Linear::new(init, &format!("{name}.lin2"), hidden, dim),
            }
        } else {
            Ffn::Deterministic {
                lin1: Linear::new(init, &format!("{name}.lin1"), dim, hidden),
                lin2: Linear::new(init, &format!("{name}.lin2"), hidden, dim),
            }
        }
    }

    fn forward(&self, pass: &mut Pass, x: TensorId) -> Result<TensorId> {
        match self {
            Ffn::Deterministic { lin1, lin2 } => {
                let h = lin1.forward(pass, x)?;
                let h = pass.graph.relu(h)?;
                let h = pass.dropout(h)?;
                lin2.forward(pass, h)
            }
            Ffn::Stochastic { lwta, lin2 } => {
                let h = lwta_forward(pass, x, lwta)?;
                let h = pass.dropout(h)?;
                lin2.forward(pass, h)
            }
        }
    }
}

impl ParamStore for Ffn {
    fn params(&self) -> Vec<&Param> {
        match self {
            Ffn::Deterministic { lin1, lin2 } => {
                lin1.params().into_iter().chain(lin2.params()).collect()
            }
            Ffn::Stochastic { lwta, lin2 } => {
                lwta.params().into_iter().chain(lin2.params()).collect()
            }
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Ffn::Deterministic { lin1, lin2 } => {
                lin1.params_mut().into_iter().chain(lin2.params_mut()).collect()
            }
            Ffn::Stochastic { lwta, lin2 } => {
                lwta.params_mut().into_iter().chain(lin2.params_mut()).collect()
            }
        }
    }
}

/// A full hybrid encoder layer over (batch, s+1, d) token sequences.
#[derive(Debug, Clone)]
pub struct HybridLayer {
    pub norm_attn: LayerNorm,
    pub attention: AttentionBlock,
    pub norm_ffn: LayerNorm,
    pub ffn: Ffn,
    /// Parallel aggregation branch; absent in non-hybrid variants, in which
    /// case this is a standard pre-norm encoder layer.
    pub parallel: Option<ParallelAggregator>,
}

pub struct HybridLayerSpec {
    pub dim: usize,
    pub heads: usize,
    /// Token count including the special token.
    pub tokens: usize,
    pub stochastic_ffn: bool,
    pub block_size: usize,
    pub attn_bias: bool,
    pub parallel: bool,
}

impl HybridLayer {
    pub fn new(init: &mut ParamInit, name: &str, spec: &HybridLayerSpec) -> Self {
        HybridLayer {
            norm_attn: LayerNorm::new(&format!("{name}.ln1"), spec.dim),
            attention: AttentionBlock::new(
                init,
                &format!("{name}.attn"),
                spec.dim,
                spec.heads,
                spec.tokens,
                spec.attn_bias,
            ),
            norm_ffn: LayerNorm::new(&format!("{name}.ln2"), spec.dim),
            ffn: Ffn::new(init, &format!("{name}.ffn"), spec.dim, spec.stochastic_ffn, spec.block_size),
            parallel: spec.parallel.then(|| {
                ParallelAggregator::new(
                    init,
                    &format!("{name}.par"),
                    spec.tokens - 1,
                    spec.dim,
                    spec.block_size,
                )
            }),
        }
    }
}

impl ParamStore for HybridLayer {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.norm_attn.params();
        p.extend(self.attention.params());
        p.extend(self.norm_ffn.params());
        p.extend(self.ffn.params());
        if let Some(par) = &self.parallel {
            p.extend(par.params());
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.norm_attn.params_mut();
        p.extend(self.attention.params_mut());
        p.extend(self.norm_ffn.params_mut());
        p.extend(self.ffn.params_mut());
        if let Some(par) = &mut self.parallel {
            p.extend(par.params_mut());
        }
        p
    }
}

/// Pre-norm residual encoder layer with the parallel branch feeding the
/// special token:
///
/// H1 = H + Attn(LN(H)); H2 = H1 + FFN(LN(H1));
/// H2[:, 0, :] += Linear(LWTA(Phi(H[:, 1.., :]))) when the branch exists.
///
/// Only the special-token row (slot 0) is touched by the parallel branch.
pub fn hybrid_layer_forward(pass: &mut Pass, h: TensorId, layer: &HybridLayer) -> Result<TensorId> {
    let shape = pass.graph.shape(h).to_vec();
    if shape.len() != 3 {
        return Err(StabError::Dimension {
            op: "hybrid_layer_forward",
            detail: format!("expected (batch, tokens, d), got {:?}", shape),
        });
    }
    let (batch, tokens, dim) = (shape[0], shape[1], shape[2]);

    let normed = layer.norm_attn.forward(pass, h)?;
    let attended = biased_attention(pass, normed, &layer.attention)?;
    let h1 = pass.graph.add(h, attended)?;

    let normed = layer.norm_ffn.forward(pass, h1)?;
    let flat = pass.graph.reshape(normed, &[batch * tokens, dim])?;
    let ffn_out = layer.ffn.forward(pass, flat)?;
    let ffn_out = pass.graph.reshape(ffn_out, &[batch, tokens, dim])?;
    let mut h2 = pass.graph.add(h1, ffn_out)?;

    if let Some(agg) = &layer.parallel {
        let features = pass.graph.slice(h, 1, 1, tokens - 1)?;
        let z = parallel_module(pass, features, agg)?;
        // pad (batch, d) -> (batch, tokens, d) so only slot 0 receives z
        let zeros = pass.graph.constant(vec![0.0; batch * (tokens - 1) * dim], &[batch, (tokens - 1) * dim])?;
        let padded = pass.graph.concat_lastdim(&[z, zeros])?;
        let padded = pass.graph.reshape(padded, &[batch, tokens, dim])?;
        h2 = pass.graph.add(h2, padded)?;
    }
    Ok(h2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dim: usize, tokens: usize, stochastic: bool, parallel: bool, bias: bool) -> HybridLayerSpec {
        HybridLayerSpec {
            dim,
            heads: 2,
            tokens,
            stochastic_ffn: stochastic,
            block_size: 2,
            attn_bias: bias,
            parallel,
        }
    }

    fn input(batch: usize, tokens: usize, dim: usize) -> Vec<f64> {
        (0..batch * tokens * dim).map(|i| ((i * 2654435761 % 1000) as f64 - 500.0) / 400.0).collect()
    }

    #[test]
    fn zeroed_parallel_branch_recovers_the_plain_layer() {
        let mut init = ParamInit::new(8);
        let mut layer = HybridLayer::new(&mut init, "l0", &spec(4, 3, false, true, false));
        {
            let par = layer.parallel.as_mut().unwrap();
            par.out.w.data.iter_mut().for_each(|v| *v = 0.0);
            par.out.b.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut plain = layer.clone();
        plain.parallel = None;

        let x = input(2, 3, 4);
        let mut pa = Pass::for_test(0.69, false, 0, 0);
        let xa = pa.graph.constant(x.clone(), &[2, 3, 4]).unwrap();
        let ya = hybrid_layer_forward(&mut pa, xa, &layer).unwrap();

        let mut pb = Pass::for_test(0.69, false, 0, 0);
        let xb = pb.graph.constant(x, &[2, 3, 4]).unwrap();
        let yb = hybrid_layer_forward(&mut pb, xb, &plain).unwrap();

        assert_eq!(pa.graph.data(ya), pb.graph.data(yb));
    }

    #[test]
    fn shape_is_preserved() {
        let mut init = ParamInit::new(9);
        let layer = HybridLayer::new(&mut init, "l0", &spec(8, 5, true, true, true));
        let mut pass = Pass::for_test(0.69, true, 3, 0);
        let x = pass.graph.constant(input(4, 5, 8), &[4, 5, 8]).unwrap();
        let y = hybrid_layer_forward(&mut pass, x, &layer).unwrap();
        assert_eq!(pass.graph.shape(y), &[4, 5, 8]);
    }

    #[test]
    fn parallel_branch_touches_only_the_special_token_row() {
        let mut init = ParamInit::new(10);
        let layer = HybridLayer::new(&mut init, "l0", &spec(4, 4, false, true, true));
        let mut plain = layer.clone();
        plain.parallel = None;

        let x = input(3, 4, 4);
        let mut pa = Pass::for_test(0.69, false, 0, 0);
        let xa = pa.graph.constant(x.clone(), &[3, 4, 4]).unwrap();
        let ya = hybrid_layer_forward(&mut pa, xa, &layer).unwrap();

        let mut pb = Pass::for_test(0.69, false, 0, 0);
        let xb = pb.graph.constant(x, &[3, 4, 4]).unwrap();
        let yb = hybrid_layer_forward(&mut pb, xb, &plain).unwrap();

        let (a, b) = (pa.graph.data(ya), pb.graph.data(yb));
        for row in 0..3 {
            for tok in 0..4 {
                for k in 0..4 {
                    let i = row * 16 + tok * 4 + k;
                    if tok == 0 {
                        continue;
                    }
                    assert_eq!(a[i] - b[i], 0.0, "row {row} token {tok} dim {k} differs");
                }
            }
        }
        // and the special token does move
        assert!((0..4).any(|k| a[k] != b[k]));
    }
}
