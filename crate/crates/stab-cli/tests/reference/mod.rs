//! Hand-rolled pre-norm transformer encoder layer, written with plain
//! loops and no graph machinery. Serves as the independent oracle the
//! engine's plain-wired hybrid layer must reproduce.

use stab_core::encoder::{Ffn, HybridLayer};

const LN_EPS: f64 = 1e-5;

fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = s;
        }
    }
    out
}

fn linear(x: &[f64], rows: usize, w: &[f64], b: &[f64], in_dim: usize, out_dim: usize) -> Vec<f64> {
    let mut out = matmul(x, w, rows, in_dim, out_dim);
    for r in 0..rows {
        for c in 0..out_dim {
            out[r * out_dim + c] += b[c];
        }
    }
    out
}

fn layer_norm(x: &[f64], rows: usize, d: usize, scale: &[f64], shift: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * d];
    let inv_d = 1.0 / d as f64;
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean: f64 = row.iter().map(|v| v * inv_d).sum();
        let var: f64 = row.iter().map(|v| (v - mean) * (v - mean) * inv_d).sum();
        let inv_std = 1.0 / (var + LN_EPS).sqrt();
        for c in 0..d {
            out[r * d + c] = (row[c] - mean) * inv_std * scale[c] + shift[c];
        }
    }
    out
}

fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Standard multi-head self-attention over one batch row of `t` tokens.
fn attention(h: &[f64], t: usize, d: usize, heads: usize, layer: &HybridLayer) -> Vec<f64> {
    let attn = &layer.attention;
    let q = linear(h, t, &attn.query.w.data, &attn.query.b.data, d, d);
    let k = linear(h, t, &attn.key.w.data, &attn.key.b.data, d, d);
    let v = linear(h, t, &attn.value.w.data, &attn.value.b.data, d, d);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut merged = vec![0.0; t * d];
    for head in 0..heads {
        let off = head * dh;
        for i in 0..t {
            let mut logits = vec![0.0; t];
            for j in 0..t {
                let mut s = 0.0;
                for p in 0..dh {
                    s += q[i * d + off + p] * k[j * d + off + p];
                }
                logits[j] = s * scale;
            }
            softmax_row(&mut logits);
            for p in 0..dh {
                let mut s = 0.0;
                for j in 0..t {
                    s += logits[j] * v[j * d + off + p];
                }
                merged[i * d + off + p] = s;
            }
        }
    }
    linear(&merged, t, &attn.output.w.data, &attn.output.b.data, d, d)
}

/// Pre-norm encoder layer: H1 = H + Attn(LN(H)); H2 = H1 + FFN(LN(H1)) with
/// a rectifier activation. Expects a layer wired without bias, parallel
/// branch or stochastic FFN.
pub fn encoder_layer(h: &[f64], batch: usize, t: usize, d: usize, layer: &HybridLayer) -> Vec<f64> {
    assert!(layer.attention.bias.is_none() && layer.parallel.is_none());
    let (lin1, lin2) = match &layer.ffn {
        Ffn::Deterministic { lin1, lin2 } => (lin1, lin2),
        Ffn::Stochastic { .. } => panic!("reference layer needs the deterministic FFN"),
    };
    let heads = layer.attention.heads;
    let hidden = lin1.w.shape[1];

    let mut out = Vec::with_capacity(batch * t * d);
    for b in 0..batch {
        let rows = &h[b * t * d..(b + 1) * t * d];
        let normed = layer_norm(rows, t, d, &layer.norm_attn.scale.data, &layer.norm_attn.shift.data);
        let attended = attention(&normed, t, d, heads, layer);
        let h1: Vec<f64> = rows.iter().zip(&attended).map(|(a, b)| a + b).collect();

        let normed = layer_norm(&h1, t, d, &layer.norm_ffn.scale.data, &layer.norm_ffn.shift.data);
        let mut mid = linear(&normed, t, &lin1.w.data, &lin1.b.data, d, hidden);
        for v in &mut mid {
            *v = v.max(0.0);
        }
        let ffn = linear(&mid, t, &lin2.w.data, &lin2.b.data, hidden, d);
        out.extend(h1.iter().zip(&ffn).map(|(a, b)| a + b));
    }
    out
}
