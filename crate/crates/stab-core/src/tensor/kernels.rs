//! Raw f64 kernels behind the graph primitives. All loops are plain and
//! sequential so results are bit-reproducible for a fixed input.

/// C[m,n] = A[m,k] @ B[k,n], accumulating in ascending k order.
pub fn matmul_2d(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = s;
        }
    }
}

/// C[m,k] = A[m,n] @ B[k,n]^T  (B given untransposed, k x n view of its rows).
pub fn matmul_2d_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    for i in 0..m {
        for j in 0..k {
            let mut s = 0.0;
            for p in 0..n {
                s += a[i * n + p] * b[j * n + p];
            }
            out[i * k + j] = s;
        }
    }
}

/// C[k,n] = A[m,k]^T @ B[m,n]  (A given untransposed).
pub fn matmul_2d_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..k {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..m {
                s += a[p * k + i] * b[p * n + j];
            }
            out[i * n + j] = s;
        }
    }
}

pub fn transpose_2d(x: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
}

/// Row-wise max-shifted softmax over contiguous rows of `width`.
pub fn softmax_rows(x: &[f64], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for r in 0..x.len() / width {
        let row = &x[r * width..(r + 1) * width];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, v) in out[r * width..(r + 1) * width].iter_mut().zip(row) {
            *o = (v - max).exp();
            sum += *o;
        }
        for o in &mut out[r * width..(r + 1) * width] {
            *o /= sum;
        }
    }
    out
}

/// Copy the `start..start+len` block along `axis` out of a row-major tensor.
pub fn slice_axis(x: &[f64], shape: &[usize], axis: usize, start: usize, len: usize) -> Vec<f64> {
    let outer: usize = shape[..axis].iter().product();
    let extent = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * extent + start) * inner;
        out.extend_from_slice(&x[base..base + len * inner]);
    }
    out
}

/// Scatter-add a sliced gradient back into the full-tensor gradient buffer.
pub fn scatter_slice_axis(
    g: &[f64],
    full_shape: &[usize],
    axis: usize,
    start: usize,
    len: usize,
    out: &mut [f64],
) {
    let outer: usize = full_shape[..axis].iter().product();
    let extent = full_shape[axis];
    let inner: usize = full_shape[axis + 1..].iter().product();
    for o in 0..outer {
        let dst = (o * extent + start) * inner;
        let src = o * len * inner;
        for i in 0..len * inner {
            out[dst + i] += g[src + i];
        }
    }
}

/// a + tiled b when b's shape is a strict trailing suffix of a's shape.
/// Returns None when the shapes do not nest that way.
pub fn suffix_add(a: &[f64], a_shape: &[usize], b: &[f64], b_shape: &[usize]) -> Option<Vec<f64>> {
    if b_shape.len() >= a_shape.len() || b_shape.is_empty() {
        return None;
    }
    if &a_shape[a_shape.len() - b_shape.len()..] != b_shape {
        return None;
    }
    let n = b.len();
    Some(a.iter().enumerate().map(|(i, v)| v + b[i % n]).collect())
}
