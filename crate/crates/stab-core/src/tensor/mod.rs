//! Dense f64 tensors and a per-pass reverse-mode differentiation graph.
//!
//! The graph is an arena: every tensor produced during a forward pass lives
//! inside it and is addressed by a [`TensorId`]. Applying a primitive records
//! a node (op + input ids) whenever some input needs a gradient; [`Graph::backward`]
//! replays the node list in reverse. A graph is built per forward pass and
//! dropped afterwards — parameters live outside it as [`crate::param::Param`]
//! buffers and are re-inserted as leaves each pass.

mod gradcheck;
mod kernels;

pub use gradcheck::{finite_difference_check, param_fd_max_error};

use std::collections::HashMap;

use crate::error::{Result, StabError};

/// Handle to a tensor inside one [`Graph`]. Only meaningful for the graph
/// that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(u32);

/// A dense row-major tensor stored in the graph arena.
#[derive(Debug, Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    /// True when this tensor is a grad leaf or depends on one.
    needs_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// The primitive operations the engine differentiates through.
///
/// Shape-changing ops carry their static parameters so a node replay needs
/// nothing beyond its inputs.
#[derive(Debug, Clone)]
pub enum PrimitiveOp {
    MatMul,
    Add,
    Sub,
    MulElementwise,
    ScalarMul(f64),
    Exp,
    Log,
    SoftmaxLastDim,
    Sum,
    Mean,
    Reshape(Vec<usize>),
    Slice { axis: usize, start: usize, len: usize },
    ConcatLastDim,
    TransposeLast2,
    Relu,
    DropoutMaskApply,
}

impl PrimitiveOp {
    fn name(&self) -> &'static str {
        match self {
            PrimitiveOp::MatMul => "matmul",
            PrimitiveOp::Add => "add",
            PrimitiveOp::Sub => "sub",
            PrimitiveOp::MulElementwise => "mul_elementwise",
            PrimitiveOp::ScalarMul(_) => "scalar_mul",
            PrimitiveOp::Exp => "exp",
            PrimitiveOp::Log => "log",
            PrimitiveOp::SoftmaxLastDim => "softmax_lastdim",
            PrimitiveOp::Sum => "sum",
            PrimitiveOp::Mean => "mean",
            PrimitiveOp::Reshape(_) => "reshape",
            PrimitiveOp::Slice { .. } => "slice",
            PrimitiveOp::ConcatLastDim => "concat_lastdim",
            PrimitiveOp::TransposeLast2 => "transpose_last2",
            PrimitiveOp::Relu => "relu",
            PrimitiveOp::DropoutMaskApply => "dropout_mask_apply",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: PrimitiveOp,
    inputs: Vec<TensorId>,
    output: TensorId,
}

/// Gradients of one backward pass, keyed by the leaves that requested them.
#[derive(Debug, Default)]
pub struct GradientMap {
    grads: HashMap<TensorId, Vec<f64>>,
}

impl GradientMap {
    pub fn get(&self, id: TensorId) -> Option<&[f64]> {
        self.grads.get(&id).map(|g| g.as_slice())
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Arena of tensors plus the recorded primitive applications, in insertion
/// order. Insertion order is a topological order by construction: a node's
/// inputs always precede it.
#[derive(Debug, Default)]
pub struct Graph {
    tensors: Vec<Tensor>,
    nodes: Vec<Node>,
}

fn dim_err(op: &'static str, detail: String) -> StabError {
    StabError::Dimension { op, detail }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of tensors currently held.
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Number of recorded primitive applications.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    // ── Construction ────────────────────────────────────────────────

    /// Insert a leaf tensor. `requires_grad` marks it as a gradient target.
    pub fn leaf(&mut self, data: Vec<f64>, shape: &[usize], requires_grad: bool) -> Result<TensorId> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(dim_err(
                "leaf",
                format!("buffer of length {} does not fill shape {:?}", data.len(), shape),
            ));
        }
        Ok(self.push(Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad,
            needs_grad: requires_grad,
            grad: None,
        }))
    }

    /// Insert a constant (non-differentiable) tensor.
    pub fn constant(&mut self, data: Vec<f64>, shape: &[usize]) -> Result<TensorId> {
        self.leaf(data, shape, false)
    }

    /// Insert a rank-0 constant scalar.
    pub fn scalar(&mut self, value: f64) -> TensorId {
        self.leaf(vec![value], &[], false).expect("scalar leaf")
    }

    fn push(&mut self, t: Tensor) -> TensorId {
        let id = TensorId(self.tensors.len() as u32);
        self.tensors.push(t);
        id
    }

    // ── Accessors ───────────────────────────────────────────────────

    pub fn tensor(&self, id: TensorId) -> &Tensor {
        &self.tensors[id.0 as usize]
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.tensors[id.0 as usize].shape
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.tensors[id.0 as usize].data
    }

    /// Value of a one-element tensor.
    pub fn value(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.tensor(id).numel(), 1, "value() on non-scalar tensor");
        self.tensors[id.0 as usize].data[0]
    }

    /// Gradient buffer populated by the last [`Graph::backward`], if any.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.tensors[id.0 as usize].grad.as_deref()
    }

    // ── Primitive application ───────────────────────────────────────

    /// Apply one primitive. Records a graph node when any input needs a
    /// gradient; otherwise only the output value is stored.
    pub fn apply_primitive(&mut self, op: PrimitiveOp, inputs: &[TensorId]) -> Result<TensorId> {
        let (data, shape) = self.eval(&op, inputs)?;
        if let PrimitiveOp::DropoutMaskApply = op {
            if self.tensor(inputs[1]).requires_grad {
                return Err(StabError::Contract(
                    "dropout_mask_apply: the mask must not require gradients".into(),
                ));
            }
        }
        let needs_grad = inputs.iter().any(|&i| self.tensor(i).needs_grad);
        let out = self.push(Tensor {
            shape,
            data,
            requires_grad: false,
            needs_grad,
            grad: None,
        });
        if needs_grad {
            self.nodes.push(Node { op, inputs: inputs.to_vec(), output: out });
        }
        Ok(out)
    }

    // ── Convenience wrappers ────────────────────────────────────────

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::Add, &[a, b])
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::MulElementwise, &[a, b])
    }

    pub fn scalar_mul(&mut self, x: TensorId, factor: f64) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::ScalarMul(factor), &[x])
    }

    pub fn exp(&mut self, x: TensorId) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::Exp, &[x])
    }

    pub fn log(&mut self, x: TensorId) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::Log, &[x])
    }

    pub fn softmax_lastdim(&mut self, x: TensorId) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::SoftmaxLastDim, &[x])
    }

    pub fn sum(&mut self, x: TensorId) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::Sum, &[x])
    }

    pub fn mean(&mut self, x: TensorId) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::Mean, &[x])
    }

    pub fn reshape(&mut self, x: TensorId, shape: &[usize]) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::Reshape(shape.to_vec()), &[x])
    }

    pub fn slice(&mut self, x: TensorId, axis: usize, start: usize, len: usize) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::Slice { axis, start, len }, &[x])
    }

    pub fn concat_lastdim(&mut self, inputs: &[TensorId]) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::ConcatLastDim, inputs)
    }

    pub fn transpose_last2(&mut self, x: TensorId) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::TransposeLast2, &[x])
    }

    pub fn relu(&mut self, x: TensorId) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::Relu, &[x])
    }

    pub fn dropout_mask_apply(&mut self, x: TensorId, mask: TensorId) -> Result<TensorId> {
        self.apply_primitive(PrimitiveOp::DropoutMaskApply, &[x, mask])
    }

    // ── Forward evaluation ──────────────────────────────────────────

    fn eval(&self, op: &PrimitiveOp, inputs: &[TensorId]) -> Result<(Vec<f64>, Vec<usize>)> {
        let arity_ok = match op {
            PrimitiveOp::ConcatLastDim => !inputs.is_empty(),
            PrimitiveOp::MatMul
            | PrimitiveOp::Add
            | PrimitiveOp::Sub
            | PrimitiveOp::MulElementwise
            | PrimitiveOp::DropoutMaskApply => inputs.len() == 2,
            _ => inputs.len() == 1,
        };
        if !arity_ok {
            return Err(dim_err(op.name(), format!("wrong arity: {} inputs", inputs.len())));
        }
        match op {
            PrimitiveOp::MatMul => self.eval_matmul(inputs[0], inputs[1]),
            PrimitiveOp::Add => self.eval_addsub(inputs[0], inputs[1], false),
            PrimitiveOp::Sub => self.eval_addsub(inputs[0], inputs[1], true),
            PrimitiveOp::MulElementwise => self.eval_mul(inputs[0], inputs[1]),
            PrimitiveOp::ScalarMul(c) => {
                let x = self.tensor(inputs[0]);
                Ok((x.data.iter().map(|v| v * c).collect(), x.shape.clone()))
            }
            PrimitiveOp::Exp => {
                let x = self.tensor(inputs[0]);
                Ok((x.data.iter().map(|v| v.exp()).collect(), x.shape.clone()))
            }
            PrimitiveOp::Log => {
                let x = self.tensor(inputs[0]);
                if let Some(pos) = x.data.iter().position(|&v| v <= 0.0) {
                    return Err(StabError::Domain {
                        op: "log",
                        detail: format!("non-positive entry {} at flat index {}", x.data[pos], pos),
                    });
                }
                Ok((x.data.iter().map(|v| v.ln()).collect(), x.shape.clone()))
            }
            PrimitiveOp::SoftmaxLastDim => {
                let x = self.tensor(inputs[0]);
                let width = *x.shape.last().ok_or_else(|| {
                    dim_err("softmax_lastdim", "rank-0 input".into())
                })?;
                if width == 0 {
                    return Err(dim_err("softmax_lastdim", "last dimension is empty".into()));
                }
                Ok((kernels::softmax_rows(&x.data, width), x.shape.clone()))
            }
            PrimitiveOp::Sum => {
                let x = self.tensor(inputs[0]);
                Ok((vec![x.data.iter().sum()], vec![]))
            }
            PrimitiveOp::Mean => {
                let x = self.tensor(inputs[0]);
                if x.data.is_empty() {
                    return Err(StabError::Domain { op: "mean", detail: "empty tensor".into() });
                }
                let n = x.data.len() as f64;
                Ok((vec![x.data.iter().sum::<f64>() / n], vec![]))
            }
            PrimitiveOp::Reshape(shape) => {
                let x = self.tensor(inputs[0]);
                let numel: usize = shape.iter().product();
                if numel != x.numel() {
                    return Err(dim_err(
                        "reshape",
                        format!("cannot view {:?} as {:?}", x.shape, shape),
                    ));
                }
                Ok((x.data.clone(), shape.clone()))
            }
            PrimitiveOp::Slice { axis, start, len } => {
                let x = self.tensor(inputs[0]);
                if *axis >= x.shape.len() {
                    return Err(dim_err(
                        "slice",
                        format!("axis {} out of range for shape {:?}", axis, x.shape),
                    ));
                }
                if start + len > x.shape[*axis] || *len == 0 {
                    return Err(dim_err(
                        "slice",
                        format!(
                            "range {}..{} invalid for extent {} of shape {:?}",
                            start,
                            start + len,
                            x.shape[*axis],
                            x.shape
                        ),
                    ));
                }
                let mut shape = x.shape.clone();
                shape[*axis] = *len;
                let data = kernels::slice_axis(&x.data, &x.shape, *axis, *start, *len);
                Ok((data, shape))
            }
            PrimitiveOp::ConcatLastDim => {
                let first = self.tensor(inputs[0]);
                if first.shape.is_empty() {
                    return Err(dim_err("concat_lastdim", "rank-0 input".into()));
                }
                let lead = &first.shape[..first.shape.len() - 1];
                let mut widths = Vec::with_capacity(inputs.len());
                for &i in inputs {
                    let t = self.tensor(i);
                    if t.shape.len() != first.shape.len() || &t.shape[..t.shape.len() - 1] != lead {
                        return Err(dim_err(
                            "concat_lastdim",
                            format!("incompatible shapes {:?} and {:?}", first.shape, t.shape),
                        ));
                    }
                    widths.push(*t.shape.last().unwrap());
                }
                let total: usize = widths.iter().sum();
                let rows: usize = lead.iter().product();
                let mut data = Vec::with_capacity(rows * total);
                for r in 0..rows {
                    for (&i, &w) in inputs.iter().zip(&widths) {
                        let src = &self.tensor(i).data[r * w..(r + 1) * w];
                        data.extend_from_slice(src);
                    }
                }
                let mut shape = lead.to_vec();
                shape.push(total);
                Ok((data, shape))
            }
            PrimitiveOp::TransposeLast2 => {
                let x = self.tensor(inputs[0]);
                if x.shape.len() < 2 {
                    return Err(dim_err(
                        "transpose_last2",
                        format!("needs rank >= 2, got {:?}", x.shape),
                    ));
                }
                let (rows, cols) = (x.shape[x.shape.len() - 2], x.shape[x.shape.len() - 1]);
                let batch = x.numel() / (rows * cols).max(1);
                let mut data = vec![0.0; x.numel()];
                for b in 0..batch {
                    kernels::transpose_2d(
                        &x.data[b * rows * cols..(b + 1) * rows * cols],
                        rows,
                        cols,
                        &mut data[b * rows * cols..(b + 1) * rows * cols],
                    );
                }
                let mut shape = x.shape.clone();
                let n = shape.len();
                shape.swap(n - 2, n - 1);
                Ok((data, shape))
            }
            PrimitiveOp::Relu => {
                let x = self.tensor(inputs[0]);
                Ok((x.data.iter().map(|v| v.max(0.0)).collect(), x.shape.clone()))
            }
            PrimitiveOp::DropoutMaskApply => {
                let x = self.tensor(inputs[0]);
                let m = self.tensor(inputs[1]);
                if x.shape != m.shape {
                    return Err(dim_err(
                        "dropout_mask_apply",
                        format!("input {:?} vs mask {:?}", x.shape, m.shape),
                    ));
                }
                let data = x.data.iter().zip(&m.data).map(|(a, b)| a * b).collect();
                Ok((data, x.shape.clone()))
            }
        }
    }

    fn eval_matmul(&self, a: TensorId, b: TensorId) -> Result<(Vec<f64>, Vec<usize>)> {
        let (ta, tb) = (self.tensor(a), self.tensor(b));
        match (ta.shape.len(), tb.shape.len()) {
            (2, 2) => {
                let (m, k) = (ta.shape[0], ta.shape[1]);
                let (k2, n) = (tb.shape[0], tb.shape[1]);
                if k != k2 {
                    return Err(dim_err(
                        "matmul",
                        format!("inner dims differ: {:?} x {:?}", ta.shape, tb.shape),
                    ));
                }
                let mut out = vec![0.0; m * n];
                kernels::matmul_2d(&ta.data, &tb.data, m, k, n, &mut out);
                Ok((out, vec![m, n]))
            }
            (3, 3) => {
                let (batch, m, k) = (ta.shape[0], ta.shape[1], ta.shape[2]);
                let (batch2, k2, n) = (tb.shape[0], tb.shape[1], tb.shape[2]);
                if batch != batch2 || k != k2 {
                    return Err(dim_err(
                        "matmul",
                        format!("batched shapes incompatible: {:?} x {:?}", ta.shape, tb.shape),
                    ));
                }
                let mut out = vec![0.0; batch * m * n];
                for i in 0..batch {
                    kernels::matmul_2d(
                        &ta.data[i * m * k..(i + 1) * m * k],
                        &tb.data[i * k * n..(i + 1) * k * n],
                        m,
                        k,
                        n,
                        &mut out[i * m * n..(i + 1) * m * n],
                    );
                }
                Ok((out, vec![batch, m, n]))
            }
            _ => Err(dim_err(
                "matmul",
                format!("supports 2D x 2D or 3D x 3D, got {:?} x {:?}", ta.shape, tb.shape),
            )),
        }
    }

    /// Addition/subtraction with the supported broadcasts: identical shapes,
    /// a rank-0/one-element scalar on either side, or (addition only) a bias
    /// whose shape is a trailing suffix of the other operand's shape.
    fn eval_addsub(&self, a: TensorId, b: TensorId, negate: bool) -> Result<(Vec<f64>, Vec<usize>)> {
        let name: &'static str = if negate { "sub" } else { "add" };
        let (ta, tb) = (self.tensor(a), self.tensor(b));
        let sgn = if negate { -1.0 } else { 1.0 };
        if ta.shape == tb.shape {
            let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + sgn * y).collect();
            return Ok((data, ta.shape.clone()));
        }
        if tb.numel() == 1 {
            let c = sgn * tb.data[0];
            return Ok((ta.data.iter().map(|x| x + c).collect(), ta.shape.clone()));
        }
        if ta.numel() == 1 {
            let c = ta.data[0];
            return Ok((tb.data.iter().map(|y| c + sgn * y).collect(), tb.shape.clone()));
        }
        if !negate {
            if let Some(data) = kernels::suffix_add(&ta.data, &ta.shape, &tb.data, &tb.shape) {
                return Ok((data, ta.shape.clone()));
            }
            if let Some(data) = kernels::suffix_add(&tb.data, &tb.shape, &ta.data, &ta.shape) {
                return Ok((data, tb.shape.clone()));
            }
        }
        Err(dim_err(name, format!("unsupported broadcast: {:?} vs {:?}", ta.shape, tb.shape)))
    }

    fn eval_mul(&self, a: TensorId, b: TensorId) -> Result<(Vec<f64>, Vec<usize>)> {
        let (ta, tb) = (self.tensor(a), self.tensor(b));
        if ta.shape == tb.shape {
            let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
            return Ok((data, ta.shape.clone()));
        }
        if tb.numel() == 1 {
            let c = tb.data[0];
            return Ok((ta.data.iter().map(|x| x * c).collect(), ta.shape.clone()));
        }
        if ta.numel() == 1 {
            let c = ta.data[0];
            return Ok((tb.data.iter().map(|y| c * y).collect(), tb.shape.clone()));
        }
        Err(dim_err(
            "mul_elementwise",
            format!("unsupported broadcast: {:?} vs {:?}", ta.shape, tb.shape),
        ))
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Every leaf created with
    /// `requires_grad` appears in the returned map; leaves the loss does not
    /// reach get zero buffers.
    pub fn backward(&mut self, loss: TensorId) -> Result<GradientMap> {
        if self.tensor(loss).numel() != 1 {
            return Err(StabError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for t in &mut self.tensors {
            t.grad = None;
        }
        self.tensors[loss.0 as usize].grad = Some(vec![1.0]);

        for ni in (0..self.nodes.len()).rev() {
            let node = self.nodes[ni].clone();
            let out_grad = match &self.tensors[node.output.0 as usize].grad {
                Some(g) => g.clone(),
                None => continue, // output discarded: contributes nothing
            };
            self.accumulate_input_grads(&node, &out_grad)?;
        }

        let mut map = GradientMap::default();
        for (i, t) in self.tensors.iter().enumerate() {
            if t.requires_grad {
                let g = t.grad.clone().unwrap_or_else(|| vec![0.0; t.numel()]);
                map.grads.insert(TensorId(i as u32), g);
            }
        }
        Ok(map)
    }

    fn add_to_grad(&mut self, id: TensorId, delta: &[f64]) {
        let t = &mut self.tensors[id.0 as usize];
        if !t.needs_grad {
            return;
        }
        let grad = t.grad.get_or_insert_with(|| vec![0.0; delta.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    fn accumulate_input_grads(&mut self, node: &Node, g: &[f64]) -> Result<()> {
        match &node.op {
            PrimitiveOp::MatMul => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let sa = self.shape(a).to_vec();
                let sb = self.shape(b).to_vec();
                let (batch, m, k, n) = if sa.len() == 2 {
                    (1, sa[0], sa[1], sb[1])
                } else {
                    (sa[0], sa[1], sa[2], sb[2])
                };
                let mut da = vec![0.0; batch * m * k];
                let mut db = vec![0.0; batch * k * n];
                for i in 0..batch {
                    let ga = &g[i * m * n..(i + 1) * m * n];
                    let ad = &self.tensor(a).data[i * m * k..(i + 1) * m * k];
                    let bd = &self.tensor(b).data[i * k * n..(i + 1) * k * n];
                    // dA = g @ B^T ; dB = A^T @ g
                    kernels::matmul_2d_nt(ga, bd, m, n, k, &mut da[i * m * k..(i + 1) * m * k]);
                    kernels::matmul_2d_tn(ad, ga, m, k, n, &mut db[i * k * n..(i + 1) * k * n]);
                }
                self.add_to_grad(a, &da);
                self.add_to_grad(b, &db);
            }
            PrimitiveOp::Add | PrimitiveOp::Sub => {
                let negate = matches!(node.op, PrimitiveOp::Sub);
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let da = self.reduce_to_operand(g, a);
                self.add_to_grad(a, &da);
                let mut db = self.reduce_to_operand(g, b);
                if negate {
                    for v in &mut db {
                        *v = -*v;
                    }
                }
                self.add_to_grad(b, &db);
            }
            PrimitiveOp::MulElementwise => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let (na, nb) = (self.tensor(a).numel(), self.tensor(b).numel());
                if na == nb {
                    let da: Vec<f64> =
                        g.iter().zip(&self.tensor(b).data).map(|(g, y)| g * y).collect();
                    let db: Vec<f64> =
                        g.iter().zip(&self.tensor(a).data).map(|(g, x)| g * x).collect();
                    self.add_to_grad(a, &da);
                    self.add_to_grad(b, &db);
                } else if nb == 1 {
                    let c = self.tensor(b).data[0];
                    let da: Vec<f64> = g.iter().map(|g| g * c).collect();
                    let db = vec![g.iter().zip(&self.tensor(a).data).map(|(g, x)| g * x).sum()];
                    self.add_to_grad(a, &da);
                    self.add_to_grad(b, &db);
                } else {
                    let c = self.tensor(a).data[0];
                    let db: Vec<f64> = g.iter().map(|g| g * c).collect();
                    let da = vec![g.iter().zip(&self.tensor(b).data).map(|(g, y)| g * y).sum()];
                    self.add_to_grad(a, &da);
                    self.add_to_grad(b, &db);
                }
            }
            PrimitiveOp::ScalarMul(c) => {
                let da: Vec<f64> = g.iter().map(|g| g * c).collect();
                self.add_to_grad(node.inputs[0], &da);
            }
            PrimitiveOp::Exp => {
                let out = &self.tensor(node.output).data;
                let da: Vec<f64> = g.iter().zip(out).map(|(g, e)| g * e).collect();
                self.add_to_grad(node.inputs[0], &da);
            }
            PrimitiveOp::Log => {
                let x = &self.tensor(node.inputs[0]).data;
                let da: Vec<f64> = g.iter().zip(x).map(|(g, x)| g / x).collect();
                self.add_to_grad(node.inputs[0], &da);
            }
            PrimitiveOp::SoftmaxLastDim => {
                let out = self.tensor(node.output);
                let width = *out.shape.last().unwrap();
                let mut da = vec![0.0; out.numel()];
                for r in 0..out.numel() / width {
                    let s = &out.data[r * width..(r + 1) * width];
                    let gr = &g[r * width..(r + 1) * width];
                    let dot: f64 = s.iter().zip(gr).map(|(s, g)| s * g).sum();
                    for i in 0..width {
                        da[r * width + i] = s[i] * (gr[i] - dot);
                    }
                }
                self.add_to_grad(node.inputs[0], &da);
            }
            PrimitiveOp::Sum => {
                let n = self.tensor(node.inputs[0]).numel();
                self.add_to_grad(node.inputs[0], &vec![g[0]; n]);
            }
            PrimitiveOp::Mean => {
                let n = self.tensor(node.inputs[0]).numel();
                self.add_to_grad(node.inputs[0], &vec![g[0] / n as f64; n]);
            }
            PrimitiveOp::Reshape(_) => {
                self.add_to_grad(node.inputs[0], g);
            }
            PrimitiveOp::Slice { axis, start, len } => {
                let x = self.tensor(node.inputs[0]);
                let mut da = vec![0.0; x.numel()];
                kernels::scatter_slice_axis(g, &x.shape.clone(), *axis, *start, *len, &mut da);
                self.add_to_grad(node.inputs[0], &da);
            }
            PrimitiveOp::ConcatLastDim => {
                let widths: Vec<usize> = node
                    .inputs
                    .iter()
                    .map(|&i| *self.tensor(i).shape.last().unwrap())
                    .collect();
                let total: usize = widths.iter().sum();
                let rows = g.len() / total;
                let mut offset = 0;
                for (idx, &w) in widths.iter().enumerate() {
                    let mut da = vec![0.0; rows * w];
                    for r in 0..rows {
                        da[r * w..(r + 1) * w]
                            .copy_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    self.add_to_grad(node.inputs[idx], &da);
                    offset += w;
                }
            }
            PrimitiveOp::TransposeLast2 => {
                let out_shape = self.shape(node.output).to_vec();
                let n = out_shape.len();
                let (rows, cols) = (out_shape[n - 2], out_shape[n - 1]);
                let batch = g.len() / (rows * cols);
                let mut da = vec![0.0; g.len()];
                for b in 0..batch {
                    kernels::transpose_2d(
                        &g[b * rows * cols..(b + 1) * rows * cols],
                        rows,
                        cols,
                        &mut da[b * rows * cols..(b + 1) * rows * cols],
                    );
                }
                self.add_to_grad(node.inputs[0], &da);
            }
            PrimitiveOp::Relu => {
                let x = &self.tensor(node.inputs[0]).data;
                let da: Vec<f64> =
                    g.iter().zip(x).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect();
                self.add_to_grad(node.inputs[0], &da);
            }
            PrimitiveOp::DropoutMaskApply => {
                let m = &self.tensor(node.inputs[1]).data;
                let da: Vec<f64> = g.iter().zip(m).map(|(g, m)| g * m).collect();
                self.add_to_grad(node.inputs[0], &da);
            }
        }
        Ok(())
    }

    /// Fold an output gradient back onto one operand of add/sub, honouring
    /// the scalar and trailing-suffix broadcasts.
    fn reduce_to_operand(&self, g: &[f64], operand: TensorId) -> Vec<f64> {
        let n = self.tensor(operand).numel();
        if n == g.len() {
            return g.to_vec();
        }
        if n == 1 {
            return vec![g.iter().sum()];
        }
        // suffix broadcast: g length is a multiple of the operand length
        let mut da = vec![0.0; n];
        for (i, v) in g.iter().enumerate() {
            da[i % n] += v;
        }
        da
    }
}

#[cfg(test)]
mod tests;
