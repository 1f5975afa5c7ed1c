//! Named trainable parameters and their initialization.
//!
//! Parameters outlive the per-pass graphs: each forward pass binds them as
//! gradient leaves, and the optimizer mutates the buffers in between.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::pass::Pass;
use crate::tensor::TensorId;

/// Anything that owns an ordered collection of named parameters.
pub trait ParamStore {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }
}

/// One trainable buffer with a stable name used for gradient routing,
/// optimizer state and checkpoints.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, data.len(), "param buffer does not fill its shape");
        Param { name: name.into(), shape: shape.to_vec(), data }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Self::new(name, shape, vec![0.0; numel])
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Deterministic initializer; one instance per model build.
pub struct ParamInit {
    rng: ChaCha8Rng,
}

impl ParamInit {
    pub fn new(seed: u64) -> Self {
        ParamInit { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Uniform in (-bound, bound).
    pub fn uniform(&mut self, name: impl Into<String>, shape: &[usize], bound: f64) -> Param {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| self.rng.gen_range(-bound..bound)).collect();
        Param::new(name, shape, data)
    }

    /// Standard linear-layer init: uniform with bound 1/sqrt(fan_in).
    pub fn linear(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize) -> Param {
        self.uniform(name, shape, 1.0 / (fan_in.max(1) as f64).sqrt())
    }
}

/// A dense affine map `x @ w + b` over the last dimension of a 2-D input.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
}

impl Linear {
    pub fn new(init: &mut ParamInit, name: &str, in_dim: usize, out_dim: usize) -> Self {
        Linear {
            w: init.linear(format!("{name}.w"), &[in_dim, out_dim], in_dim),
            b: init.linear(format!("{name}.b"), &[out_dim], in_dim),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape[1]
    }

    /// Apply to a (rows, in_dim) tensor already in the pass graph.
    pub fn forward(&self, pass: &mut Pass, x: TensorId) -> Result<TensorId> {
        let w = pass.bind(&self.w)?;
        let b = pass.bind(&self.b)?;
        let y = pass.graph.matmul(x, w)?;
        pass.graph.add(y, b)
    }
}

impl ParamStore for Linear {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}
