//! Per-forward-pass execution context.
//!
//! A [`Pass`] owns the differentiation graph, the noise stream, the KL
//! accumulator and the mode flags for exactly one forward (and optional
//! backward) sweep. Concurrent passes over a shared model each own their
//! own `Pass` with a distinct sampler stream.

use crate::error::Result;
use crate::param::Param;
use crate::stochastic::{GumbelSampler, KlAccumulator};
use crate::tensor::{Graph, TensorId};

pub struct Pass {
    pub graph: Graph,
    pub sampler: GumbelSampler,
    pub kl: KlAccumulator,
    /// Gumbel-Softmax temperature for this pass.
    pub temperature: f64,
    /// When false, noise is forced to zero (test mode) and dropout masks are
    /// never drawn.
    pub stochastic: bool,
    /// Dropout applies only when this is set (training, or MC-dropout
    /// inference on stochastic models).
    pub dropout_active: bool,
    pub dropout_p: f64,
    trainable: bool,
    bindings: Vec<(String, TensorId)>,
}

impl Pass {
    pub fn new(
        sampler: GumbelSampler,
        temperature: f64,
        stochastic: bool,
        dropout_active: bool,
        dropout_p: f64,
        trainable: bool,
    ) -> Self {
        assert!(temperature > 0.0, "Gumbel-Softmax temperature must be positive");
        Pass {
            graph: Graph::new(),
            sampler,
            kl: KlAccumulator::new(),
            temperature,
            stochastic,
            dropout_active,
            dropout_p,
            trainable,
            bindings: Vec::new(),
        }
    }

    /// Minimal context for exercising single layers: no dropout, gradients
    /// recorded.
    pub fn for_test(temperature: f64, stochastic: bool, seed: u64, stream: u64) -> Self {
        Self::new(GumbelSampler::new(seed, stream), temperature, stochastic, false, 0.0, true)
    }

    /// Insert a parameter as a leaf of this pass and remember the binding.
    /// Each parameter may be bound at most once per pass so its gradient
    /// accumulates on a single leaf.
    pub fn bind(&mut self, p: &Param) -> Result<TensorId> {
        debug_assert!(
            self.bindings.iter().all(|(n, _)| n != &p.name),
            "parameter {} bound twice in one pass",
            p.name
        );
        let id = self.graph.leaf(p.data.clone(), &p.shape, self.trainable)?;
        self.bindings.push((p.name.clone(), id));
        Ok(id)
    }

    /// (name, leaf) pairs bound so far, in binding order.
    pub fn bindings(&self) -> &[(String, TensorId)] {
        &self.bindings
    }

    /// Route a backward result to parameter names via this pass's bindings.
    pub fn named_gradients(
        &self,
        map: &crate::tensor::GradientMap,
    ) -> std::collections::HashMap<String, Vec<f64>> {
        self.bindings
            .iter()
            .map(|(name, id)| {
                let g = map
                    .get(*id)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; self.graph.tensor(*id).numel()]);
                (name.clone(), g)
            })
            .collect()
    }

    /// Fresh Gumbel(0,1) noise as a constant tensor.
    pub fn gumbel_tensor(&mut self, shape: &[usize]) -> Result<TensorId> {
        let n = shape.iter().product();
        let noise = self.sampler.gumbel_vec(n);
        self.graph.constant(noise, shape)
    }

    /// Apply inverted dropout when active; identity otherwise.
    pub fn dropout(&mut self, x: TensorId) -> Result<TensorId> {
        if !self.dropout_active || self.dropout_p <= 0.0 {
            return Ok(x);
        }
        let shape = self.graph.shape(x).to_vec();
        let mask = self.sampler.dropout_mask(shape.iter().product(), self.dropout_p);
        let mask = self.graph.constant(mask, &shape)?;
        self.graph.dropout_mask_apply(x, mask)
    }
}
