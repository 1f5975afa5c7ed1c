//! The hybrid transformer encoder layer: biased multi-head self-attention,
//! a position-wise feed-forward sub-layer, and an optional parallel LWTA
//! aggregation branch feeding the special token.

mod aggregator;
mod attention;
mod layer;
mod norm;

pub use aggregator::{parallel_module, phi_aggregate, ParallelAggregator};
pub use attention::{biased_attention, AttentionBlock};
pub use layer::{hybrid_layer_forward, Ffn, HybridLayer, HybridLayerSpec};
pub use norm::LayerNorm;
