//! Stochastic competition primitives: Gumbel noise, LWTA layers, mixture
//! embeddings and the KL-to-uniform regularizer.

mod kl;
mod lwta;
mod mixture;
mod sampler;

pub use kl::{kl_to_uniform, KlAccumulator};
pub use lwta::{lwta_forward, LwtaLayer};
pub use mixture::{mixture_embed, mixture_embed_batch, EmbeddingMixture};
pub use sampler::{gumbel_from_uniform, GumbelSampler};
