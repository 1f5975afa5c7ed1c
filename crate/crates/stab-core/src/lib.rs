//! STab: a stochastic-competition transformer engine for tabular data.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense f64 tensors with a per-pass reverse-mode graph
//! - [`stochastic`]: Gumbel noise, LWTA layers, mixture embeddings, KL terms
//! - [`encoder`]: the hybrid transformer layer (biased attention + parallel
//!   aggregation branch)
//! - [`model`]: feature tokenizer, layer stack, task head, Bayesian-averaged
//!   prediction
//! - [`train`]: the KL-regularized objective, AdamW, warm-up/plateau
//!   schedule and the epoch loop
//! - [`data`]: CSV ingestion, preprocessing, synthetic tasks and metrics

pub mod data;
pub mod encoder;
pub mod error;
pub mod model;
pub mod param;
pub mod pass;
pub mod stochastic;
pub mod tensor;
pub mod train;

pub use error::{Result, StabError};
pub use param::{Linear, Param, ParamInit, ParamStore};
pub use pass::Pass;
