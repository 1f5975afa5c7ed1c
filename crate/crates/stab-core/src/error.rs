//! Error taxonomy shared across the crate.

use thiserror::Error;

/// Unified error type for every fallible operation in the engine.
#[derive(Debug, Error)]
pub enum StabError {
    /// Shapes do not conform to an operation's arity or broadcasting rule.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// Input value outside an operation's mathematical domain.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// A caller-side precondition was violated.
    #[error("contract error: {0}")]
    Contract(String),

    /// Data does not match the declared schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Raw input could not be ingested at all.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// Invalid experiment or model configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Training aborted.
    #[error("training error: {0}")]
    Train(String),

    /// Checkpoint file is malformed or incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, StabError>;

impl StabError {
    /// Short machine-parseable category slug, used by the CLI error prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            StabError::Dimension { .. } => "dimension",
            StabError::Domain { .. } => "domain",
            StabError::Contract(_) => "contract",
            StabError::Schema(_) => "schema",
            StabError::Ingestion(_) => "ingestion",
            StabError::Config(_) => "config",
            StabError::Train(_) => "train",
            StabError::Checkpoint(_) => "checkpoint",
            StabError::Io(_) => "io",
        }
    }
}
