//! Concrete scorers: local checkpoints run in-process and an HTTP client
//! for hosted models.

pub mod gpt2;
pub mod local;
pub mod nn;
pub mod remote;
pub mod roberta;
pub mod t5;

pub use local::{LocalOptions, LocalScorer, MaskedMode, Precision};
pub use remote::{RemoteOptions, RemoteScorer};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    /// Model files or the endpoint cannot be reached.
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}
