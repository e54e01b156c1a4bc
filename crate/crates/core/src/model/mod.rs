//! Tiny LLaMA-style decoder-only transformers: seeded construction, forward
//! evaluation on embedding probes or tokens, training, and the SPCK checkpoint
//! format.

pub mod checkpoint;
mod config;
mod corpus;
mod forward;
mod linalg;
mod params;
mod train;

pub use config::{ArchFamily, InitScheme, ModelConfig, INIT_STD, REFERENCE_WIDTH};
pub use corpus::{Corpus, CorpusStyle};
pub use forward::{
    embed, forward, forward_batch, forward_tokens, forward_tokens_batch, ForwardOutput,
};
pub use params::{init_model, ModelParams, Optimizer, Tensor, TrainProvenance};
pub use train::{train, BatchPlan, Checkpoint, TrainHyper, TrainOutcome};

#[cfg(test)]
mod gradcheck;
