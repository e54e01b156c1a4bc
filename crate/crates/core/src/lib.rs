//! Lineage fingerprinting for language models from initialization-born biases.
//!
//! A freshly initialized transformer already prefers some output coordinates
//! over others on random inputs, and those preferences survive training. This
//! crate builds tiny LLaMA-style models, probes them with random embedding
//! sequences, extracts the coordinates each model is least willing to emit
//! (its identity indices), and tests whether two models rank random probes
//! alike on the shared identity indices, against a Gaussian null baseline.

pub mod baselines;
mod binfmt;
pub mod error;
pub mod exec;
pub mod fingerprint;
pub mod harness;
pub mod model;
pub mod probe;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Execution;
