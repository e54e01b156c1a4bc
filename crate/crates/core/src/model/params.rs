use super::config::{ArchFamily, ModelConfig};
use crate::error::{Error, Result};
use crate::rng;
use serde::{Deserialize, Serialize};

/// Standard deviation of the truncated-normal weight init.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adamw,
    Sgd,
}

/// Where a set of trained parameters came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainProvenance {
    pub corpus_id: String,
    pub data_order_seed: u64,
    pub steps: usize,
    pub tokens_seen: usize,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum InitKind {
    Embedding,
    /// Weight matrix with the given fan-in.
    Linear(usize),
    Ones,
    Zeros,
}

/// A named, row-major f32 array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Indices into [`ModelParams::tensors`] for one transformer block.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerSlots {
    pub attn_norm: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub bias: Option<[usize; 3]>,
    pub wo: usize,
    pub ffn_norm: usize,
    pub w_gate: usize,
    pub w_up: usize,
    pub w_down: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub tok_embeddings: usize,
    pub layers: Vec<LayerSlots>,
    pub final_norm: usize,
    pub unembed: usize,
}

/// Tensor declaration order: name, shape, init. Linear weights are stored
/// `[in, out]` so that `y = x · W`.
pub(crate) fn tensor_specs(c: &ModelConfig) -> Vec<(String, Vec<usize>, InitKind)> {
    use InitKind::*;
    let (d, ff, v) = (c.d_model, c.d_ff, c.vocab_size);
    let mut specs = vec![("tok_embeddings".to_string(), vec![v, d], Embedding)];
    for l in 0..c.n_layers {
        let p = |s: &str| format!("layers.{l}.{s}");
        specs.push((p("attn_norm"), vec![d], Ones));
        specs.push((p("wq"), vec![d, d], Linear(d)));
        specs.push((p("wk"), vec![d, d], Linear(d)));
        specs.push((p("wv"), vec![d, d], Linear(d)));
        if c.arch_family == ArchFamily::QwenStyle {
            specs.push((p("bq"), vec![d], Zeros));
            specs.push((p("bk"), vec![d], Zeros));
            specs.push((p("bv"), vec![d], Zeros));
        }
        specs.push((p("wo"), vec![d, d], Linear(d)));
        specs.push((p("ffn_norm"), vec![d], Ones));
        specs.push((p("w_gate"), vec![d, ff], Linear(d)));
        specs.push((p("w_up"), vec![d, ff], Linear(d)));
        specs.push((p("w_down"), vec![ff, d], Linear(ff)));
    }
    specs.push(("final_norm".to_string(), vec![d], Ones));
    specs.push(("unembed".to_string(), vec![d, v], Linear(d)));
    specs
}

pub(crate) fn layout(c: &ModelConfig) -> Layout {
    let qwen = c.arch_family == ArchFamily::QwenStyle;
    let per_layer = if qwen { 12 } else { 9 };
    let layers = (0..c.n_layers)
        .map(|l| {
            let b = 1 + l * per_layer;
            let off = if qwen { 3 } else { 0 };
            LayerSlots {
                attn_norm: b,
                wq: b + 1,
                wk: b + 2,
                wv: b + 3,
                bias: qwen.then_some([b + 4, b + 5, b + 6]),
                wo: b + 4 + off,
                ffn_norm: b + 5 + off,
                w_gate: b + 6 + off,
                w_up: b + 7 + off,
                w_down: b + 8 + off,
            }
        })
        .collect();
    let final_norm = 1 + c.n_layers * per_layer;
    Layout {
        tok_embeddings: 0,
        layers,
        final_norm,
        unembed: final_norm + 1,
    }
}

/// Full parameter set of a model, tagged with the seed it was born from.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub init_seed: u64,
    pub tensors: Vec<Tensor>,
    pub train_fingerprint: Option<TrainProvenance>,
}

/// Builds a model from `(config, init_seed)`.
///
/// The embedding table and weight matrices are drawn from truncated normals
/// (cut at two standard deviations) scaled per [`ModelConfig::init_std`];
/// norm gains are ones and biases zeros. Each tensor
/// reads its own substream keyed by its name.
pub fn init_model(config: &ModelConfig, init_seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let tensors = tensor_specs(config)
        .into_iter()
        .map(|(name, shape, init)| {
            let numel: usize = shape.iter().product();
            let data = match init {
                InitKind::Ones => vec![1.0; numel],
                InitKind::Zeros => vec![0.0; numel],
                InitKind::Embedding | InitKind::Linear(_) => {
                    let std = config.init_std(match init {
                        InitKind::Linear(f) => Some(f),
                        _ => None,
                    });
                    let mut r = rng::named_stream(init_seed, &name);
                    (0..numel)
                        .map(|_| rng::truncated_normal(&mut r, std) as f32)
                        .collect()
                }
            };
            Tensor { name, shape, data }
        })
        .collect();
    Ok(ModelParams {
        config: config.clone(),
        init_seed,
        tensors,
        train_fingerprint: None,
    })
}

impl ModelParams {
    pub(crate) fn layout(&self) -> Layout {
        layout(&self.config)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Checks that names, shapes and lengths match the declared layout.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let specs = tensor_specs(&self.config);
        if specs.len() != self.tensors.len() {
            return Err(Error::Config(format!(
                "expected {} tensors, found {}",
                specs.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape, _), t) in specs.iter().zip(&self.tensors) {
            if *name != t.name || *shape != t.shape || t.data.len() != t.numel() {
                return Err(Error::Config(format!(
                    "tensor {} has shape {:?}, expected {name} with shape {shape:?}",
                    t.name, t.shape
                )));
            }
        }
        if !self.is_finite() {
            return Err(Error::Input("parameters contain non-finite values".into()));
        }
        Ok(())
    }

    /// True when both models share config and tensor shapes.
    pub fn same_architecture(&self, other: &ModelParams) -> bool {
        self.config == other.config
            && self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }
}
