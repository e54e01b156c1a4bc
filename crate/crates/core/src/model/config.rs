use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Standard deviation of the embedding table, and of every weight under
/// [`InitScheme::Fixed`].
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchFamily {
    /// RMSNorm, RoPE, SwiGLU, no biases.
    LlamaStyle,
    /// As `LlamaStyle` plus biases on the query/key/value projections.
    QwenStyle,
}

/// How weight matrices are scaled at initialization. Embedding tables always
/// use a standard deviation of 0.02.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Every weight matrix drawn with std 0.02.
    Fixed,
    /// A matrix with fan-in `f` drawn with std `0.02·√(4096/f)`, giving each
    /// layer the signal gain of a 4096-wide model initialized at 0.02. At
    /// small widths a fixed 0.02 shrinks every projection, so the residual
    /// stream carries the raw input almost untouched to the last layer.
    #[default]
    WidthMatched,
}

/// Width at which [`InitScheme::WidthMatched`] coincides with a fixed 0.02.
pub const REFERENCE_WIDTH: usize = 4096;

/// Architecture of a decoder-only transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub arch_family: ArchFamily,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub rope_theta: f64,
    pub norm_eps: f64,
    pub init_scheme: InitScheme,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// 4 layers, 4 heads, d = 256, d_ff = 1024, vocab 2048, context 256.
    pub fn desk() -> Self {
        ModelConfig {
            arch_family: ArchFamily::LlamaStyle,
            n_layers: 4,
            n_heads: 4,
            d_model: 256,
            d_ff: 1024,
            vocab_size: 2048,
            max_seq_len: 256,
            rope_theta: 10_000.0,
            norm_eps: 1e-5,
            init_scheme: InitScheme::WidthMatched,
        }
    }

    /// Smaller sibling of [`ModelConfig::desk`] sized for single-core training
    /// runs of a few thousand steps: d = 128, d_ff = 512, vocab 512, context 64.
    pub fn tiny() -> Self {
        ModelConfig {
            d_model: 128,
            d_ff: 512,
            vocab_size: 512,
            max_seq_len: 64,
            ..Self::desk()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.vocab_size < 2 {
            return Err(Error::Config("vocab_size must be at least 2".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model ({}) must be divisible by n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if !self.head_dim().is_multiple_of(2) {
            return Err(Error::Config(format!(
                "head dimension {} must be even for rotary embeddings",
                self.head_dim()
            )));
        }
        if !(self.rope_theta.is_finite() && self.rope_theta > 0.0) {
            return Err(Error::Config("rope_theta must be positive".into()));
        }
        if !(self.norm_eps.is_finite() && self.norm_eps > 0.0) {
            return Err(Error::Config("norm_eps must be positive".into()));
        }
        Ok(())
    }

    /// Standard deviation (before truncation) of a weight matrix with the
    /// given fan-in; `None` denotes the embedding table.
    pub fn init_std(&self, fan_in: Option<usize>) -> f64 {
        match (self.init_scheme, fan_in) {
            (InitScheme::WidthMatched, Some(f)) => {
                INIT_STD * (REFERENCE_WIDTH as f64 / f as f64).sqrt()
            }
            _ => INIT_STD,
        }
    }

    /// Width of an output kind: vocabulary for logits, d_model for hidden states.
    pub fn output_width(&self, kind: crate::fingerprint::OutputKind) -> usize {
        match kind {
            crate::fingerprint::OutputKind::Logits => self.vocab_size,
            crate::fingerprint::OutputKind::Hidden => self.d_model,
        }
    }
}
