//! Token corpora: seeded Markov-chain generators and plain-text loaders.

use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Token process of a synthetic corpus. The two styles draw from disjoint
/// halves of the vocabulary and have different transition statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusStyle {
    /// Lower half of the vocabulary, 16 successors per token, Zipf(1.1) weights.
    Narrative,
    /// Upper half of the vocabulary, 4 successors per token, Zipf(1.8) weights.
    Code,
}

impl CorpusStyle {
    fn params(self) -> (usize, f64) {
        match self {
            CorpusStyle::Narrative => (16, 1.1),
            CorpusStyle::Code => (4, 1.8),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CorpusStyle::Narrative => "narrative",
            CorpusStyle::Code => "code",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub id: String,
    pub tokens: Vec<u32>,
}

impl Corpus {
    /// Generates `len` tokens from a first-order Markov chain whose transition
    /// table and sample path are both derived from `chain_seed`.
    pub fn synthetic(
        style: CorpusStyle,
        vocab_size: usize,
        chain_seed: u64,
        len: usize,
    ) -> Result<Corpus> {
        if vocab_size < 4 {
            return Err(Error::Config(
                "synthetic corpora need a vocabulary of at least 4".into(),
            ));
        }
        let half = vocab_size / 2;
        let (lo, width) = match style {
            CorpusStyle::Narrative => (0, half),
            CorpusStyle::Code => (half, vocab_size - half),
        };
        let (fanout, zipf) = style.params();
        let fanout = fanout.min(width);

        let weights: Vec<f64> = (1..=fanout).map(|r| (r as f64).powf(-zipf)).collect();
        let total: f64 = weights.iter().sum();
        let cdf: Vec<f64> = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w / total;
                Some(*acc)
            })
            .collect();

        let mut table_rng = rng::substream(chain_seed, 0);
        let successors: Vec<Vec<u32>> = (0..width)
            .map(|_| {
                (0..fanout)
                    .map(|_| (lo + table_rng.gen_range(0..width)) as u32)
                    .collect()
            })
            .collect();

        let mut walk = rng::substream(chain_seed, 1);
        let mut tokens = Vec::with_capacity(len);
        let mut state = lo + walk.gen_range(0..width);
        for _ in 0..len {
            tokens.push(state as u32);
            let u: f64 = walk.gen();
            let j = cdf.iter().position(|&c| u < c).unwrap_or(fanout - 1);
            state = successors[state - lo][j] as usize;
        }
        Ok(Corpus {
            id: format!("synthetic-{}-{chain_seed}-{len}", style.name()),
            tokens,
        })
    }

    /// Byte-level tokenization of plain text; needs a vocabulary of at least 256.
    pub fn from_text(id: &str, text: &str, vocab_size: usize) -> Result<Corpus> {
        if vocab_size < 256 {
            return Err(Error::Config(format!(
                "byte-level text needs vocab_size >= 256, model has {vocab_size}"
            )));
        }
        Ok(Corpus {
            id: id.to_string(),
            tokens: text.bytes().map(u32::from).collect(),
        })
    }

    /// Whitespace-separated integer token ids.
    pub fn from_token_list(id: &str, text: &str) -> Result<Corpus> {
        let tokens = text
            .split_whitespace()
            .map(|t| {
                t.parse::<u32>()
                    .map_err(|_| Error::Data(format!("bad token id {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus {
            id: id.to_string(),
            tokens,
        })
    }

    /// Loads a corpus file: `*.tokens` holds whitespace-separated ids, anything
    /// else is read as text and tokenized byte by byte.
    pub fn load(path: &Path, vocab_size: usize) -> Result<Corpus> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read corpus {}: {e}", path.display())))?;
        let id = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if path.extension().is_some_and(|e| e == "tokens") {
            Corpus::from_token_list(&id, &text)
        } else {
            Corpus::from_text(&id, &text, vocab_size)
        }
    }

    /// Resolves a corpus by name: `narrative[-x]` and `code[-x]` are synthetic
    /// chains seeded from the name and `corpus_seed`; `file:<path>` loads a file.
    pub fn named(name: &str, vocab_size: usize, corpus_seed: u64, len: usize) -> Result<Corpus> {
        if let Some(path) = name.strip_prefix("file:") {
            return Corpus::load(Path::new(path), vocab_size);
        }
        let style = if name == "narrative" || name.starts_with("narrative-") {
            CorpusStyle::Narrative
        } else if name == "code" || name.starts_with("code-") {
            CorpusStyle::Code
        } else {
            return Err(Error::Data(format!(
                "unknown corpus {name:?} (expected narrative[-x], code[-x] or file:<path>)"
            )));
        };
        let chain_seed = rng::fnv1a64(name.as_bytes()) ^ corpus_seed;
        Corpus::synthetic(style, vocab_size, chain_seed, len)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn max_token(&self) -> Option<u32> {
        self.tokens.iter().copied().max()
    }
}
