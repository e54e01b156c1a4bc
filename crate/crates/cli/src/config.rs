//! `seedprints.toml`: paths, detection defaults and seed overrides.

use anyhow::{bail, Context, Result};
use seedprints::fingerprint::{OutputKind, TestKind};
use seedprints::model::{ModelConfig, TrainHyper};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CONFIG_FILE: &str = "seedprints.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            checkpoint_dir: "checkpoints".into(),
            report_dir: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Defaults {
    pub n: usize,
    pub len: usize,
    pub scale: f32,
    pub m: Option<usize>,
    pub alpha: f64,
    pub trials: usize,
    pub test: String,
    pub kind: String,
    pub k_min: usize,
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults {
            n: seedprints::probe::DEFAULT_N,
            len: seedprints::probe::DEFAULT_LEN,
            scale: seedprints::probe::DEFAULT_SCALE,
            m: None,
            alpha: seedprints::fingerprint::DEFAULT_ALPHA,
            trials: seedprints::fingerprint::DEFAULT_TRIALS,
            test: "t".into(),
            kind: "logits".into(),
            k_min: seedprints::fingerprint::K_MIN,
        }
    }
}

/// Seeds a command falls back to when its flag is absent. Unset seeds stay
/// unset: commands that need one refuse to run rather than invent it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub init: Option<u64>,
    pub probe: Option<u64>,
    pub data_order: Option<u64>,
    pub null: Option<u64>,
    pub corpus: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub paths: Paths,
    pub defaults: Defaults,
    pub seeds: Seeds,
    pub model: ModelConfig,
    pub training: TrainHyper,
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: CliConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, or `<workspace>/seedprints.toml` when it exists, or
    /// falls back to built-in defaults.
    pub fn load(path: Option<&Path>, workspace: &Path) -> Result<Self> {
        let path = match path {
            Some(p) => resolve(workspace, p),
            None => {
                let p = workspace.join(CONFIG_FILE);
                if !p.exists() {
                    return Ok(CliConfig::default());
                }
                p
            }
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading config {}", path.display()))?;
        CliConfig::parse(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.defaults;
        if !(d.alpha > 0.0 && d.alpha < 1.0) {
            bail!(seedprints::Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                d.alpha
            )));
        }
        if d.n == 0 || d.len == 0 || d.trials == 0 || d.k_min == 0 || d.m == Some(0) {
            bail!(seedprints::Error::Config(
                "counts n, len, trials, k_min and m must be positive".into()
            ));
        }
        if !(d.scale.is_finite() && d.scale > 0.0) {
            bail!(seedprints::Error::Config(format!(
                "scale must be positive, got {}",
                d.scale
            )));
        }
        self.test()?;
        self.kind()?;
        self.model.validate()?;
        Ok(())
    }

    pub fn test(&self) -> Result<TestKind> {
        Ok(self.defaults.test.parse()?)
    }

    pub fn kind(&self) -> Result<OutputKind> {
        Ok(self.defaults.kind.parse()?)
    }
}

/// Relative paths are taken from the workspace root.
pub fn resolve(workspace: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        workspace.join(p)
    }
}
