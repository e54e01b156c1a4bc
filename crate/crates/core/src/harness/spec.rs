use crate::error::{Error, Result};
use crate::fingerprint::{
    DetectionConfig, OutputKind, TestKind, DEFAULT_ALPHA, DEFAULT_TRIALS, K_MIN,
};
use crate::model::{ModelConfig, TrainHyper};
use crate::probe::DEFAULT_SCALE;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Fresh inits of different seeds, each against its predecessor in `seeds`.
    SeedPairs,
    /// Each seed's init against its trained descendant.
    InitVsTrained,
    /// Init of `seeds[i]` against the trained descendant of `seeds[i + 1]`,
    /// all trained on the same corpus in the same order.
    CrossSeedSameData,
    /// A base (`seeds[0]`) and a distractor (`seeds[1]`, other data order)
    /// pretrained on `corpora[0]`, then both continued on each later corpus.
    ContinualShift,
    /// Each seed's init against every checkpoint of its training run.
    AllStageCheckpoints,
    /// Token-selection bias at init and its persistence into training.
    ObservationStudy,
    /// Seed pairs, init-vs-trained and cross-seed pairs pooled into AUC/KS.
    BenchmarkMetrics,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SeedPairs => "seed_pairs",
            ExperimentKind::InitVsTrained => "init_vs_trained",
            ExperimentKind::CrossSeedSameData => "cross_seed_same_data",
            ExperimentKind::ContinualShift => "continual_shift",
            ExperimentKind::AllStageCheckpoints => "all_stage_checkpoints",
            ExperimentKind::ObservationStudy => "observation_study",
            ExperimentKind::BenchmarkMetrics => "benchmark_metrics",
        }
    }

    fn min_seeds(self) -> usize {
        match self {
            ExperimentKind::SeedPairs
            | ExperimentKind::CrossSeedSameData
            | ExperimentKind::ContinualShift
            | ExperimentKind::BenchmarkMetrics => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionParams {
    /// Probe count.
    pub n: usize,
    /// Probe length.
    pub ell: usize,
    pub scale: f32,
    pub m: Option<usize>,
    pub alpha: f64,
    pub trials: usize,
    pub tests: Vec<TestKind>,
    pub kinds: Vec<OutputKind>,
    pub probe_seed: u64,
    pub base_null_seed: u64,
    pub k_min: usize,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            n: 500,
            ell: 32,
            scale: DEFAULT_SCALE,
            m: None,
            alpha: DEFAULT_ALPHA,
            trials: DEFAULT_TRIALS,
            tests: TestKind::ALL.to_vec(),
            kinds: OutputKind::ALL.to_vec(),
            probe_seed: 0,
            base_null_seed: 0,
            k_min: K_MIN,
        }
    }
}

impl DetectionParams {
    pub fn config(&self, test: TestKind, repetition: usize) -> DetectionConfig {
        DetectionConfig {
            m: self.m,
            alpha: self.alpha,
            trials: self.trials,
            test,
            base_null_seed: self.null_seed_for(repetition),
            k_min: self.k_min,
        }
    }

    /// Repetition `r` probes with `probe_seed + r`.
    pub fn probe_seed_for(&self, repetition: usize) -> u64 {
        self.probe_seed.wrapping_add(repetition as u64)
    }

    /// Repetitions draw disjoint runs of null seeds.
    pub fn null_seed_for(&self, repetition: usize) -> u64 {
        self.base_null_seed
            .wrapping_add((repetition * self.trials) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingParams {
    pub steps: usize,
    pub data_order_seed: u64,
    /// Data order of the distractor's pretraining in `continual_shift`.
    pub distractor_data_order_seed: u64,
    pub continual_steps: usize,
    pub hyper: TrainHyper,
    /// Mixed into the Markov-chain seed of every synthetic corpus.
    pub corpus_seed: u64,
    /// Synthetic corpus length; by default just enough for the longest run.
    pub corpus_tokens: Option<usize>,
    pub allow_training: bool,
    /// Upper bound on optimizer steps this experiment may spend on training.
    pub budget_steps: Option<usize>,
    /// Where trained checkpoints are cached as SPCK files.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainingParams {
    fn default() -> Self {
        TrainingParams {
            steps: 2000,
            data_order_seed: 0,
            distractor_data_order_seed: 1,
            continual_steps: 500,
            hyper: TrainHyper::default(),
            corpus_seed: 0,
            corpus_tokens: None,
            allow_training: true,
            budget_steps: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainingParams {
    pub fn corpus_len(&self) -> usize {
        self.corpus_tokens.unwrap_or_else(|| {
            self.steps.max(self.continual_steps) * self.hyper.tokens_per_step() + 1
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationParams {
    /// Uniform random token sequences.
    pub n: usize,
    pub ell: usize,
    pub probe_seed: u64,
    /// Checkpoint (within a `training.steps` run) compared with the init.
    pub persistence_step: usize,
    /// Null draws behind the persistence percentile.
    pub null_reps: usize,
    pub null_seed: u64,
    /// Share of argmax hits the coverage set must reach.
    pub coverage: f64,
}

impl Default for ObservationParams {
    fn default() -> Self {
        ObservationParams {
            n: 4096,
            ell: 16,
            probe_seed: 0,
            persistence_step: 500,
            null_reps: 200,
            null_seed: 0,
            coverage: 0.8,
        }
    }
}

/// A desk-scale experiment; every field but `kind` and `seeds` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    #[serde(default = "default_corpora")]
    pub corpora: Vec<String>,
    #[serde(default = "ModelConfig::tiny")]
    pub model: ModelConfig,
    #[serde(default)]
    pub detection: DetectionParams,
    #[serde(default)]
    pub training: TrainingParams,
    #[serde(default)]
    pub observation: ObservationParams,
    #[serde(default = "default_true")]
    pub baselines: bool,
    #[serde(default = "default_one")]
    pub repetitions: usize,
}

fn default_corpora() -> Vec<String> {
    vec!["narrative".into(), "narrative-b".into(), "code".into()]
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, seeds: Vec<u64>) -> Self {
        ExperimentSpec {
            kind,
            seeds,
            corpora: default_corpora(),
            model: ModelConfig::tiny(),
            detection: DetectionParams::default(),
            training: TrainingParams::default(),
            observation: ObservationParams::default(),
            baselines: true,
            repetitions: 1,
        }
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(format!("bad experiment spec: {e}")))?
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let kind = self.kind.name();
        if self.seeds.len() < self.kind.min_seeds() {
            return Err(Error::Validation(format!(
                "{kind} needs at least {} seeds, got {}",
                self.kind.min_seeds(),
                self.seeds.len()
            )));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Validation(format!(
                "{kind} requires distinct seeds, got {:?}",
                self.seeds
            )));
        }
        if self.corpora.is_empty() {
            return Err(Error::Validation("at least one corpus is required".into()));
        }
        if self.kind == ExperimentKind::ContinualShift && self.corpora.len() < 2 {
            return Err(Error::Validation(
                "continual_shift needs a pretraining corpus and at least one continual corpus"
                    .into(),
            ));
        }
        if self.repetitions == 0 {
            return Err(Error::Validation("repetitions must be at least 1".into()));
        }
        let d = &self.detection;
        if d.n < 2 || d.ell == 0 || d.trials == 0 || !d.scale.is_finite() || d.scale <= 0.0 {
            return Err(Error::Validation(
                "detection needs n ≥ 2, ell ≥ 1, trials ≥ 1 and scale > 0".into(),
            ));
        }
        if d.ell > self.model.max_seq_len {
            return Err(Error::Validation(format!(
                "probe length {} exceeds max_seq_len {}",
                d.ell, self.model.max_seq_len
            )));
        }
        if !(d.alpha > 0.0 && d.alpha < 1.0) {
            return Err(Error::Validation(format!(
                "alpha must lie in (0, 1), got {}",
                d.alpha
            )));
        }
        if d.tests.is_empty() || d.kinds.is_empty() {
            return Err(Error::Validation(
                "at least one test and one output kind are required".into(),
            ));
        }
        let t = &self.training;
        if t.hyper.seq_len > self.model.max_seq_len {
            return Err(Error::Validation(
                "training seq_len exceeds max_seq_len".into(),
            ));
        }
        if self.kind == ExperimentKind::ObservationStudy {
            let o = &self.observation;
            if o.n == 0 || o.ell == 0 || o.ell > self.model.max_seq_len || o.null_reps == 0 {
                return Err(Error::Validation(
                    "observation needs n, ell ≤ max_seq_len and null_reps ≥ 1".into(),
                ));
            }
            if o.persistence_step > t.steps {
                return Err(Error::Validation(
                    "persistence_step exceeds training steps".into(),
                ));
            }
            if !(o.coverage > 0.0 && o.coverage <= 1.0) {
                return Err(Error::Validation("coverage must lie in (0, 1]".into()));
            }
        }
        Ok(())
    }
}
