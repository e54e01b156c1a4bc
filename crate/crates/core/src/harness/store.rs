//! Shared, deduplicating cache of initialized and trained models.

use crate::error::{Error, Result};
use crate::model::checkpoint::{load_checkpoint, save_checkpoint};
use crate::model::{init_model, train, Checkpoint, Corpus, ModelConfig, ModelParams, TrainHyper};
use crate::rng::fnv1a64;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::Hash;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

/// How to obtain a model: a fresh init, or a checkpoint of a training run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    Init { seed: u64 },
    Trained { run: TrainRun, at: usize },
}

/// `steps` optimizer steps on `corpus`, starting from `parent`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrainRun {
    pub parent: Box<Recipe>,
    pub corpus: String,
    pub data_order_seed: u64,
    pub steps: usize,
}

impl Recipe {
    pub fn init(seed: u64) -> Self {
        Recipe::Init { seed }
    }

    /// Final checkpoint of `steps` steps of training from `self`.
    pub fn then_train(&self, corpus: &str, data_order_seed: u64, steps: usize) -> Self {
        self.then_train_at(corpus, data_order_seed, steps, steps)
    }

    /// Checkpoint `at` of a `steps`-step run from `self`.
    pub fn then_train_at(
        &self,
        corpus: &str,
        data_order_seed: u64,
        steps: usize,
        at: usize,
    ) -> Self {
        Recipe::Trained {
            run: TrainRun {
                parent: Box::new(self.clone()),
                corpus: corpus.to_string(),
                data_order_seed,
                steps,
            },
            at,
        }
    }

    pub fn init_seed(&self) -> u64 {
        match self {
            Recipe::Init { seed } => *seed,
            Recipe::Trained { run, .. } => run.parent.init_seed(),
        }
    }

    /// Training runs this recipe depends on, parents first.
    pub fn runs(&self) -> Vec<TrainRun> {
        match self {
            Recipe::Init { .. } => Vec::new(),
            Recipe::Trained { run, .. } => {
                let mut v = run.parent.runs();
                v.push(run.clone());
                v
            }
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipe::Init { seed } => write!(f, "s{seed}-init"),
            Recipe::Trained { run, at } => {
                write!(
                    f,
                    "{}+{}[order {}]@{at}",
                    run.parent, run.corpus, run.data_order_seed
                )?;
                if *at != run.steps {
                    write!(f, "/{}", run.steps)?;
                }
                Ok(())
            }
        }
    }
}

/// Everything a store's models depend on besides their recipes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSettings {
    pub model: ModelConfig,
    pub hyper: TrainHyper,
    pub corpus_seed: u64,
    pub corpus_tokens: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub allow_training: bool,
}

type Slot<T> = Arc<OnceLock<std::result::Result<Arc<T>, Error>>>;

struct OnceMap<K, T> {
    slots: Mutex<HashMap<K, Slot<T>>>,
}

impl<K: Eq + Hash + Clone, T> OnceMap<K, T> {
    fn new() -> Self {
        OnceMap {
            slots: Mutex::new(HashMap::new()),
        }
    }

    fn slot(&self, key: &K) -> Slot<T> {
        self.slots
            .lock()
            .expect("store lock")
            .entry(key.clone())
            .or_default()
            .clone()
    }

    /// Computes each key at most once; concurrent callers wait for the first.
    fn get_or_try(&self, key: &K, make: impl FnOnce() -> Result<T>) -> Result<Arc<T>> {
        let slot = self.slot(key);
        match slot.get_or_init(|| make().map(Arc::new)) {
            Ok(v) => Ok(v.clone()),
            Err(e) => Err(e.duplicate()),
        }
    }

    fn is_ready(&self, key: &K) -> bool {
        matches!(
            self.slots
                .lock()
                .expect("store lock")
                .get(key)
                .and_then(|s| s.get()),
            Some(Ok(_))
        )
    }
}

pub struct ModelStore {
    settings: StoreSettings,
    inits: OnceMap<u64, ModelParams>,
    runs: OnceMap<TrainRun, Vec<Checkpoint>>,
    corpora: OnceMap<String, Corpus>,
    reserved: Mutex<HashSet<TrainRun>>,
    steps_trained: Mutex<usize>,
}

impl ModelStore {
    pub fn new(settings: StoreSettings) -> Result<Self> {
        settings.model.validate()?;
        if let Some(dir) = &settings.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
        }
        Ok(ModelStore {
            settings,
            inits: OnceMap::new(),
            runs: OnceMap::new(),
            corpora: OnceMap::new(),
            reserved: Mutex::new(HashSet::new()),
            steps_trained: Mutex::new(0),
        })
    }

    pub fn settings(&self) -> &StoreSettings {
        &self.settings
    }

    /// Optimizer steps this store has actually run (cache hits cost nothing).
    pub fn steps_trained(&self) -> usize {
        *self.steps_trained.lock().expect("store lock")
    }

    /// Resolves a corpus name: `narrative`, `code` (optionally with a suffix
    /// such as `narrative-b` for an independent chain of the same style), or
    /// `file:<path>` for a text or `.tokens` file.
    pub fn corpus(&self, name: &str) -> Result<Arc<Corpus>> {
        self.corpora.get_or_try(&name.to_string(), || {
            let st = &self.settings;
            Corpus::named(name, st.model.vocab_size, st.corpus_seed, st.corpus_tokens)
        })
    }

    pub fn get(&self, recipe: &Recipe) -> Result<Arc<ModelParams>> {
        match recipe {
            Recipe::Init { seed } => self
                .inits
                .get_or_try(seed, || init_model(&self.settings.model, *seed)),
            Recipe::Trained { run, at } => {
                let ckpts = self.run(run)?;
                ckpts
                    .iter()
                    .find(|c| c.step == *at)
                    .map(|c| Arc::new(c.params.clone()))
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "step {at} is not a checkpoint of a {}-step run (every {} steps)",
                            run.steps, self.settings.hyper.checkpoint_every
                        ))
                    })
            }
        }
    }

    /// Checkpoint steps a run of `steps` steps emits.
    pub fn checkpoint_steps(&self, steps: usize) -> Vec<usize> {
        let every = self.settings.hyper.checkpoint_every;
        let mut v: Vec<usize> = (0..=steps).step_by(every).collect();
        if *v.last().unwrap() != steps {
            v.push(steps);
        }
        v
    }

    fn run_tag(&self, run: &TrainRun) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            settings: (&'a ModelConfig, &'a TrainHyper, u64, usize),
            run: &'a TrainRun,
        }
        let s = &self.settings;
        let key = Key {
            settings: (&s.model, &s.hyper, s.corpus_seed, s.corpus_tokens),
            run,
        };
        let json = serde_json::to_string(&key).expect("recipe serializes");
        format!("{:016x}", fnv1a64(json.as_bytes()))
    }

    fn checkpoint_path(&self, dir: &Path, run: &TrainRun, step: usize) -> PathBuf {
        dir.join(format!("{}-step{step}.spck", self.run_tag(run)))
    }

    fn on_disk(&self, run: &TrainRun) -> bool {
        match &self.settings.checkpoint_dir {
            Some(dir) => self.checkpoint_path(dir, run, run.steps).exists(),
            None => false,
        }
    }

    /// True when the run's checkpoints are in memory or on disk.
    pub fn is_available(&self, run: &TrainRun) -> bool {
        self.runs.is_ready(run) || self.on_disk(run)
    }

    /// Allows `run` to train even under a step budget.
    pub(crate) fn reserve(&self, run: &TrainRun) {
        self.reserved
            .lock()
            .expect("store lock")
            .insert(run.clone());
    }

    fn load_run(&self, dir: &Path, run: &TrainRun) -> Result<Vec<Checkpoint>> {
        self.checkpoint_steps(run.steps)
            .into_iter()
            .map(|step| {
                let c = load_checkpoint(&self.checkpoint_path(dir, run, step))?;
                if c.step != step || c.params.config != self.settings.model {
                    return Err(Error::Format(format!(
                        "cached checkpoint for step {step} does not match its run"
                    )));
                }
                Ok(c)
            })
            .collect()
    }

    /// All checkpoints of a run, training it if needed.
    pub fn run(&self, run: &TrainRun) -> Result<Arc<Vec<Checkpoint>>> {
        self.run_checked(run, false)
    }

    pub(crate) fn run_checked(
        &self,
        run: &TrainRun,
        budgeted: bool,
    ) -> Result<Arc<Vec<Checkpoint>>> {
        self.runs.get_or_try(run, || {
            if let Some(dir) = &self.settings.checkpoint_dir {
                if self.on_disk(run) {
                    return self.load_run(dir, run);
                }
            }
            if !self.settings.allow_training {
                return Err(Error::Resource(format!(
                    "no cached checkpoint for {} and training is disabled",
                    Recipe::Trained {
                        run: run.clone(),
                        at: run.steps
                    }
                )));
            }
            if budgeted && !self.reserved.lock().expect("store lock").contains(run) {
                return Err(Error::Resource(format!(
                    "training budget exhausted before {}",
                    Recipe::Trained {
                        run: run.clone(),
                        at: run.steps
                    }
                )));
            }
            let parent = self.get(&run.parent)?;
            let corpus = self.corpus(&run.corpus)?;
            let outcome = train(
                &parent,
                &corpus,
                run.steps,
                run.data_order_seed,
                &self.settings.hyper,
            )?;
            *self.steps_trained.lock().expect("store lock") += run.steps;
            if let Some(dir) = &self.settings.checkpoint_dir {
                // the final step goes last so its presence marks a complete run
                let mut order: Vec<&Checkpoint> = outcome.checkpoints.iter().collect();
                order.sort_by_key(|c| c.step == run.steps);
                for c in order {
                    save_checkpoint(&self.checkpoint_path(dir, run, c.step), c)?;
                }
            }
            Ok(outcome.checkpoints)
        })
    }
}
