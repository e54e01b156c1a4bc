use super::metrics::{ks_statistic, roc_auc, LabeledScore};
use super::spec::{ExperimentKind, ExperimentSpec};
use super::store::{ModelStore, Recipe, StoreSettings, TrainRun};
use crate::baselines::{intrinsic_similarity, pcs, reef_cka, FeatureMatrix, SimilarityScore};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fingerprint::{
    collect_both, collect_token_outputs, default_m, identity_indices, mean_output,
    persistence_null, persistence_probe, quantile, run_detection_with, OutputKind, OutputMatrix,
    TestKind,
};
use crate::model::ModelParams;
use crate::probe::{generate_probes, sample_token_probes};
use crate::stats::{chi_square_uniform, ChiSquareOutcome};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

/// One SeedPrints result. Inconclusive intersections are kept explicit
/// rather than folded into a decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Cell {
    Decided {
        p_mean: f64,
        same_lineage: bool,
        report: crate::fingerprint::DetectionReport,
    },
    Inconclusive {
        k: usize,
        k_min: usize,
    },
    Failed {
        error: String,
    },
}

impl Cell {
    pub fn p_mean(&self) -> Option<f64> {
        match self {
            Cell::Decided { p_mean, .. } => Some(*p_mean),
            _ => None,
        }
    }

    /// `s = 1 − p`; an inconclusive cell carries no lineage evidence and
    /// scores 0.
    pub fn score(&self) -> Option<f64> {
        match self {
            Cell::Decided { p_mean, .. } => Some(1.0 - p_mean),
            Cell::Inconclusive { .. } => Some(0.0),
            Cell::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TestCells {
    pub t: Option<Cell>,
    pub u: Option<Cell>,
}

impl TestCells {
    pub fn get(&self, test: TestKind) -> Option<&Cell> {
        match test {
            TestKind::WelchTOneSided => self.t.as_ref(),
            TestKind::MannWhitneyUOneSided => self.u.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeedprintsCells {
    pub logits: TestCells,
    pub hidden: TestCells,
}

impl SeedprintsCells {
    pub fn get(&self, kind: OutputKind, test: TestKind) -> Option<&Cell> {
        match kind {
            OutputKind::Logits => self.logits.get(test),
            OutputKind::Hidden => self.hidden.get(test),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BaselineScores {
    pub pcs: Option<SimilarityScore>,
    pub intrinsic: Option<SimilarityScore>,
    pub reef: Option<SimilarityScore>,
    /// Why a baseline is missing, when it is.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub repetition: usize,
    /// `true` when the suspect descends from the base.
    pub ground_truth: bool,
    pub base: String,
    pub suspect: String,
    pub seedprints: SeedprintsCells,
    pub baselines: Option<BaselineScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: String,
    pub auc: f64,
    pub ks: f64,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceRecord {
    pub step: usize,
    pub m: usize,
    /// Mean column tau between init and checkpoint over the init's identity indices.
    pub value: f64,
    pub null_p99: f64,
    pub null_reps: usize,
    pub exceeds_null: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub seed: u64,
    pub n: usize,
    pub ell: usize,
    pub vocab_size: usize,
    /// How often each token is the argmax next token on uniform random input.
    pub argmax_counts: Vec<u64>,
    pub chi_square: ChiSquareOutcome,
    pub coverage: f64,
    /// Fewest tokens that together collect `coverage` of the argmax hits.
    pub coverage_set_size: usize,
    pub coverage_fraction: f64,
    pub persistence: PersistenceRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub spec: ExperimentSpec,
    pub pairs: Vec<PairRecord>,
    pub metrics: Vec<MethodMetrics>,
    pub observations: Vec<ObservationRecord>,
    /// Set when the training budget ran out and some pairs were skipped.
    pub incomplete: bool,
    pub skipped: Vec<String>,
    /// Optimizer steps spent by the store while producing this report.
    pub training_steps: usize,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cell_field(c: Option<&Cell>) -> String {
    match c {
        None => String::new(),
        Some(Cell::Decided { p_mean, .. }) => format!("{p_mean:e}"),
        Some(Cell::Inconclusive { k, .. }) => format!("inconclusive(k={k})"),
        Some(Cell::Failed { .. }) => "error".into(),
    }
}

impl ExperimentReport {
    /// One row per pair: p_mean per (kind, test) and baseline values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "pair_id,repetition,ground_truth,base,suspect,logits_t,logits_u,hidden_t,hidden_u,pcs,intrinsic,reef\n",
        );
        for p in &self.pairs {
            let b = p.baselines.clone().unwrap_or_default();
            let num =
                |s: Option<SimilarityScore>| s.map(|s| format!("{}", s.value)).unwrap_or_default();
            let sp = &p.seedprints;
            let row = [
                csv_field(&p.pair_id),
                p.repetition.to_string(),
                p.ground_truth.to_string(),
                csv_field(&p.base),
                csv_field(&p.suspect),
                cell_field(sp.logits.t.as_ref()),
                cell_field(sp.logits.u.as_ref()),
                cell_field(sp.hidden.t.as_ref()),
                cell_field(sp.hidden.u.as_ref()),
                num(b.pcs),
                num(b.intrinsic),
                num(b.reef),
            ];
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A pair the protocol asks for.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPlan {
    pub pair_id: String,
    pub repetition: usize,
    pub ground_truth: bool,
    pub base: Recipe,
    pub suspect: Recipe,
}

impl ExperimentSpec {
    pub fn store_settings(&self) -> StoreSettings {
        StoreSettings {
            model: self.model.clone(),
            hyper: self.training.hyper.clone(),
            corpus_seed: self.training.corpus_seed,
            corpus_tokens: self.training.corpus_len(),
            checkpoint_dir: self.training.checkpoint_dir.clone(),
            allow_training: self.training.allow_training,
        }
    }

    fn trained(&self, seed: u64) -> Recipe {
        let t = &self.training;
        Recipe::init(seed).then_train(&self.corpora[0], t.data_order_seed, t.steps)
    }

    /// Pairs for one repetition, in report order.
    fn pairs_for(&self, kind: ExperimentKind, rep: usize) -> Vec<PairPlan> {
        let s = &self.seeds;
        let len = s.len();
        let t = &self.training;
        let plan = |pair_id: String, ground_truth, base: Recipe, suspect: Recipe| PairPlan {
            pair_id,
            repetition: rep,
            ground_truth,
            base,
            suspect,
        };
        match kind {
            ExperimentKind::SeedPairs => (0..len)
                .map(|i| {
                    let (a, b) = (s[i], s[(i + len - 1) % len]);
                    plan(
                        format!("s{a} vs s{b}"),
                        false,
                        Recipe::init(a),
                        Recipe::init(b),
                    )
                })
                .collect(),
            ExperimentKind::InitVsTrained => s
                .iter()
                .map(|&a| {
                    plan(
                        format!("s{a}-init vs s{a}-base"),
                        true,
                        Recipe::init(a),
                        self.trained(a),
                    )
                })
                .collect(),
            ExperimentKind::CrossSeedSameData => (0..len)
                .map(|i| {
                    let (a, b) = (s[i], s[(i + 1) % len]);
                    plan(
                        format!("s{a}-init vs s{b}-base"),
                        false,
                        Recipe::init(a),
                        self.trained(b),
                    )
                })
                .collect(),
            ExperimentKind::ContinualShift => {
                let base = self.trained(s[0]);
                let distractor = Recipe::init(s[1]).then_train(
                    &self.corpora[0],
                    t.distractor_data_order_seed,
                    t.steps,
                );
                let mut v = Vec::new();
                for c in &self.corpora[1..] {
                    let own = base.then_train(c, t.data_order_seed, t.continual_steps);
                    let other = distractor.then_train(c, t.data_order_seed, t.continual_steps);
                    v.push(plan(
                        format!("s{}-base vs {c} ({})", s[0], s[0]),
                        true,
                        base.clone(),
                        own,
                    ));
                    v.push(plan(
                        format!("s{}-base vs {c} ({})", s[0], s[1]),
                        false,
                        base.clone(),
                        other,
                    ));
                }
                v
            }
            ExperimentKind::AllStageCheckpoints => {
                let every = t.hyper.checkpoint_every;
                let mut steps: Vec<usize> = (every..=t.steps).step_by(every).collect();
                if steps.last() != Some(&t.steps) && t.steps > 0 {
                    steps.push(t.steps);
                }
                s.iter()
                    .flat_map(|&a| {
                        steps.iter().map(move |&k| {
                            plan(
                                format!("s{a}-init vs s{a}@{k}"),
                                true,
                                Recipe::init(a),
                                Recipe::init(a).then_train_at(
                                    &self.corpora[0],
                                    t.data_order_seed,
                                    t.steps,
                                    k,
                                ),
                            )
                        })
                    })
                    .collect()
            }
            ExperimentKind::ObservationStudy => Vec::new(),
            ExperimentKind::BenchmarkMetrics => [
                ExperimentKind::SeedPairs,
                ExperimentKind::InitVsTrained,
                ExperimentKind::CrossSeedSameData,
            ]
            .into_iter()
            .flat_map(|k| self.pairs_for(k, rep))
            .collect(),
        }
    }

    /// Every pair across repetitions.
    pub fn plan_pairs(&self) -> Vec<PairPlan> {
        (0..self.repetitions)
            .flat_map(|r| self.pairs_for(self.kind, r))
            .collect()
    }

    fn observation_recipes(&self) -> Vec<(u64, Recipe)> {
        if self.kind != ExperimentKind::ObservationStudy {
            return Vec::new();
        }
        let t = &self.training;
        self.seeds
            .iter()
            .map(|&s| {
                let ckpt = Recipe::init(s).then_train_at(
                    &self.corpora[0],
                    t.data_order_seed,
                    t.steps,
                    self.observation.persistence_step,
                );
                (s, ckpt)
            })
            .collect()
    }
}

/// Runs an experiment with a private model store.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let store = ModelStore::new(spec.store_settings())?;
    run_experiment_with(spec, &store, Execution::default())
}

/// Runs an experiment against a shared store whose settings must match the spec.
pub fn run_experiment_with(
    spec: &ExperimentSpec,
    store: &ModelStore,
    exec: Execution,
) -> Result<ExperimentReport> {
    spec.validate()?;
    if *store.settings() != spec.store_settings() {
        return Err(Error::Config(
            "model store settings do not match the experiment spec".into(),
        ));
    }
    let steps_before = store.steps_trained();
    let pairs = spec.plan_pairs();
    let observations = spec.observation_recipes();

    let mut recipes: Vec<Recipe> = Vec::new();
    let mut seen = HashSet::new();
    let observed = observations
        .iter()
        .flat_map(|(s, r)| [Recipe::init(*s), r.clone()]);
    for r in pairs
        .iter()
        .flat_map(|p| [p.base.clone(), p.suspect.clone()])
        .chain(observed)
    {
        if seen.insert(r.clone()) {
            recipes.push(r);
        }
    }
    let mut runs: Vec<TrainRun> = Vec::new();
    let mut seen_runs = HashSet::new();
    for r in &recipes {
        for run in r.runs() {
            if seen_runs.insert(run.clone()) {
                runs.push(run);
            }
        }
    }

    // decide up front, in plan order, which runs fit the budget
    let budgeted = spec.training.budget_steps.is_some();
    let mut usable: HashSet<TrainRun> = HashSet::new();
    let mut remaining = spec.training.budget_steps.unwrap_or(usize::MAX);
    for run in &runs {
        let parent_ok = run.parent.runs().iter().all(|p| usable.contains(p));
        if store.is_available(run) {
            usable.insert(run.clone());
        } else if parent_ok && (!budgeted || run.steps <= remaining) {
            if budgeted {
                remaining -= run.steps;
                store.reserve(run);
            }
            usable.insert(run.clone());
        }
    }
    let trainable: Vec<&TrainRun> = runs.iter().filter(|r| usable.contains(*r)).collect();
    for res in exec.map(trainable.len(), |i| {
        store.run_checked(trainable[i], budgeted).map(|_| ())
    }) {
        res?;
    }

    let ready = |r: &Recipe| r.runs().iter().all(|run| usable.contains(run));
    let mut models: HashMap<Recipe, Arc<ModelParams>> = HashMap::new();
    for r in recipes.iter().filter(|r| ready(r)) {
        models.insert(r.clone(), store.get(r)?);
    }

    let mut skipped = Vec::new();
    let mut todo = Vec::new();
    for p in &pairs {
        if models.contains_key(&p.base) && models.contains_key(&p.suspect) {
            todo.push(p);
        } else {
            skipped.push(format!("{} (repetition {})", p.pair_id, p.repetition));
        }
    }

    // outputs per (model, repetition), computed once
    let d = &spec.detection;
    let mut outputs: HashMap<(Recipe, usize), Arc<[OutputMatrix; 2]>> = HashMap::new();
    for rep in 0..spec.repetitions {
        let needed: Vec<&Recipe> = {
            let mut v = Vec::new();
            let mut s = HashSet::new();
            for p in todo.iter().filter(|p| p.repetition == rep) {
                for r in [&p.base, &p.suspect] {
                    if s.insert(r) {
                        v.push(r);
                    }
                }
            }
            v
        };
        if needed.is_empty() {
            continue;
        }
        let probes = generate_probes(
            d.n,
            d.ell,
            spec.model.d_model,
            d.probe_seed_for(rep),
            d.scale,
        )?;
        for r in needed {
            let outs = collect_both(&models[r], &probes, exec)?;
            outputs.insert((r.clone(), rep), Arc::new(outs));
        }
    }

    let records = exec.try_map(todo.len(), |i| {
        let p = todo[i];
        let a = &outputs[&(p.base.clone(), p.repetition)];
        let b = &outputs[&(p.suspect.clone(), p.repetition)];
        evaluate_pair(spec, p, (&models[&p.base], a), (&models[&p.suspect], b))
    })?;

    let observation_records = observations
        .iter()
        .filter(|(_, ckpt)| models.contains_key(ckpt))
        .map(|(seed, ckpt)| {
            observe_seed(
                spec,
                *seed,
                &models[&Recipe::init(*seed)],
                &models[ckpt],
                exec,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    for (seed, ckpt) in &observations {
        if !models.contains_key(ckpt) {
            skipped.push(format!("observation for seed {seed}"));
        }
    }

    let metrics = compute_metrics(spec, &records)?;
    Ok(ExperimentReport {
        kind: spec.kind,
        spec: spec.clone(),
        pairs: records,
        metrics,
        observations: observation_records,
        incomplete: !skipped.is_empty(),
        skipped,
        training_steps: store.steps_trained() - steps_before,
    })
}

fn evaluate_pair(
    spec: &ExperimentSpec,
    plan: &PairPlan,
    (base, base_out): (&ModelParams, &[OutputMatrix; 2]),
    (suspect, suspect_out): (&ModelParams, &[OutputMatrix; 2]),
) -> Result<PairRecord> {
    let d = &spec.detection;
    let mut cells = SeedprintsCells::default();
    for &kind in &d.kinds {
        let idx = match kind {
            OutputKind::Logits => 0,
            OutputKind::Hidden => 1,
        };
        let slot = match kind {
            OutputKind::Logits => &mut cells.logits,
            OutputKind::Hidden => &mut cells.hidden,
        };
        for &test in &d.tests {
            let cfg = d.config(test, plan.repetition);
            let cell = match run_detection_with(
                &base_out[idx],
                &suspect_out[idx],
                &cfg,
                Execution::Sequential,
            ) {
                Ok(r) => Cell::Decided {
                    p_mean: r.p_mean,
                    same_lineage: r.same_lineage,
                    report: r,
                },
                Err(Error::Inconclusive { k, k_min }) => Cell::Inconclusive { k, k_min },
                Err(e @ (Error::Degenerate(_) | Error::UndefinedCorrelation(_))) => Cell::Failed {
                    error: e.to_string(),
                },
                Err(e) => return Err(e),
            };
            match test {
                TestKind::WelchTOneSided => slot.t = Some(cell),
                TestKind::MannWhitneyUOneSided => slot.u = Some(cell),
            }
        }
    }
    let baselines = if spec.baselines {
        let mut b = BaselineScores::default();
        match pcs(base, suspect) {
            Ok(s) => b.pcs = Some(s),
            Err(e) => b.notes.push(format!("pcs: {e}")),
        }
        match intrinsic_similarity(base, suspect) {
            Ok(s) => b.intrinsic = Some(s),
            Err(e) => b.notes.push(format!("intrinsic: {e}")),
        }
        match FeatureMatrix::from_outputs(&base_out[1]).and_then(|fa| {
            FeatureMatrix::from_outputs(&suspect_out[1]).and_then(|fb| reef_cka(&fa, &fb))
        }) {
            Ok(s) => b.reef = Some(s),
            Err(e) => b.notes.push(format!("reef: {e}")),
        }
        Some(b)
    } else {
        None
    };
    Ok(PairRecord {
        pair_id: plan.pair_id.clone(),
        repetition: plan.repetition,
        ground_truth: plan.ground_truth,
        base: plan.base.to_string(),
        suspect: plan.suspect.to_string(),
        seedprints: cells,
        baselines,
    })
}

fn metric_for(method: String, scores: Vec<LabeledScore>) -> Result<Option<MethodMetrics>> {
    let pos: Vec<f64> = scores.iter().filter(|s| s.label).map(|s| s.score).collect();
    let neg: Vec<f64> = scores
        .iter()
        .filter(|s| !s.label)
        .map(|s| s.score)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Ok(None);
    }
    Ok(Some(MethodMetrics {
        method,
        auc: roc_auc(&scores)?,
        ks: ks_statistic(&pos, &neg)?,
        positives: pos.len(),
        negatives: neg.len(),
    }))
}

/// AUC and KS per method, over pairs that carry a score for it.
fn compute_metrics(spec: &ExperimentSpec, records: &[PairRecord]) -> Result<Vec<MethodMetrics>> {
    let mut out = Vec::new();
    let label = |r: &PairRecord, score: f64| LabeledScore {
        pair_id: format!("{}#{}", r.pair_id, r.repetition),
        score,
        label: r.ground_truth,
    };
    for &kind in &spec.detection.kinds {
        for &test in &spec.detection.tests {
            let scores = records
                .iter()
                .filter_map(|r| {
                    r.seedprints
                        .get(kind, test)
                        .and_then(Cell::score)
                        .map(|s| label(r, s))
                })
                .collect();
            out.extend(metric_for(
                format!("seedprints_{}_{}", kind.name(), test.short_name()),
                scores,
            )?);
        }
    }
    if spec.baselines {
        type Pick = fn(&BaselineScores) -> Option<SimilarityScore>;
        let picks: [(&str, Pick); 3] = [
            ("pcs", |b| b.pcs),
            ("intrinsic", |b| b.intrinsic),
            ("reef", |b| b.reef),
        ];
        for (name, pick) in picks {
            let scores = records
                .iter()
                .filter_map(|r| {
                    r.baselines
                        .as_ref()
                        .and_then(pick)
                        .map(|s| label(r, s.value))
                })
                .collect();
            out.extend(metric_for(name.to_string(), scores)?);
        }
    }
    Ok(out)
}

/// Smallest number of categories whose counts reach `share` of the total.
pub fn coverage_set_size(counts: &[u64], share: f64) -> usize {
    let total: u64 = counts.iter().sum();
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let target = share * total as f64;
    let mut acc = 0u64;
    for (i, c) in sorted.iter().enumerate() {
        acc += c;
        if acc as f64 >= target {
            return i + 1;
        }
    }
    sorted.len()
}

fn observe_seed(
    spec: &ExperimentSpec,
    seed: u64,
    init: &ModelParams,
    ckpt: &ModelParams,
    exec: Execution,
) -> Result<ObservationRecord> {
    let o = &spec.observation;
    let vocab = spec.model.vocab_size;
    let tokens = sample_token_probes(o.n, o.ell, vocab, o.probe_seed)?;
    let init_out = collect_token_outputs(init, &tokens, OutputKind::Logits, exec)?;
    let mut counts = vec![0u64; vocab];
    for i in 0..init_out.n {
        let row = init_out.row(i);
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        counts[best] += 1;
    }
    let chi = chi_square_uniform(&counts)?;
    let size = coverage_set_size(&counts, o.coverage);

    let ckpt_out = collect_token_outputs(ckpt, &tokens, OutputKind::Logits, exec)?;
    let m = spec.detection.m.unwrap_or_else(|| default_m(vocab));
    let set = identity_indices(&mean_output(&init_out), m, OutputKind::Logits)?;
    let value = persistence_probe(&init_out, &ckpt_out, std::slice::from_ref(&set))?[0];
    let null = persistence_null(o.n, m, o.null_seed, o.null_reps, exec)?;
    let null_p99 = quantile(&null, 0.99)?;
    Ok(ObservationRecord {
        seed,
        n: o.n,
        ell: o.ell,
        vocab_size: vocab,
        argmax_counts: counts,
        chi_square: chi,
        coverage: o.coverage,
        coverage_set_size: size,
        coverage_fraction: size as f64 / vocab as f64,
        persistence: PersistenceRecord {
            step: o.persistence_step,
            m,
            value,
            null_p99,
            null_reps: o.null_reps,
            exceeds_null: value > null_p99,
        },
    })
}
