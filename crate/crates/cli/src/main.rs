//! `seedprints`: model lifecycle, probes, output collection, lineage
//! comparison and experiments from the command line.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success; for `compare`, same lineage |
//! | 1 | any other failure |
//! | 2 | usage or configuration error |
//! | 3 | `compare`: different lineage |
//! | 4 | `compare`: inconclusive (identity-index intersection below `k_min`) |
//! | 5 | protocol error (e.g. outputs collected on different probe sets) |
//! | 6 | training diverged |
//! | 7 | I/O failure |
//! | 8 | data error (missing or malformed corpus) |
//! | 9 | malformed SPCK/SPRB/SPOT file |
//! | 10 | dimension or comparability mismatch |

mod config;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{resolve, CliConfig};
use seedprints::fingerprint::{
    collect_outputs, load_outputs, run_detection_with, save_outputs, DetectionConfig,
};
use seedprints::harness::{run_experiment_with, ExperimentSpec, ModelStore};
use seedprints::model::checkpoint::{load_checkpoint, save_checkpoint};
use seedprints::model::{init_model, train, Checkpoint, Corpus, ModelConfig};
use seedprints::probe::{generate_probes_with, load_probes, save_probes};
use seedprints::{Error, Execution};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "seedprints",
    version,
    about = "Initialization-seed lineage fingerprints for language models"
)]
struct Cli {
    /// Workspace root; relative paths and the default config resolve against it.
    #[arg(long, global = true, env = "SEEDPRINTS_WORKSPACE", default_value = ".")]
    workspace: PathBuf,

    /// Config file (TOML); defaults to `<workspace>/seedprints.toml` when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run every stage on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a fresh model from an explicit seed and write it as SPCK.
    Init(InitArgs),
    /// Train a checkpoint on a corpus, writing the checkpoint series and a loss CSV.
    Train(TrainArgs),
    /// Generate a Gaussian probe set (SPRB).
    Probe(ProbeArgs),
    /// Run a model on a probe set and store one output kind (SPOT).
    Collect(CollectArgs),
    /// Test whether two output matrices share an initialization.
    Compare(CompareArgs),
    /// Run an experiment protocol from a spec file (TOML or JSON).
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct InitArgs {
    /// Model config (TOML, the keys of a `[model]` table); overrides the config file's `[model]`.
    model: Option<PathBuf>,
    /// Named architecture instead of a file: `desk` or `tiny`.
    #[arg(long, conflicts_with = "model")]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    checkpoint: PathBuf,
    /// `narrative[-x]`, `code[-x]`, `file:<path>`, or a path to a text or `.tokens` file.
    #[arg(long)]
    corpus: String,
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    data_seed: Option<u64>,
    /// Seed of the synthetic corpus chains.
    #[arg(long)]
    corpus_seed: Option<u64>,
    /// Synthetic corpus length; defaults to enough tokens for every step.
    #[arg(long)]
    corpus_tokens: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    len: Option<usize>,
    /// Embedding width; must equal the model's d_model.
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    probe_seed: Option<u64>,
    #[arg(long)]
    scale: Option<f32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CollectArgs {
    checkpoint: PathBuf,
    probes: PathBuf,
    /// `logits` or `hidden`.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    base: PathBuf,
    suspect: PathBuf,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// `t` (Welch) or `u` (Mann–Whitney).
    #[arg(long)]
    test: Option<String>,
    #[arg(long)]
    null_seed: Option<u64>,
    /// Report path; defaults to `<report_dir>/compare.json`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    spec: PathBuf,
    /// JSON report path; defaults to `<report_dir>/<kind>.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the per-pair table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// A failure with a fixed exit code that is not a library error.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Exit(2, msg.into()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(Exit(code, _)) = cause.downcast_ref::<Exit>() {
            return *code;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::Validation(_) | Error::Input(_) => 2,
                Error::Inconclusive { .. } => 4,
                Error::Protocol(_) => 5,
                Error::Divergence { .. } => 6,
                Error::Io(_) => 7,
                Error::Data(_) => 8,
                Error::Format(_) | Error::Json(_) => 9,
                Error::Dimension(_) | Error::Comparability(_) => 10,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 7;
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return 2;
        }
    }
    1
}

struct Ctx {
    workspace: PathBuf,
    cfg: CliConfig,
    exec: Execution,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        resolve(&self.workspace, p)
    }

    fn checkpoint_dir(&self) -> PathBuf {
        self.path(&self.cfg.paths.checkpoint_dir)
    }

    fn report_dir(&self) -> PathBuf {
        self.path(&self.cfg.paths.report_dir)
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn cmd_init(ctx: &Ctx, args: InitArgs) -> Result<u8> {
    let seed = args.seed.or(ctx.cfg.seeds.init).ok_or_else(|| {
        usage("an explicit --seed is required (or seeds.init in the config); seeds are never drawn implicitly")
    })?;
    let model = match (&args.model, args.preset.as_deref()) {
        (Some(path), _) => {
            let path = ctx.path(path);
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            let cfg: ModelConfig = toml::from_str(&text)
                .map_err(|e| Error::Config(format!("model config {}: {e}", path.display())))?;
            cfg
        }
        (None, Some("desk")) => ModelConfig::desk(),
        (None, Some("tiny")) => ModelConfig::tiny(),
        (None, Some(other)) => {
            return Err(usage(format!(
                "unknown preset {other:?} (expected desk or tiny)"
            )))
        }
        (None, None) => ctx.cfg.model.clone(),
    };
    let params = init_model(&model, seed)?;
    let out = args
        .out
        .map(|p| ctx.path(&p))
        .unwrap_or_else(|| ctx.checkpoint_dir().join(format!("init-s{seed}.spck")));
    create_parent(&out)?;
    save_checkpoint(
        &out,
        &Checkpoint {
            params,
            step: 0,
            loss: None,
        },
    )?;
    println!("{}", out.display());
    Ok(0)
}

fn cmd_train(ctx: &Ctx, args: TrainArgs) -> Result<u8> {
    let data_seed = args.data_seed.or(ctx.cfg.seeds.data_order).ok_or_else(|| {
        usage("an explicit --data-seed is required (or seeds.data_order in the config)")
    })?;
    if args.steps == 0 {
        return Err(usage("--steps must be positive"));
    }
    let start_path = ctx.path(&args.checkpoint);
    let start = load_checkpoint(&start_path)
        .with_context(|| format!("loading {}", start_path.display()))?;
    let hyper = &ctx.cfg.training;
    let vocab = start.params.config.vocab_size;
    let corpus = if Path::new(&args.corpus).exists() {
        Corpus::load(&ctx.path(Path::new(&args.corpus)), vocab)?
    } else if args.corpus.starts_with("file:")
        || args.corpus.starts_with("narrative")
        || args.corpus.starts_with("code")
    {
        let seed = args.corpus_seed.or(ctx.cfg.seeds.corpus).unwrap_or(0);
        let len = args
            .corpus_tokens
            .unwrap_or(args.steps * hyper.tokens_per_step() + hyper.seq_len + 1);
        Corpus::named(&args.corpus, vocab, seed, len)?
    } else {
        bail!(Error::Data(format!("corpus {:?} not found", args.corpus)));
    };
    let outcome = train(&start.params, &corpus, args.steps, data_seed, hyper)?;

    let stem = start_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let corpus_tag: String = args
        .corpus
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    let dir = args.out_dir.map(|p| ctx.path(&p)).unwrap_or_else(|| {
        ctx.checkpoint_dir()
            .join(format!("{stem}-{corpus_tag}-d{data_seed}"))
    });
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for c in outcome.checkpoints.iter().filter(|c| c.step > 0) {
        let path = dir.join(format!("step{}.spck", start.step + c.step));
        save_checkpoint(&path, c)?;
        println!("{}", path.display());
    }
    let mut csv = String::from("step,loss\n");
    for (i, l) in outcome.losses.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", start.step + i + 1));
    }
    let loss_path = dir.join("loss.csv");
    std::fs::write(&loss_path, csv).with_context(|| format!("writing {}", loss_path.display()))?;
    println!("{}", loss_path.display());
    Ok(0)
}

fn cmd_probe(ctx: &Ctx, args: ProbeArgs) -> Result<u8> {
    let d = &ctx.cfg.defaults;
    let n = args.n.unwrap_or(d.n);
    let len = args.len.unwrap_or(d.len);
    let scale = args.scale.unwrap_or(d.scale);
    if n == 0 || len == 0 || args.dim == 0 {
        return Err(usage("--n, --len and --dim must be positive"));
    }
    let seed = args.probe_seed.or(ctx.cfg.seeds.probe).ok_or_else(|| {
        usage("an explicit --probe-seed is required (or seeds.probe in the config)")
    })?;
    let probes = generate_probes_with(n, len, args.dim, seed, scale, ctx.exec)?;
    let out = args.out.map(|p| ctx.path(&p)).unwrap_or_else(|| {
        ctx.workspace
            .join(format!("probes-n{n}-l{len}-d{}-s{seed}.sprb", args.dim))
    });
    create_parent(&out)?;
    save_probes(&out, &probes)?;
    println!("{}", out.display());
    Ok(0)
}

fn cmd_collect(ctx: &Ctx, args: CollectArgs) -> Result<u8> {
    let kind = match &args.kind {
        Some(k) => k.parse()?,
        None => ctx.cfg.kind()?,
    };
    let ckpt_path = ctx.path(&args.checkpoint);
    let ckpt =
        load_checkpoint(&ckpt_path).with_context(|| format!("loading {}", ckpt_path.display()))?;
    let probes_path = ctx.path(&args.probes);
    let probes =
        load_probes(&probes_path).with_context(|| format!("loading {}", probes_path.display()))?;
    let outputs = collect_outputs(&ckpt.params, &probes, kind, ctx.exec)?;
    let out = args.out.map(|p| ctx.path(&p)).unwrap_or_else(|| {
        let stem = ckpt_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        ckpt_path.with_file_name(format!("{stem}-{kind}-p{}.spot", probes.probe_seed))
    });
    create_parent(&out)?;
    save_outputs(&out, &outputs)?;
    println!("{}", out.display());
    Ok(0)
}

/// What `compare` writes, whatever the outcome.
#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum CompareReport {
    Decided {
        exit_code: u8,
        #[serde(flatten)]
        report: seedprints::fingerprint::DetectionReport,
    },
    Inconclusive {
        exit_code: u8,
        k: usize,
        k_min: usize,
        config: DetectionConfig,
    },
    Error {
        exit_code: u8,
        error: String,
        config: DetectionConfig,
    },
}

fn cmd_compare(ctx: &Ctx, args: CompareArgs) -> Result<u8> {
    let d = &ctx.cfg.defaults;
    let test = match &args.test {
        Some(t) => t.parse()?,
        None => ctx.cfg.test()?,
    };
    let cfg = DetectionConfig {
        m: args.m.or(d.m),
        alpha: args.alpha.unwrap_or(d.alpha),
        trials: args.trials.unwrap_or(d.trials),
        test,
        base_null_seed: args.null_seed.or(ctx.cfg.seeds.null).unwrap_or(0),
        k_min: d.k_min,
    };
    let report_path = args
        .report
        .map(|p| ctx.path(&p))
        .unwrap_or_else(|| ctx.report_dir().join("compare.json"));
    let result = load_outputs(&ctx.path(&args.base))
        .and_then(|a| load_outputs(&ctx.path(&args.suspect)).map(|b| (a, b)))
        .and_then(|(a, b)| run_detection_with(&a, &b, &cfg, ctx.exec));
    let (report, outcome) = match result {
        Ok(r) => {
            let code = if r.same_lineage { 0 } else { 3 };
            println!(
                "{} (p_mean = {:.3e}, k = {}, test = {})",
                if r.same_lineage {
                    "same lineage"
                } else {
                    "different lineage"
                },
                r.p_mean,
                r.k,
                r.test.short_name()
            );
            (
                CompareReport::Decided {
                    exit_code: code,
                    report: r,
                },
                Ok(code),
            )
        }
        Err(Error::Inconclusive { k, k_min }) => {
            println!("inconclusive: identity-index intersection has {k} coordinates, need {k_min}");
            (
                CompareReport::Inconclusive {
                    exit_code: 4,
                    k,
                    k_min,
                    config: cfg,
                },
                Ok(4),
            )
        }
        Err(e) => {
            let err = anyhow::Error::from(e);
            let code = exit_code(&err);
            (
                CompareReport::Error {
                    exit_code: code,
                    error: err.to_string(),
                    config: cfg,
                },
                Err(err),
            )
        }
    };
    create_parent(&report_path)?;
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", report_path.display()))?;
    eprintln!("report: {}", report_path.display());
    outcome
}

fn cmd_experiment(ctx: &Ctx, args: ExperimentArgs) -> Result<u8> {
    let path = ctx.path(&args.spec);
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut spec =
        ExperimentSpec::parse(&text).map_err(|e| usage(format!("spec {}: {e}", path.display())))?;
    if let Some(dir) = &spec.training.checkpoint_dir {
        spec.training.checkpoint_dir = Some(ctx.path(dir));
    }
    let store = ModelStore::new(spec.store_settings())?;
    let report = run_experiment_with(&spec, &store, ctx.exec)?;
    let out = args
        .out
        .map(|p| ctx.path(&p))
        .unwrap_or_else(|| ctx.report_dir().join(format!("{}.json", spec.kind.name())));
    create_parent(&out)?;
    std::fs::write(&out, report.to_json()?)
        .with_context(|| format!("writing {}", out.display()))?;
    println!("{}", out.display());
    if let Some(csv) = args.csv {
        let csv = ctx.path(&csv);
        create_parent(&csv)?;
        std::fs::write(&csv, report.to_csv())
            .with_context(|| format!("writing {}", csv.display()))?;
        println!("{}", csv.display());
    }
    for m in &report.metrics {
        println!(
            "{}: auc {:.3}, ks {:.3} ({}+/{}-)",
            m.method, m.auc, m.ks, m.positives, m.negatives
        );
    }
    if report.incomplete {
        eprintln!(
            "incomplete: {} pair(s) skipped by the training budget",
            report.skipped.len()
        );
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = CliConfig::load(cli.config.as_deref(), &cli.workspace).map_err(|e| {
        let code = exit_code(&e);
        anyhow!(Exit(if code == 7 { 7 } else { 2 }, format!("{e:#}")))
    })?;
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let ctx = Ctx {
        workspace: cli.workspace,
        cfg,
        exec,
    };
    match cli.command {
        Command::Init(a) => cmd_init(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Probe(a) => cmd_probe(&ctx, a),
        Command::Collect(a) => cmd_collect(&ctx, a),
        Command::Compare(a) => cmd_compare(&ctx, a),
        Command::Experiment(a) => cmd_experiment(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
