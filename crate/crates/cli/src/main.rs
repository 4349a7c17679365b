//! `wsbc`: file-backed offline policy search pipeline.
//!
//! Every subcommand starts from a JSON run config (`--config`, or the
//! built-in defaults) and applies its flags on top. Exit codes: 0 success,
//! 1 usage, 2 validation, 3 numeric failure. `WSBC_WORKERS` sets the size of
//! the worker pool; results do not depend on it.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wsbc::env::BaselinePolicy;
use wsbc::pipeline::{self, RunConfig};
use wsbc::search::SearchMode;
use wsbc::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "wsbc", version, about = "Offline policy search with weight-space behavior constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out a baseline controller with ε-greedy exploration.
    Generate(GenerateArgs),
    /// Train the transition-model ensemble.
    TrainModels(TrainModelsArgs),
    /// Clone the data-generating policy.
    TrainBc(TrainBcArgs),
    /// Search for a policy near the clone.
    Search(SearchArgs),
    /// Evaluate a search result and its clone on the plant.
    Evaluate(EvaluateArgs),
    /// Search and evaluate over a list of box radii.
    Sweep(SweepArgs),
    /// Generate, train, search and evaluate in one directory.
    Run(RunArgs),
}

#[derive(Args)]
struct Common {
    /// Run config (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> wsbc::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.seed, self.seed);
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataFlags,
    /// Dataset file to write (a `.json` sidecar and `.manifest.json` go next to it).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataFlags {
    #[arg(long)]
    policy: Option<BaselinePolicy>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Number of transitions.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    episode_length: Option<usize>,
    #[arg(long)]
    history_len: Option<usize>,
}

impl DataFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let g = &mut cfg.generate;
        set(&mut g.policy, self.policy);
        set(&mut g.epsilon, self.epsilon);
        set(&mut g.n_transitions, self.n);
        set(&mut g.episode_length, self.episode_length);
        set(&mut g.history_len, self.history_len);
    }
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    /// Cap on minibatches per epoch (default: a full pass).
    #[arg(long)]
    batches_per_epoch: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
}

#[derive(Args)]
struct TrainModelsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Ensemble size.
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct TrainBcArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct SearchFlags {
    /// Search mode: wsbc (box-constrained) or penalized.
    #[arg(long)]
    mode: Option<SearchMode>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Number of start windows per fitness evaluation.
    #[arg(long)]
    starts: Option<usize>,
    /// Model rollout horizon.
    #[arg(long)]
    rollout_horizon: Option<usize>,
}

impl SearchFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.search;
        set(&mut s.mode, self.mode);
        set(&mut s.swarm.n_particles, self.particles);
        set(&mut s.swarm.iterations, self.iterations);
        set(&mut s.n_starts, self.starts);
        set(&mut s.rollout.horizon, self.rollout_horizon);
    }
}

#[derive(Args)]
struct EvalFlags {
    #[arg(long)]
    episodes: Option<usize>,
    /// Plant steps per evaluation episode.
    #[arg(long)]
    horizon: Option<usize>,
}

impl EvalFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.eval.episodes, self.episodes);
        set(&mut cfg.eval.horizon, self.horizon);
    }
}

#[derive(Args)]
struct Upstream {
    #[arg(long)]
    data: PathBuf,
    /// Directory written by `train-models`.
    #[arg(long)]
    models: PathBuf,
    /// Directory written by `train-bc`.
    #[arg(long)]
    behavior: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    upstream: Upstream,
    #[arg(long)]
    out: PathBuf,
    /// Box radius around the clone's weights.
    #[arg(long)]
    d: Option<f64>,
    #[command(flatten)]
    search: SearchFlags,
    /// Re-read the written weights and check them against the box.
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Directory written by `search`.
    #[arg(long)]
    search: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    eval: EvalFlags,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    upstream: Upstream,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated box radii.
    #[arg(long, value_delimiter = ',')]
    d: Vec<f64>,
    /// Searches per radius.
    #[arg(long)]
    repetitions: Option<usize>,
    #[command(flatten)]
    search: SearchFlags,
    #[command(flatten)]
    eval: EvalFlags,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    data: DataFlags,
    #[arg(long)]
    d: Option<f64>,
    #[command(flatten)]
    search: SearchFlags,
    #[command(flatten)]
    eval: EvalFlags,
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

fn apply_train(train: &TrainFlags, epochs: &mut usize, batches: &mut Option<usize>, hidden: &mut usize) {
    set(epochs, train.epochs);
    if train.batches_per_epoch.is_some() {
        *batches = train.batches_per_epoch;
    }
    set(hidden, train.hidden);
}

fn print_manifest(dir: &Path) {
    println!("wrote {}", dir.join(pipeline::MANIFEST).display());
}

fn execute(cmd: Command) -> wsbc::Result<()> {
    match cmd {
        Command::Generate(a) => {
            let mut cfg = a.common.load()?;
            a.data.apply(&mut cfg);
            let m = pipeline::generate(&cfg, &a.out)?;
            println!("wrote {} ({} transitions)", a.out.display(), m.summary["transitions"]);
        }
        Command::TrainModels(a) => {
            let mut cfg = a.common.load()?;
            set(&mut cfg.models.ensemble_size, a.k);
            let t = &mut cfg.models.train;
            apply_train(&a.train, &mut t.max_epochs, &mut t.batches_per_epoch, &mut t.hidden);
            pipeline::train_models(&cfg, &a.data, &a.out)?;
            print_manifest(&a.out);
        }
        Command::TrainBc(a) => {
            let mut cfg = a.common.load()?;
            let b = &mut cfg.behavior;
            apply_train(&a.train, &mut b.max_epochs, &mut b.batches_per_epoch, &mut b.hidden);
            pipeline::train_behavior(&cfg, &a.data, &a.out)?;
            print_manifest(&a.out);
        }
        Command::Search(a) => {
            let mut cfg = a.common.load()?;
            set(&mut cfg.search.d, a.d);
            a.search.apply(&mut cfg);
            let u = &a.upstream;
            let m = pipeline::search(&cfg, &u.data, &u.models, &u.behavior, &a.out)?;
            println!("best fitness {}", m.summary["best_fitness"]);
            if a.verify {
                let dist = pipeline::verify_search(&a.out)?;
                println!("verified: max |theta - psi| = {dist:e} (d = {})", cfg.search.d);
            }
            print_manifest(&a.out);
        }
        Command::Evaluate(a) => {
            let mut cfg = a.common.load()?;
            a.eval.apply(&mut cfg);
            let m = pipeline::evaluate(&cfg, &a.search, &a.out)?;
            println!(
                "mean return {} (clone {}), tenth percentile {}",
                m.summary["mean"], m.summary["clone_mean"], m.summary["tenth_percentile"]
            );
            print_manifest(&a.out);
        }
        Command::Sweep(a) => {
            let mut cfg = a.common.load()?;
            if !a.d.is_empty() {
                cfg.sweep.d_values = a.d.clone();
            }
            set(&mut cfg.sweep.repetitions, a.repetitions);
            a.search.apply(&mut cfg);
            a.eval.apply(&mut cfg);
            let u = &a.upstream;
            pipeline::sweep(&cfg, &u.data, &u.models, &u.behavior, &a.out)?;
            println!("wrote {}", a.out.join("sweep.csv").display());
        }
        Command::Run(a) => {
            let mut cfg = a.common.load()?;
            a.data.apply(&mut cfg);
            set(&mut cfg.search.d, a.d);
            a.search.apply(&mut cfg);
            a.eval.apply(&mut cfg);
            let m = pipeline::run(&cfg, &a.out)?;
            println!("mean return {} (clone {})", m.summary["mean"], m.summary["clone_mean"]);
        }
    }
    Ok(())
}

fn init_workers() -> Result<(), String> {
    let Ok(raw) = std::env::var("WSBC_WORKERS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("WSBC_WORKERS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Numeric => 3,
        ErrorKind::Validation | ErrorKind::Io => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(msg) = init_workers() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
