//! `intervene`: train, evaluate, sweep, export and serve copilots from a
//! declarative JSON run config.

use std::fmt::Display;
use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use intervene_core::checkpoint::{self, Checkpoint};
use intervene_core::config::RunConfig;
use intervene_core::copilots::train;
use intervene_core::env::lander;
use intervene_core::harness::{self, export, sweep, HeatmapGrid};
use intervene_core::logs;
use intervene_core::pilots::{Pilot, PilotSpec};
use intervene_core::Error;
use serde::Serialize;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "intervene", version, about = "Intervention-constrained shared autonomy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a copilot; writes a checkpoint, learning curves and a manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint with greedy deployment episodes.
    Eval(EvalArgs),
    /// Train and evaluate every (grid value, seed) cell of a sweep.
    Sweep(SweepArgs),
    /// Turn episode logs into heatmap or feature-distribution CSVs.
    Export(ExportArgs),
    /// Run the interactive play service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Run config whose pilot (and episode count) to use.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline pilot spec as JSON, e.g. '{"kind":"scripted"}'.
    #[arg(long, conflicts_with = "config")]
    pilot: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides a budget copilot's initial budget.
    #[arg(long)]
    budget: Option<u32>,
    /// Directory for metrics.csv and episodes.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Runs a single seed instead of the configured seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's `out`; results.csv and ledger.jsonl go here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Directory of *.jsonl episode logs.
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    heatmap: bool,
    #[arg(long)]
    features: bool,
    /// Bins per axis for continuous-state heatmaps.
    #[arg(long, default_value_t = 32)]
    resolution: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Directory holding the checkpoints sessions may load.
    #[arg(long)]
    checkpoints: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8765")]
    addr: SocketAddr,
    /// Idle session lifetime in seconds.
    #[arg(long, default_value_t = 1800)]
    ttl: u64,
}

/// Failure classes mapped to exit codes.
enum Failure {
    /// Bad invocation, config or input file (exit 2).
    Usage(String),
    /// Anything that went wrong while doing the work (exit 3).
    Runtime(String),
}

fn usage(e: impl Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Input-shaped library errors are the caller's fault; the rest are not.
fn classify(e: Error) -> Failure {
    match e {
        Error::Config { .. } | Error::Parse(_) | Error::Checkpoint(_) => usage(e),
        other => runtime(other),
    }
}

fn main() -> ExitCode {
    let filter = EnvFilter::try_from_env("INTERVENE_RL_LOG").unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Export(a) => cmd_export(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = flag
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| usage("no output directory: pass --out or set `out` in the config"))?;
    std::fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn build_pilot(spec: Option<&PilotSpec>, cfg_env: &intervene_core::env::EnvSpec, seed: u64) -> Result<Option<Box<dyn Pilot>>, Failure> {
    let env = cfg_env.build(0).map_err(classify)?;
    spec.map(|p| p.build(&env, seed)).transpose().map_err(classify)
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a RunConfig,
    checkpoint: &'a str,
    curves: &'a str,
    episodes: usize,
    frames: usize,
    final_lambda: Option<f64>,
    pilot: Option<String>,
}

fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(&args.config).map_err(classify)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = output_dir(args.out, &cfg)?;
    let mut pilot = if cfg.method.needs_pilot() {
        build_pilot(cfg.pilot.as_ref(), &cfg.env, cfg.seed)?
    } else {
        None
    };
    let frames = cfg.learner.training_frames;
    tracing::info!(method = cfg.method.name(), frames, seed = cfg.seed, "training");
    let (trained, stats) = train(&cfg.method, &cfg.env, pilot.as_deref_mut().map(|p| p as &mut dyn Pilot), &cfg.learner, frames, cfg.seed).map_err(classify)?;

    let ckpt_name = "copilot.ckpt";
    checkpoint::save(&out.join(ckpt_name), &Checkpoint::from_trained(&trained)).map_err(runtime)?;
    let curves_name = "curves.csv";
    export::write_curves(create(&out.join(curves_name))?, &stats).map_err(runtime)?;
    let manifest = Manifest {
        config: &cfg,
        checkpoint: ckpt_name,
        curves: curves_name,
        episodes: stats.len(),
        frames,
        final_lambda: trained.final_lambda,
        pilot: trained.pilot.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    std::fs::write(out.join("manifest.json"), text + "\n").map_err(runtime)?;
    println!("{}", out.join(ckpt_name).display());
    Ok(())
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    method: &'a str,
    seed: u64,
    mean_return: f64,
    stderr_return: f64,
    intervention_rate: f64,
    success_rate: f64,
    episodes: usize,
    steps: usize,
    interventions: usize,
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    if !args.checkpoint.is_file() {
        return Err(usage(format!("checkpoint {} does not exist", args.checkpoint.display())));
    }
    let copilot = checkpoint::load(&args.checkpoint).map_err(classify)?.into_trained();
    let (pilot_spec, cfg_episodes) = match (&args.config, &args.pilot) {
        (Some(path), _) => {
            let cfg = RunConfig::load(path).map_err(classify)?;
            (cfg.pilot, Some(cfg.eval_episodes))
        }
        (None, Some(json)) => {
            let spec: PilotSpec = serde_json::from_str(json).map_err(|e| usage(format!("--pilot: {e}")))?;
            (Some(spec.resolve(None).map_err(classify)?), None)
        }
        (None, None) => (None, None),
    };
    if copilot.method.needs_pilot() && pilot_spec.is_none() {
        return Err(usage(format!(
            "a {} copilot needs a pilot: pass --pilot or --config",
            copilot.method.name()
        )));
    }
    let episodes = args
        .episodes
        .or(cfg_episodes)
        .unwrap_or(intervene_core::config::DEFAULT_EVAL_EPISODES);
    let mut pilot = if copilot.method.needs_pilot() {
        build_pilot(pilot_spec.as_ref(), &copilot.env, args.seed)?
    } else {
        None
    };
    let (metrics, episode_logs) =
        harness::evaluate(Some(&copilot), pilot.as_deref_mut().map(|p| p as &mut dyn Pilot), &copilot.env, episodes, args.seed, args.budget)
            .map_err(classify)?;
    println!("{}", serde_json::to_string(&metrics).map_err(runtime)?);
    if let Some(out) = args.out {
        std::fs::create_dir_all(&out).map_err(runtime)?;
        let mut w = csv::Writer::from_writer(create(&out.join("metrics.csv"))?);
        w.serialize(MetricsRow {
            method: copilot.method.name(),
            seed: args.seed,
            mean_return: metrics.mean_return,
            stderr_return: metrics.stderr_return,
            intervention_rate: metrics.intervention_rate,
            success_rate: metrics.success_rate,
            episodes: metrics.episodes,
            steps: metrics.steps,
            interventions: metrics.interventions,
        })
        .map_err(runtime)?;
        w.flush().map_err(runtime)?;
        logs::write_jsonl(create(&out.join("episodes.jsonl"))?, &episode_logs).map_err(runtime)?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(&args.config).map_err(classify)?;
    if args.workers == 0 {
        return Err(usage("--workers must be positive"));
    }
    let spec = cfg.sweep_spec(args.seed.map(|s| vec![s])).map_err(classify)?;
    let out = output_dir(args.out, &cfg)?;
    let rows = harness::run_sweep(&spec, args.workers, Some(&out.join("ledger.jsonl"))).map_err(classify)?;
    sweep::write_rows(create(&out.join("results.csv"))?, &rows).map_err(runtime)?;
    println!(
        "{} rows; kendall tau(param, intervention rate) = {:.3}",
        rows.len(),
        sweep::intervention_trend(&rows)
    );
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<(), Failure> {
    if args.heatmap == args.features {
        return Err(usage("pass exactly one of --heatmap and --features"));
    }
    if !args.logs.is_dir() {
        return Err(usage(format!("{} is not a directory", args.logs.display())));
    }
    let episode_logs = logs::read_dir(&args.logs).map_err(classify)?;
    let dim = episode_logs
        .iter()
        .flat_map(|l| &l.records)
        .map(|r| r.env_state.len())
        .next()
        .ok_or_else(|| usage("no step records found"))?;
    std::fs::create_dir_all(&args.out).map_err(runtime)?;
    let grid_like = dim == 2;
    if args.heatmap {
        let grid = if grid_like {
            let max = |i: usize| {
                episode_logs
                    .iter()
                    .flat_map(|l| &l.records)
                    .map(|r| r.env_state[i])
                    .fold(0.0, f64::max) as usize
            };
            HeatmapGrid::gridworld(max(0) + 1, max(1) + 1)
        } else {
            HeatmapGrid::lander(args.resolution)
        };
        let (all, intervened) = harness::heatmap_export(&episode_logs, &grid).map_err(classify)?;
        all.write_csv(create(&args.out.join("heatmap_all.csv"))?).map_err(runtime)?;
        intervened
            .write_csv(create(&args.out.join("heatmap_intervened.csv"))?)
            .map_err(runtime)?;
    } else {
        let names: &[&str] = if grid_like { &["x", "y"] } else { &lander::FEATURE_NAMES };
        let dists = harness::feature_distribution_export(&episode_logs, names).map_err(classify)?;
        export::write_histograms(create(&args.out.join("feature_histograms.csv"))?, &dists).map_err(runtime)?;
        export::write_values(create(&args.out.join("feature_values.csv"))?, &dists).map_err(runtime)?;
    }
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<(), Failure> {
    if !args.checkpoints.is_dir() {
        return Err(usage(format!("{} is not a directory", args.checkpoints.display())));
    }
    let manager = Arc::new(intervene_play::SessionManager::new(
        intervene_play::CheckpointStore::new(args.checkpoints),
        Duration::from_secs(args.ttl),
    ));
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(intervene_play::serve(args.addr, manager)).map_err(runtime)
}
