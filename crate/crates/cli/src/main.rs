//! `platoon-sim`: train, evaluate and replay platoon episodes.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 when episode
//! failures (failed rows, replay divergence, halted training) are present.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use platoon_core::env::HighLevelAction;
use platoon_core::eval::{self, emit_series, replay, PolicySource, ScenarioSpec, Trace};
use platoon_core::learner::{Checkpoint, TrainConfig, Trainer};

#[derive(Parser)]
#[command(name = "platoon-sim", version, about = "Safety-projected platoon decision making in mixed highway traffic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the masked actor-critic and write a checkpoint plus statistics.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for `checkpoint.bin` and `stats.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full supervisor stack over a range of seeds.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Trained network; without it the proposer is the scripted action.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Scripted::Idle)]
        scripted: Scripted,
        /// `a..b` (exclusive) or `a..=b`; defaults to the seeds in the config.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Metrics CSV: one row per seed followed by the aggregate row.
        #[arg(long)]
        report: PathBuf,
        /// Write one JSON-lines trace per seed into this directory.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Re-simulate a trace and check it step by step.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        /// Write `positions.csv` and `headways.csv` into this directory.
        #[arg(long)]
        emit_series: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scripted {
    Idle,
    Slower,
    Faster,
    LaneLeft,
    LaneRight,
}

impl From<Scripted> for HighLevelAction {
    fn from(s: Scripted) -> Self {
        match s {
            Scripted::Idle => HighLevelAction::Idle,
            Scripted::Slower => HighLevelAction::Slower,
            Scripted::Faster => HighLevelAction::Faster,
            Scripted::LaneLeft => HighLevelAction::LaneLeft,
            Scripted::LaneRight => HighLevelAction::LaneRight,
        }
    }
}

enum Failure {
    Config(anyhow::Error),
    Episodes(anyhow::Error),
}

impl Failure {
    fn config(e: impl Into<anyhow::Error>) -> Self {
        Failure::Config(e.into())
    }
}

fn parse_seeds(text: &str) -> anyhow::Result<Vec<u64>> {
    let (lo, hi, inclusive) = if let Some((a, b)) = text.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = text.split_once("..") {
        (a, b, false)
    } else {
        let seed = text.trim().parse().with_context(|| format!("bad seed `{text}`"))?;
        return Ok(vec![seed]);
    };
    let lo: u64 = lo.trim().parse().with_context(|| format!("bad range start in `{text}`"))?;
    let hi: u64 = hi.trim().parse().with_context(|| format!("bad range end in `{text}`"))?;
    let seeds: Vec<u64> = if inclusive { (lo..=hi).collect() } else { (lo..hi).collect() };
    if seeds.is_empty() {
        bail!("seed range `{text}` is empty");
    }
    Ok(seeds)
}

fn train(config: &Path, seed: u64, out: &Path) -> Result<(), Failure> {
    let config: TrainConfig = eval::load_toml(config).map_err(Failure::config)?;
    let mut trainer = Trainer::new(config, seed).map_err(Failure::config)?;
    std::fs::create_dir_all(out).map_err(Failure::config)?;
    let mut stats = csv::Writer::from_path(out.join("stats.csv")).map_err(Failure::config)?;
    let checkpoint_path = out.join("checkpoint.bin");
    while trainer.env_steps < trainer.config.total_steps {
        let record = match trainer.iterate() {
            Ok(r) => r,
            Err(e) => {
                // Keep the last accepted parameters for inspection.
                trainer.checkpoint().and_then(|c| c.save(&checkpoint_path)).map_err(|e| Failure::Episodes(e.into()))?;
                return Err(Failure::Episodes(anyhow!(e).context(format!("training halted after {} env steps", trainer.env_steps))));
            }
        };
        stats.serialize(record).map_err(|e| Failure::Episodes(e.into()))?;
        stats.flush().map_err(|e| Failure::Episodes(e.into()))?;
        eprintln!(
            "update {:>4}  steps {:>7}  episode R {:>8.4}  entropy {:.3}  kl {:.4}  rollbacks {}",
            record.update, record.env_steps, record.episode_reward, record.entropy, record.kl, record.rollbacks
        );
    }
    trainer.checkpoint().and_then(|c| c.save(&checkpoint_path)).map_err(|e| Failure::Episodes(e.into()))?;
    println!("wrote {}", checkpoint_path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    config: &Path,
    checkpoint: Option<&Path>,
    scripted: Scripted,
    seeds: Option<&str>,
    jobs: usize,
    report: &Path,
    traces: Option<&Path>,
) -> Result<(), Failure> {
    let spec: ScenarioSpec = eval::load_toml(config).map_err(Failure::config)?;
    spec.validate().map_err(Failure::config)?;
    let seeds = match seeds {
        Some(text) => parse_seeds(text).map_err(Failure::Config)?,
        None => spec.seeds.clone(),
    };
    let policy = match checkpoint {
        Some(path) => {
            let ckpt = Checkpoint::load(path).map_err(Failure::config)?;
            if ckpt.network.num_vehicles != spec.traffic.platoon.size {
                return Err(Failure::Config(anyhow!(
                    "checkpoint controls {} vehicles but the scenario platoon has {}",
                    ckpt.network.num_vehicles,
                    spec.traffic.platoon.size
                )));
            }
            PolicySource::Network(ckpt.network)
        }
        None => PolicySource::Scripted(scripted.into()),
    };
    let (metrics, episode_traces) = eval::run_eval_with_traces(&spec, &seeds, &policy, jobs).map_err(Failure::config)?;
    metrics.write_csv(report).map_err(Failure::config)?;
    if let Some(dir) = traces {
        std::fs::create_dir_all(dir).map_err(Failure::config)?;
        for (seed, trace) in seeds.iter().zip(&episode_traces) {
            if let Some(trace) = trace {
                trace.save(&dir.join(format!("seed_{seed}.jsonl"))).map_err(Failure::config)?;
            }
        }
    }
    let a = &metrics.aggregate;
    println!(
        "{}: {} episodes  collision {:.3}  pass {:.3}  safe_halt {:.3}  timeout {:.3}  failed {:.3}  speed {:.2} m/s  headway {:.2} m",
        spec.name,
        metrics.rows.len(),
        a.collision,
        a.passed,
        a.safe_halt,
        a.timeout,
        a.failed,
        a.avg_speed,
        a.avg_hwd
    );
    let failed = metrics.num_failed();
    if failed > 0 {
        for row in metrics.rows.iter().filter(|r| r.failed != 0.0) {
            eprintln!("seed {:?} failed: {}", row.seed, row.error.as_deref().unwrap_or("unknown error"));
        }
        return Err(Failure::Episodes(anyhow!("{failed} episode(s) failed")));
    }
    Ok(())
}

fn replay_trace(path: &Path, emit: Option<&Path>) -> Result<(), Failure> {
    let trace = Trace::load(path).map_err(Failure::config)?;
    let report = replay(&trace).map_err(|e| Failure::Episodes(e.into()))?;
    if let Some(dir) = emit {
        emit_series(&trace, dir).map_err(Failure::config)?;
    }
    match report.divergence {
        None => {
            println!("{}: {} steps replayed, no divergence", path.display(), report.steps_checked);
            Ok(())
        }
        Some(d) => Err(Failure::Episodes(anyhow!(
            "divergence at step {} (vehicle {}): {}",
            d.step,
            d.vehicle.map_or("-".to_string(), |v| v.to_string()),
            d.fields.join(", ")
        ))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Train { config, seed, out } => train(config, *seed, out),
        Command::Eval {
            config,
            checkpoint,
            scripted,
            seeds,
            jobs,
            report,
            traces,
        } => evaluate(config, checkpoint.as_deref(), *scripted, seeds.as_deref(), *jobs, report, traces.as_deref()),
        Command::Replay { trace, emit_series } => replay_trace(trace, emit_series.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Episodes(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
