//! `eventail` command-line driver.

mod commands;
mod config;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use eventail::robust::RefinementMode;

use crate::config::{RunConfig, SweepKind};

#[derive(Debug, Parser)]
#[command(name = "eventail", version, about = "Line-based velocity estimation from event streams")]
struct Cli {
    /// TOML file with flat configuration keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    refine: Option<Refine>,
    /// Leave timing fields empty so outputs are reproducible byte for byte.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Refine {
    None,
    Linear,
    Lm,
}

impl From<Refine> for RefinementMode {
    fn from(r: Refine) -> Self {
        match r {
            Refine::None => RefinementMode::None,
            Refine::Linear => RefinementMode::NonMinimalLinear,
            Refine::Lm => RefinementMode::NonlinearLm,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic event stream, gyro log and ground truth.
    Simulate,
    /// Estimate the camera velocity from an event stream and gyro log.
    Estimate(InputArgs),
    /// Run seeded simulation trials and write one record per trial.
    Sweep {
        #[arg(long, value_enum)]
        kind: Option<SweepKind>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Time repeated minimal solves.
    Bench {
        #[arg(long)]
        solves: Option<usize>,
    },
    /// Fit manifolds and write their events in canonical coordinates.
    Canonicalize(InputArgs),
}

/// Inputs default to the files `simulate` writes into the output directory.
#[derive(Debug, clap::Args)]
struct InputArgs {
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    gyro: Option<PathBuf>,
    /// Ground-truth JSON; enables error reporting.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Reference time in seconds.
    #[arg(long)]
    reference_time: Option<f64>,
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(r) = cli.refine {
        cfg.refinement_mode = r.into();
    }
    match &cli.command {
        Command::Estimate(a) | Command::Canonicalize(a) => {
            cfg.events_path = a.events.clone().or(cfg.events_path);
            cfg.gyro_path = a.gyro.clone().or(cfg.gyro_path);
            cfg.truth_path = a.truth.clone().or(cfg.truth_path);
            cfg.reference_time = a.reference_time.or(cfg.reference_time);
        }
        Command::Sweep { kind, trials } => {
            cfg.sweep = kind.unwrap_or(cfg.sweep);
            cfg.trials = trials.unwrap_or(cfg.trials);
        }
        Command::Bench { solves } => cfg.bench_solves = solves.unwrap_or(cfg.bench_solves),
        Command::Simulate => {}
    }
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("EVENTAIL_THREADS") else { return Ok(()) };
    let n: usize = value.trim().parse().with_context(|| format!("parse EVENTAIL_THREADS={value:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configure thread pool")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let cfg = build_config(&cli)?;
    let timing = !cli.no_timing;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Estimate(_) => commands::estimate(&cfg, timing),
        Command::Sweep { .. } => commands::sweep(&cfg, timing),
        Command::Bench { .. } => commands::bench(&cfg),
        Command::Canonicalize(_) => commands::canonicalize(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
