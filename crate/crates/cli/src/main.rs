//! `nakagami`: simulate envelope data, train the score network, estimate
//! Nakagami maps and evaluate them.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nakagami::{LowPass, OmegaMode};

use config::{parse_sizes, MethodName, Preset, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "nakagami", version, about = "Nakagami parametric imaging toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Generate ground-truth maps and Nakagami measurements.
    Simulate,
    /// Train the score network on measurements.
    Train,
    /// Compute a parametric map for every measurement.
    Estimate,
    /// Compare estimates with ground truth and summarise ROIs.
    Evaluate,
    /// Run a complete preset experiment.
    Benchmark,
}

#[derive(Args, Default)]
struct Flags {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed of the invoked command (measurements, training, or the benchmark).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodName>,
    /// Window size for moment and ml.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Window sizes for wmc, e.g. 9,11,13.
    #[arg(long, global = true, value_parser = parse_sizes)]
    sizes: Option<Vec<usize>>,
    /// median:k, average:k or none.
    #[arg(long, global = true)]
    filter: Option<LowPass>,
    /// global, local:k or fixed:v.
    #[arg(long, global = true)]
    omega: Option<OmegaMode>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Input directory or file.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Score network checkpoint for the unicorn method.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Estimate run directory or NKRF map (repeatable).
    #[arg(long, global = true)]
    estimate: Vec<PathBuf>,
    /// Ground-truth NKRF file or directory.
    #[arg(long, global = true)]
    truth: Option<PathBuf>,
    /// NKRF file whose mask marks the region of interest.
    #[arg(long, global = true)]
    roi: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
}

fn apply(flags: &Flags, command: Command, cfg: &mut RunConfig) {
    if let Some(seed) = flags.seed {
        match command {
            Command::Simulate => cfg.simulate.seed = seed,
            Command::Train => cfg.train.score.train.seed = seed,
            Command::Benchmark => {
                cfg.benchmark.table.seed = seed;
                cfg.benchmark.table.training.train.seed = seed;
                cfg.benchmark.roi.seed = seed;
                cfg.benchmark.roi.training.train.seed = seed;
            }
            Command::Estimate | Command::Evaluate => {}
        }
    }
    let est = &mut cfg.estimate;
    if let Some(m) = flags.method {
        est.method = m;
    }
    if let Some(w) = flags.window {
        est.window = w;
    }
    if let Some(s) = &flags.sizes {
        est.sizes = s.clone();
        cfg.benchmark.table.wmc_sizes = s.clone();
        cfg.benchmark.roi.wmc_sizes = s.clone();
    }
    if let Some(f) = flags.filter {
        est.filter = f;
        cfg.benchmark.table.unicorn.filter = f;
        cfg.benchmark.roi.unicorn.filter = f;
    }
    if let Some(o) = flags.omega {
        est.omega = o;
        cfg.benchmark.table.unicorn.omega_mode = o;
        cfg.benchmark.roi.unicorn.omega_mode = o;
    }
    if let Some(c) = &flags.checkpoint {
        cfg.estimate.checkpoint = Some(c.clone());
    }
    if let Some(o) = &flags.out {
        cfg.paths.output = o.clone();
    }
    if let Some(i) = &flags.input {
        cfg.paths.input = i.clone();
    }
    if !flags.estimate.is_empty() {
        cfg.evaluate.estimates = flags.estimate.clone();
    }
    if let Some(t) = &flags.truth {
        cfg.evaluate.truth = Some(t.clone());
    }
    if let Some(r) = &flags.roi {
        cfg.evaluate.roi = Some(r.clone());
    }
    if let Some(p) = flags.preset {
        cfg.benchmark.preset = p;
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = match &cli.flags.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    apply(&cli.flags, cli.command, &mut cfg);
    let mut manifest = match cli.command {
        Command::Simulate => commands::simulate(&cfg)?,
        Command::Train => commands::train(&cfg)?,
        Command::Estimate => commands::estimate(&cfg)?,
        Command::Evaluate => commands::evaluate(&cfg)?,
        Command::Benchmark => commands::benchmark(&cfg)?,
    };
    manifest.elapsed_seconds = started.elapsed().as_secs_f64();
    manifest.save(&cfg.paths.output)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
