//! Command-line front end for the recognition toolkit: dataset synthesis,
//! feature extraction, training, evaluation, writer adaptation, timing, and
//! file inspection.

use clap::{Args, Parser, Subcommand};
use hccr_cli::commands;
use hccr_cli::config::{ExperimentConfig, Precision};
use hccr_cli::errors::{config_err, Result};
use hccr_cli::metrics::MetricsReport;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "hccr", version, about = "handwritten character recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed (training and synthesis).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Compute precision in bits.
    #[arg(long, default_value = "64")]
    precision: Precision,
}

#[derive(Subcommand)]
enum Command {
    /// Extract feature maps into the cache directory.
    Extract(RunArgs),
    /// Train a network on the cached maps.
    Train(RunArgs),
    /// Evaluate checkpoints on the test split.
    Eval(RunArgs),
    /// Adapt the classifier to each writer without labels.
    Adapt(RunArgs),
    /// Time per-character extraction and inference.
    Bench(RunArgs),
    /// Generate the synthetic dataset.
    GenSynth(RunArgs),
    /// Summarize a data file (DMAP, HCNN, STMA, GNT, POT, manifest).
    Inspect {
        /// File to inspect.
        path: PathBuf,
    },
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.train.seed = seed;
        config.synth.grammar_seed = seed;
    }
    Ok(config)
}

fn setup_jobs(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(config_err("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_err(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn dispatch<F32Run, F64Run>(args: &RunArgs, f32_run: F32Run, f64_run: F64Run) -> Result<MetricsReport>
where
    F32Run: FnOnce(&ExperimentConfig) -> Result<MetricsReport>,
    F64Run: FnOnce(&ExperimentConfig) -> Result<MetricsReport>,
{
    setup_jobs(args.jobs)?;
    let config = load_config(args)?;
    match args.precision {
        Precision::F32 => f32_run(&config),
        Precision::F64 => f64_run(&config),
    }
}

fn run(cli: Cli) -> Result<MetricsReport> {
    match &cli.command {
        Command::Extract(args) => {
            setup_jobs(args.jobs)?;
            let config = load_config(args)?;
            commands::extract::run(&config)
        }
        Command::Train(args) => dispatch(
            args,
            commands::train::run::<f32>,
            commands::train::run::<f64>,
        ),
        Command::Eval(args) => {
            dispatch(args, commands::eval::run::<f32>, commands::eval::run::<f64>)
        }
        Command::Adapt(args) => dispatch(
            args,
            commands::adapt::run::<f32>,
            commands::adapt::run::<f64>,
        ),
        Command::Bench(args) => dispatch(
            args,
            commands::bench::run::<f32>,
            commands::bench::run::<f64>,
        ),
        Command::GenSynth(args) => {
            setup_jobs(args.jobs)?;
            let config = load_config(args)?;
            commands::gen_synth::run(&config)
        }
        Command::Inspect { path } => commands::inspect::run(path),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            // Commands emit records as they go; anything queued but not yet
            // printed would have been emitted already, so nothing to do.
            let _ = report;
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
