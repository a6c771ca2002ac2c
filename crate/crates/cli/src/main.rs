//! `icetrack`: simulate, verify, train, evaluate and benchmark tip trackers.
//!
//! Exit codes: 0 success, 1 I/O or runtime failure, 2 usage or
//! configuration error, 3 data-integrity error.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::{Failure, EXIT_USAGE};

/// Tip tracking in 2D intracardiac echo sequences.
#[derive(Debug, Parser)]
#[command(name = "icetrack", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file. Built-in defaults are used when absent.
    #[arg(long, global = true, env = "ICETRACK_CONFIG")]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed override: the dataset seed for `simulate`, the training seed for `train`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BootstrapArg {
    /// Ground-truth prior for the first window.
    Gt,
    /// All-zero prior for the first window.
    Zeros,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Simulate {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a dataset's manifest, splits and files.
    Verify {
        /// Dataset root.
        #[arg(long)]
        data: PathBuf,
    },
    /// Train a model with teacher-forced priors.
    Train {
        /// Dataset root.
        #[arg(long)]
        data: PathBuf,
        /// Directory for checkpoints and the training log.
        #[arg(long)]
        out: PathBuf,
    },
    /// Autoregressive evaluation with report and overlays.
    Eval {
        /// Model checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset root.
        #[arg(long)]
        data: PathBuf,
        /// Split to evaluate (default from the configuration).
        #[arg(long)]
        split: Option<String>,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
        /// Prior for the first window (default from the configuration).
        #[arg(long, value_enum)]
        bootstrap: Option<BootstrapArg>,
        /// Ground-truth priors at every step.
        #[arg(long)]
        teacher_forced: bool,
        /// Also measure throughput and record it in the report.
        #[arg(long)]
        bench: bool,
    },
    /// Track the tip through one sequence directory.
    Infer {
        /// Model checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Sequence directory with frames and annotations.
        #[arg(long)]
        sequence: PathBuf,
        /// Write JSON lines here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Prior for the first window (default from the configuration).
        #[arg(long, value_enum)]
        bootstrap: Option<BootstrapArg>,
    },
    /// Measure single-window inference throughput.
    Bench {
        /// Model checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Untimed iterations before each run.
        #[arg(long)]
        warmup: Option<usize>,
        /// Timed iterations per run (at least 30).
        #[arg(long)]
        iters: Option<usize>,
        /// Number of timed runs.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Render overlays from a saved evaluation report.
    Plot {
        /// The report file written by `eval`.
        #[arg(long)]
        report: PathBuf,
        /// Dataset root (default: the one recorded in the report).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory for PNG overlays.
        #[arg(long)]
        out: PathBuf,
        /// Maximum number of overlays.
        #[arg(long)]
        max: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = icetrack::config::Config::load(cli.global.config.as_deref(), &cli.global.overrides)?;
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            return Err(Failure::new(EXIT_USAGE, "--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    }
    commands::dispatch(cli.command, config, cli.global.seed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
