//! `eegdec` — synthesize cohorts, preprocess recordings, train and
//! evaluate the decoder, and export study results, all driven by one TOML
//! configuration document.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod manifest;
mod results;

/// Errors grouped by where the problem lies, so the exit message tells
/// the operator what to fix: the config file, the inputs, the math, or
/// the output location.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Input(String),
    Compute(String),
    Output(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Compute(m) => write!(f, "compute error: {m}"),
            CliError::Output(m) => write!(f, "output error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "eegdec",
    version,
    about = "EEG decoding study pipeline: synthetic cohorts, preprocessing, training protocols, statistics"
)]
struct Cli {
    /// TOML run configuration (required by every subcommand).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override the global seed from the config file.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Override the output directory from the config file.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (epoch sets, or continuous recordings
    /// with `continuous = true`).
    Synth,
    /// Filter, downsample, re-reference, epoch, and clean recordings.
    Preprocess,
    /// Within-subject cross-validated training; per-fold accuracies.
    TrainIntra,
    /// Hold out each subject, train on the rest; per-subject accuracies.
    TrainInter,
    /// Fine-tune held-out-subject models on increasing data fractions.
    FinetuneSweep,
    /// Summarize available results with paired significance tests.
    Stats,
    /// Re-emit results as plot-ready tab-separated series.
    Export,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("missing --config <FILE>".into()))?;
    let resolved = config::load_config(config_path, cli.seed, cli.out.as_deref())?;
    match cli.command {
        Command::Synth => commands::cmd_synth(&resolved),
        Command::Preprocess => commands::cmd_preprocess(&resolved),
        Command::TrainIntra => commands::cmd_train_intra(&resolved),
        Command::TrainInter => commands::cmd_train_inter(&resolved),
        Command::FinetuneSweep => commands::cmd_finetune_sweep(&resolved),
        Command::Stats => commands::cmd_stats(&resolved),
        Command::Export => commands::cmd_export(&resolved),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
