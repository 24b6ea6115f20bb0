//! Command-line runner: synthetic data, skeleton ingestion, pre-training,
//! fine-tuning, cross-validated evaluation, few-shot sweeps, forecast export
//! and gradient audits, all driven by one configuration file.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "gaitcast",
    version,
    about = "Pre-train a skeleton forecasting transformer and fine-tune it for gait severity",
    after_help = "Every run writes its fully resolved configuration to <OUT>/config.txt; \
passing that file back with --config reproduces the run."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Configuration file of [section] key = value lines [default: none, built-in defaults]
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Seed for every random choice; overrides run.seed [default: run.seed, which defaults to 0]
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,

    /// Directory for every artifact of the run
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    /// Fine-tuning strategy; overrides train.strategy [default: train.strategy, which defaults to both-then-class]
    #[arg(long, global = true, value_parser = ["class", "both", "both-then-class", "scratch"])]
    pub strategy: Option<String>,

    /// Single few-shot training fraction; overrides experiment.fractions [default: experiment.fractions, which defaults to 0.25,0.5,0.75,1]
    #[arg(long, global = true, value_parser = ["0.25", "0.5", "0.75", "1.0"])]
    pub fraction: Option<String>,

    /// Few-shot runs per fraction; overrides experiment.runs [default: experiment.runs, which defaults to 3]
    #[arg(long, global = true, value_name = "INT")]
    pub runs: Option<usize>,

    /// Epochs of the both-branch and class-branch stages as A,B; overrides train.stage_epochs [default: train.stage_epochs, which defaults to half and half]
    #[arg(long, global = true, value_name = "A,B")]
    pub stage_epochs: Option<String>,

    /// Override any configuration key, e.g. --set model.layers=2; repeatable [default: none]
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Generate a synthetic labeled clip set with a manifest
    Synth,
    /// Parse, normalize and window NTU-style skeleton files into clips
    Ingest,
    /// Train classification and forecasting jointly from random initialization
    Pretrain,
    /// Fine-tune a pre-trained checkpoint, or train from scratch, on a labeled set
    Finetune,
    /// Leave-one-subject-out cross-validation with pooled macro metrics
    Eval,
    /// Cross-validation on class-balanced subsets of each training fold
    Fewshot,
    /// Export input, ground-truth and predicted trajectories for plotting
    Forecast,
    /// Compare analytic and finite-difference gradients of the pre-training loss
    CheckGrad,
    /// Print the resolved configuration in file syntax
    ShowConfig,
}

/// A failure with a machine-parsable category.
#[derive(Debug)]
pub enum CliError {
    Config(Vec<String>),
    Core(gaitcast::Error),
    Check(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) => e.category(),
            CliError::Check(_) => "check",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(problems) => write!(f, "{}", problems.join("; ")),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Check(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<gaitcast::Error> for CliError {
    fn from(e: gaitcast::Error) -> Self {
        CliError::Core(e)
    }
}

fn fail(category: &str, msg: &str) -> ExitCode {
    // One line, whatever the message contained.
    let msg = msg.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error[{category}]: {msg}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid usage");
            fail("usage", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.category(), &e.to_string()),
    }
}
