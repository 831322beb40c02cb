//! Command-line front end: `gen`, `train`, `eval`, `roc` and `ka-verify`.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 invalid configuration or
//! arguments, 3 I/O or file format error, 4 training divergence.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ssce_core::{Error, Result};

pub use config::{Preset, RunConfig};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "ssce", version, about = "Self-supervised covariance estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset file from the `[data]` recipe.
    Gen(GenArgs),
    /// Train the `[model]` on `[train_data]` or a dataset file.
    Train(TrainArgs),
    /// Score checkpoints and baselines on a dataset.
    Eval(EvalArgs),
    /// ROC curve and partial area from two score files.
    Roc(RocArgs),
    /// Fit the knowledge-aided model and compare it with the closed form.
    KaVerify(KaVerifyArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides every seed used by the command.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Full-length training (same as `--preset paper`).
    #[arg(long, conflicts_with = "preset")]
    pub paper: bool,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

impl CommonArgs {
    pub fn preset(&self) -> Option<Preset> {
        if self.paper {
            Some(Preset::Paper)
        } else {
            self.preset
        }
    }

    pub fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref())
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Output directory for checkpoints, the log and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Training dataset; replaces `[train_data]`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Dataset for the held-out NLL column of the log.
    #[arg(long)]
    pub heldout: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Output directory for metrics.json, timing.json and ROC files.
    #[arg(long)]
    pub out: PathBuf,
    /// Test dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Trained model to score; may be repeated.
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    /// Training dataset for the knowledge-aided global SCM.
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    /// Also write roc.svg.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct RocArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scores under H0, one per line.
    #[arg(long)]
    pub h0: PathBuf,
    /// Scores under H1, one per line.
    #[arg(long)]
    pub h1: PathBuf,
    #[arg(long)]
    pub max_fpr: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct KaVerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Output directory for the report and training log.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Roc(a) => commands::roc(&a),
        Command::KaVerify(a) => commands::ka_verify(&a).map(|_| ()),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::InvalidConfig(_) | Error::ShapeMismatch(_) => EXIT_VALIDATION,
        Error::Io(_) | Error::Parse { .. } => EXIT_IO,
        Error::DivergenceDetected { .. } => EXIT_DIVERGENCE,
        _ => EXIT_FAILURE,
    }
}
