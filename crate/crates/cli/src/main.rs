//! `calibfair` command-line driver.
//!
//! Exit codes: 0 on success, 1 when a run fails (I/O, divergence), 2 for
//! usage and validation errors.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use calibfair::data::PRESET_SAMPLES;
use calibfair::metrics::DEFAULT_BINS;
use calibfair::pipeline::{
    GapMode, GroupLoss, Method, DEFAULT_BATCH_SIZE, DEFAULT_CLUSTERS, DEFAULT_GAMMA, DEFAULT_GROUPDRO_ETA,
    DEFAULT_JTT_LAMBDA, DEFAULT_STAGE1_EPOCHS, DEFAULT_STAGE2_EPOCHS,
};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] calibfair::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_usage() => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "calibfair", version, about = "Cluster-based calibration-bias mitigation: data, training, evaluation, sweeps")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort CSV plus a `<stem>.spec.json` next to it.
    GenData(GenDataArgs),
    /// Train one method, evaluate it on the test split and write a run directory.
    Train(TrainArgs),
    /// Re-evaluate a saved checkpoint on a dataset.
    Eval(EvalArgs),
    /// Train and evaluate every method x seed pair and write trade-off tables.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Built-in cohort definition.
    #[arg(long, value_parser = ["biased-binary", "biased-multiclass"], required_unless_present = "spec", conflicts_with = "spec")]
    pub preset: Option<String>,
    /// Sample count for a preset.
    #[arg(long, default_value_t = PRESET_SAMPLES, conflicts_with = "spec")]
    pub samples: usize,
    /// JSON cohort definition (same layout as the emitted `.spec.json`).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Attributes to evaluate, comma separated (default: all in the data).
    #[arg(long, value_delimiter = ',')]
    pub attrs: Vec<String>,
    /// Q-ECE / ECE bin count.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Seed of the stratified 60/20/20 train/validation/test split.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Number of gap clusters.
    #[arg(long, default_value_t = DEFAULT_CLUSTERS)]
    pub clusters: usize,
    #[arg(long, default_value = "out-of-fold")]
    pub gap_mode: GapMode,
    #[arg(long, default_value_t = DEFAULT_JTT_LAMBDA)]
    pub jtt_lambda: f64,
    #[arg(long, default_value_t = DEFAULT_GROUPDRO_ETA)]
    pub groupdro_eta: f64,
    /// Per-group loss inside GroupDRO: cross-entropy or focal.
    #[arg(long, default_value = "cross-entropy")]
    pub groupdro_loss: GroupLoss,
    /// Attribute whose groups replace the clusters (oracle methods) and drive
    /// validation model selection.
    #[arg(long)]
    pub oracle_attr: Option<String>,
    #[arg(long, default_value_t = DEFAULT_STAGE1_EPOCHS)]
    pub stage1_epochs: usize,
    #[arg(long, default_value_t = DEFAULT_STAGE2_EPOCHS)]
    pub stage2_epochs: usize,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "32,32")]
    pub hidden: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub method: Method,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Parent directory of the `<method>_seed<seed>` run directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Evaluate every row, or only the test part of the split.
    #[arg(long, value_parser = ["all", "test"], default_value = "all")]
    pub subset: String,
    /// Directory for reports (nothing is written when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Methods, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub methods: Vec<Method>,
    /// Seeds: inclusive range `a..b` (or `a..=b`) or a comma list.
    #[arg(long, default_value = "0..4")]
    pub seeds: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::GenData(args) => commands::gen_data(&args),
        Command::Train(args) => commands::train(&args),
        Command::Eval(args) => commands::eval(&args),
        Command::Sweep(args) => commands::sweep(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
