//! `sbe`: generate data, fit and apply sampling Bayesian encoders, train
//! and evaluate pipelines, run hyperparameter sweeps and diagnostics.
//!
//! Exit codes: 0 on success, 1 for invalid flags or configuration, 2 when a
//! command fails while running.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("error: {0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<sbe_core::Error> for CliError {
    fn from(e: sbe_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "sbe", version, about = "Sampling Bayesian encoding of categorical features")]
pub struct Cli {
    /// Master seed for data generation, encoding, folds and learners.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for outputs written without an explicit `--out`.
    #[arg(long, global = true, env = "SBE_OUTPUT_DIR")]
    pub output_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as CSV plus a `.schema.json` sidecar.
    GenData(GenDataArgs),
    /// Fit an encoder and write the model JSON.
    Fit(FitArgs),
    /// Encode a CSV into K stacked copies with a fitted model.
    Transform(TransformArgs),
    /// Fit encoder + learner on all rows and write the pipeline JSON.
    Train(TrainArgs),
    /// Cross-validate a pipeline, or score a trained one with `--model`.
    Evaluate(EvaluateArgs),
    /// Cross-validate one value of an encoder hyperparameter per row.
    Sweep(SweepArgs),
    /// Loss decomposition, Laplace approximation and noise comparison.
    Diagnose(DiagnoseArgs),
    /// Grouped feature importances of two encoders side by side.
    Importance(ImportanceArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct DataArgs {
    /// Input CSV (otherwise the config's data source).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Schema JSON for `--data` (default: `<stem>.schema.json`).
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct EncoderArgs {
    /// Encoder kind: `sampling` or `target_mean`.
    #[arg(long)]
    pub encoder: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub k_draws: Option<usize>,
    /// mean_only | mean_and_precision | polynomial2 | weight_of_evidence
    #[arg(long)]
    pub mapping: Option<String>,
    /// sample_from_prior | prior_mean
    #[arg(long)]
    pub unseen_policy: Option<String>,
    /// Target-mean baseline: leave-one-out at training time.
    #[arg(long)]
    pub leave_one_out: bool,
    /// Target-mean baseline: multiplicative noise level at training time.
    #[arg(long, allow_negative_numbers = true)]
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct LearnerArgs {
    /// Learner kind: `random_forest`, `ridge` or `logistic`.
    #[arg(long)]
    pub learner: Option<String>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub features_per_split: Option<usize>,
    /// Ridge or logistic L2 penalty.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// classification_blobs | hastie_quadratic
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub informative: Option<usize>,
    #[arg(long)]
    pub categorical: Option<usize>,
    #[arg(long)]
    pub bins_min: Option<usize>,
    #[arg(long)]
    pub bins_max: Option<usize>,
    /// Output CSV (default: `<output dir>/data.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    /// Output model JSON (default: `<output dir>/model.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// Encoder model JSON written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Copies to draw (default: the model's `k_draws`).
    #[arg(long)]
    pub k_draws: Option<usize>,
    /// Draw stream: 0 for training data, 1 for data to predict on.
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    /// Output CSV (default: `<output dir>/encoded.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Output pipeline JSON (default: `<output dir>/pipeline.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Score this trained pipeline on the data instead of cross-validating.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// accuracy | r2
    #[arg(long)]
    pub metric: Option<String>,
    /// Output CSV (default: `<output dir>/evaluate.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// k_draws | gamma | mapping
    #[arg(long)]
    pub param: String,
    /// Comma-separated values (default: the config's sweep list).
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub metric: Option<String>,
    /// Output CSV (default: `<output dir>/sweep_<param>.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Draws per row for the loss decomposition and per category for the
    /// noise comparison.
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    /// Monte Carlo draws per category for the Laplace comparison.
    #[arg(long, default_value_t = 100_000)]
    pub mc_draws: usize,
    /// Noise level of the baseline in the noise comparison.
    #[arg(long, default_value_t = 0.1)]
    pub baseline_sigma: f64,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Output CSV (default: `<output dir>/importance.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
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
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
