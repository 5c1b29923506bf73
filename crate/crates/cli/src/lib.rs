//! Command-line front end: dataset synthesis, training, evaluation,
//! gradient verification, benchmarking and feature-map export.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mmn_core::MmnError;
use thiserror::Error;

pub use config::{Preset, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or missing arguments; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// A check ran and failed; exit code 1.
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Core(#[from] MmnError),
}

impl From<mmn_autograd::TensorError> for CliError {
    fn from(e: mmn_autograd::TensorError) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

const OVERRIDE_HELP: &str = "Any model, optimization or augmentation field can be overridden as \
--field-name VALUE (for example --channels 32 --base-lr 3e-4 --msm-enabled false). \
Precedence: defaults < --config file < --preset < field flags.";

#[derive(Debug, Parser)]
#[command(name = "mmn", version, about = "Motion-modulated skeleton action recognition", after_help = OVERRIDE_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic skeleton dataset split into train/val/test files.
    SynthGen(SynthGenArgs),
    /// Train a model and write checkpoints and a per-epoch log.
    Train(TrainArgs),
    /// Score a checkpoint or a predictions file and write metric reports.
    Eval(EvalArgs),
    /// Finite-difference check of every op and of a full model.
    Gradcheck(GradcheckArgs),
    /// Parameter count, multiply-accumulates and forward latency.
    Bench(BenchArgs),
    /// Export per-joint feature maps of one block.
    Inspect(InspectArgs),
}

/// Flags shared by every command that builds a model.
#[derive(Debug, Args, Default, Clone)]
pub struct ConfigArgs {
    /// Plain-text key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ablation preset: A1-A4, B1-B5 or C1-C4.
    #[arg(long)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Args)]
pub struct SynthGenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 10)]
    pub joints: usize,
    #[arg(long, default_value_t = 80)]
    pub raw_len: usize,
    #[arg(long, default_value_t = 0.3)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// 0 keeps classes well apart; values toward 1 make them alike.
    #[arg(long, default_value_t = 0.0)]
    pub similarity: f64,
    /// Body groups (defaults to half the class count, rounded up).
    #[arg(long)]
    pub body_groups: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Train/val/test proportions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [70.0, 15.0, 15.0])]
    pub split: Vec<f64>,
    /// Overwrite existing files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// A directory holding train.jsonl (and optionally val.jsonl), or a training file.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Validation file, when --dataset names a file.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Seed for initialization, shuffling, augmentation and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model checkpoint to score.
    #[arg(long, conflicts_with = "predictions")]
    pub checkpoint: Option<PathBuf>,
    /// Existing predictions file to score instead of a checkpoint.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// A dataset file, or a directory combined with --split.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Second predictions file fused with the first by softmax averaging.
    #[arg(long)]
    pub ensemble_with: Option<PathBuf>,
    /// Weight of the primary scores in the ensemble.
    #[arg(long, default_value_t = 0.5)]
    pub ensemble_weight: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Timed forward passes.
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Zero-based stage index.
    #[arg(long, default_value_t = 0)]
    pub stage: usize,
    /// Zero-based block index within the stage.
    #[arg(long, default_value_t = 0)]
    pub block: usize,
    /// Number of samples to export.
    #[arg(long, default_value_t = 8)]
    pub limit: usize,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from_args(args: Vec<String>) -> Result<()> {
    let takes_overrides = args.iter().skip(1).find(|a| !a.starts_with('-')).is_some_and(|c| {
        matches!(c.as_str(), "train" | "gradcheck" | "bench")
    });
    let (args, overrides) = if takes_overrides { config::split_overrides(args)? } else { (args, Vec::new()) };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.render().to_string();
            let text = text.strip_prefix("error: ").unwrap_or(&text).trim_end().to_string();
            return Err(CliError::Usage(text));
        }
    };
    match cli.command {
        Command::SynthGen(a) => commands::synth_gen(&a),
        Command::Train(a) => commands::train(&a, &overrides),
        Command::Eval(a) => commands::eval(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a, &overrides),
        Command::Bench(a) => commands::bench(&a, &overrides),
        Command::Inspect(a) => commands::inspect(&a),
    }
}
