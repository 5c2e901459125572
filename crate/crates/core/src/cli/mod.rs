//! Command-line front end: `synth`, `train`, `eval`, `predict`, `ablate` and
//! `gradcheck`.

mod commands;
mod manifest;
mod settings;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::layers::{SguPlacement, Variant};
use crate::training::OptimizerKind;

pub use commands::{class_names, PALETTE};
pub use manifest::{sha256_file, RunManifest, MANIFEST_NAME};
pub use settings::{parse_config, render_config, KeyValues, RunSettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_ARTIFACT: i32 = 4;
pub const EXIT_VERIFICATION: i32 = 5;

pub const CHECKPOINT_NAME: &str = "model.sguw";
pub const REPORT_NAME: &str = "report.txt";
pub const LOSS_NAME: &str = "loss.csv";
pub const CONFIG_NAME: &str = "config.txt";
pub const PREDICTION_NAME: &str = "prediction";
pub const MAP_NAME: &str = "prediction.ppm";
pub const ABLATION_NAME: &str = "ablation.txt";

#[derive(Debug, Parser)]
#[command(name = "sgumlp", version, about = "SGU-MLP land-cover classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic multimodal scene
    Synth(SynthArgs),
    /// Train one variant and report on the test split
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split of a scene
    Eval(EvalArgs),
    /// Classify every pixel of a scene into a label raster and a PPM map
    Predict(PredictArgs),
    /// Train and compare all four variants over several seeds
    Ablate(AblateArgs),
    /// Check analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub classes: usize,
    #[arg(long, default_value_t = 96)]
    pub height: usize,
    #[arg(long, default_value_t = 96)]
    pub width: usize,
    /// Band count per modality
    #[arg(long, value_delimiter = ',', default_value = "8,4,1")]
    pub bands: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Training options shared by `train` and `ablate`. Unset flags fall back
/// to the config file, then to the defaults.
#[derive(Debug, Args, Default)]
pub struct TrainFlags {
    /// Flat key=value config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub sgu_placement: Option<SguPlacement>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Label raster split by `train_fraction`
    #[arg(long)]
    pub labels: Option<String>,
    /// Separate training label raster; requires --test-labels
    #[arg(long)]
    pub train_labels: Option<String>,
    #[arg(long)]
    pub test_labels: Option<String>,
    #[arg(long)]
    pub patch_window: Option<usize>,
    #[arg(long)]
    pub token_segment: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub ffn_dim: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub dwc_kernels: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Scene directory with modality_<i> and label rasters
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitChoice {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Config written by train; defaults to config.txt next to the checkpoint
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
    /// Also write the report to this file
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Check one variant only
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Divergence exits 3, artifact and shape problems exit 4, anything else is
/// a usage error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Checkpoint(_)
        | Error::Dimension(_)
        | Error::CoRegistration(_)
        | Error::CorruptFile { .. }
        | Error::Format { .. } => EXIT_ARTIFACT,
        _ => EXIT_USAGE,
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure::new(exit_code(&err), err.to_string())
    }
}

pub fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}
