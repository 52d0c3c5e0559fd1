//! Command-line front end for the `camodet` library.

mod commands;
mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use camodet::agp::{
    AgpError, MomentumReading, RestrictionMode, DEFAULT_LAMBDA, DEFAULT_LR, DEFAULT_WEIGHT_DECAY,
};
use camodet::dataset::{DatasetError, Split};
use camodet::eval::EvalError;
use camodet::sfr::{SfrError, DEFAULT_CANVAS_SIZE, DEFAULT_CROP_SIZE, DEFAULT_POOL_SIZE};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

pub use config::expand_config;

/// Metric columns reported by `evaluate`.
pub const METRICS: [&str; 5] = ["mAP", "AP50", "AP75", "APm", "APl"];

const DEFAULTS_NOTE: &str = "\
Defaults: restriction factor lambda 0.08, crop 200x200, learning rate 0.0003.
Metrics: mAP, AP50, AP75, APm, APl (COCO IoU .50:.05:.95) plus a class-agnostic localization score.
Any flag may also come from a JSON object passed with --config FILE; flags typed on the command line take precedence.";

#[derive(Debug, Parser)]
#[command(name = "camodet", version, about = "Box-level camouflaged object detection tooling", after_help = DEFAULTS_NOTE)]
pub struct Cli {
    /// JSON object of flag values for the subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert binary object masks into box annotations.
    ConvertMasks(ConvertMasksArgs),
    /// Print per-split image, box and category counts.
    Summarize(SummarizeArgs),
    /// Write mosaic pseudo-images built from every box of the train split.
    SfrOffline(SfrOfflineArgs),
    /// Train the staged toy detector with restricted gradients.
    TrainToy(TrainToyArgs),
    /// Score detections: mAP, AP50, AP75, APm, APl and localization.
    Evaluate(EvaluateArgs),
    /// Compare reverse-mode gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Print every subcommand's flags and defaults as JSON.
    ConfigSchema,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConvertMasksArgs {
    /// Mask directory: one subdirectory per category, or flat with --category.
    #[arg(long, value_name = "DIR")]
    pub masks: PathBuf,
    /// Output annotation file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Treat every mask in the directory as this category.
    #[arg(long)]
    pub category: Option<String>,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    /// Pixels at or above this gray level are foreground.
    #[arg(long, default_value_t = camodet::dataset::DEFAULT_THRESHOLD)]
    pub threshold: u8,
    /// Merge same-category boxes separated by at most this many pixels.
    #[arg(long, value_name = "PIXELS")]
    pub merge_gap: Option<f64>,
    /// Image file extension recorded for each mask (default: keep the mask's).
    #[arg(long, value_name = "EXT")]
    pub image_ext: Option<String>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long, value_name = "FILE")]
    pub annotations: PathBuf,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SfrArgs {
    /// Grid sizes; each pool is laid out once per grid.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    pub grids: Vec<u32>,
    /// Crops per pool.
    #[arg(long, default_value_t = DEFAULT_POOL_SIZE)]
    pub pool_size: usize,
    /// Side of the square patch every box is resized to.
    #[arg(long, default_value_t = DEFAULT_CROP_SIZE)]
    pub crop: u32,
    /// Side of the square canvas.
    #[arg(long, default_value_t = DEFAULT_CANVAS_SIZE)]
    pub canvas: u32,
}

#[derive(Debug, Args)]
pub struct SfrOfflineArgs {
    #[arg(long, value_name = "FILE")]
    pub annotations: PathBuf,
    /// Root that annotation image paths are relative to.
    #[arg(long, value_name = "DIR")]
    pub images: PathBuf,
    /// Output directory (images/, annotations.json, manifest.json).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub sfr: SfrArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adamw,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Boundary,
    Update,
}

impl From<ModeArg> for RestrictionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Boundary => RestrictionMode::Boundary,
            ModeArg::Update => RestrictionMode::Update,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MomentumArg {
    WeightDecay,
    Beta1,
}

impl From<MomentumArg> for MomentumReading {
    fn from(m: MomentumArg) -> Self {
        match m {
            MomentumArg::WeightDecay => MomentumReading::WeightDecay,
            MomentumArg::Beta1 => MomentumReading::Beta1,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    /// Train on this dataset's train split instead of the synthetic task.
    #[arg(long, value_name = "FILE", requires = "images")]
    pub annotations: Option<PathBuf>,
    #[arg(long, value_name = "DIR", requires = "annotations")]
    pub images: Option<PathBuf>,
    /// Images in the synthetic task.
    #[arg(long, default_value_t = 64)]
    pub synthetic_samples: usize,
    /// Side of each synthetic image.
    #[arg(long, default_value_t = 48)]
    pub synthetic_size: u32,
    /// Output directory for train_log.jsonl and checkpoint.json.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// Images per mini-batch.
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// boundary: scale the signal entering neck and backbone; update: scale every stage's gradient.
    #[arg(long, value_enum, default_value = "boundary")]
    pub mode: ModeArg,
    /// Restriction factor used for every boundary (and for update mode).
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Head-to-neck factor (defaults to --lambda).
    #[arg(long)]
    pub lambda_hn: Option<f64>,
    /// Neck-to-backbone factor (defaults to --lambda).
    #[arg(long)]
    pub lambda_nb: Option<f64>,
    #[arg(long, value_enum, default_value = "adamw")]
    pub optimizer: OptimizerArg,
    /// Learning rate.
    #[arg(long, default_value_t = DEFAULT_LR)]
    pub lr: f64,
    /// AdamW "momentum" value, read according to --momentum-as.
    #[arg(long, default_value_t = DEFAULT_WEIGHT_DECAY)]
    pub momentum: f64,
    /// weight-decay: decoupled decay with beta1 0.9; beta1: first-moment decay, no weight decay.
    #[arg(long, value_enum, default_value = "weight-decay")]
    pub momentum_as: MomentumArg,
    #[arg(long, default_value_t = 2.0)]
    pub focal_gamma: f64,
    #[arg(long, default_value_t = 0.25)]
    pub focal_alpha: f64,
    /// Contrastive softmax temperature.
    #[arg(long, default_value_t = 0.07)]
    pub temperature: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_bbox: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_contrastive: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_cls: f64,
    #[arg(long, default_value_t = 64)]
    pub hidden1: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden2: usize,
    #[arg(long, default_value_t = 32)]
    pub embed: usize,
    /// Add mosaic pseudo-images to every mini-batch.
    #[arg(long)]
    pub sfr: bool,
    #[command(flatten)]
    pub sfr_args: SfrArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth annotation file.
    #[arg(long, value_name = "FILE")]
    pub annotations: PathBuf,
    /// Detections: JSON array of {image_id, bbox [x, y, w, h], category_id, score}.
    #[arg(long, value_name = "FILE")]
    pub detections: PathBuf,
    /// Write the report (mAP, AP50, AP75, APs, APm, APl, localization, per category) as JSON.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Only score images of this split.
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Detections kept per image and category.
    #[arg(long, default_value_t = 100)]
    pub max_detections: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random models to check.
    #[arg(long, default_value_t = 1)]
    pub models: usize,
    /// Regions per batch.
    #[arg(long, default_value_t = 4)]
    pub regions: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = camodet::agp::FD_STEP)]
    pub step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

/// A failure reported as one JSON line on stderr.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::json!({ "error": { "code": self.code, "message": self.message } }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

macro_rules! coded_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::new(e.code(), e.to_string())
            }
        }
    )*};
}

coded_error!(DatasetError, SfrError, AgpError, EvalError);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new("json", e.to_string())
    }
}

/// Every subcommand's flags, help text and default values.
pub fn config_schema() -> serde_json::Value {
    let root = Cli::command();
    let mut subcommands = serde_json::Map::new();
    for sub in root.get_subcommands() {
        let mut flags = serde_json::Map::new();
        for arg in sub.get_arguments() {
            let Some(long) = arg.get_long() else { continue };
            if long == "config" {
                continue;
            }
            let defaults: Vec<String> = arg
                .get_default_values()
                .iter()
                .map(|v| v.to_string_lossy().into_owned())
                .collect();
            flags.insert(
                long.to_string(),
                serde_json::json!({
                    "help": arg.get_help().map(|h| h.to_string()),
                    "default": defaults.first(),
                    "required": arg.is_required_set(),
                }),
            );
        }
        subcommands.insert(sub.get_name().to_string(), serde_json::Value::Object(flags));
    }
    serde_json::json!({
        "defaults": {
            "lambda": DEFAULT_LAMBDA,
            "crop": [DEFAULT_CROP_SIZE, DEFAULT_CROP_SIZE],
            "lr": DEFAULT_LR,
        },
        "metrics": METRICS,
        "subcommands": subcommands,
    })
}

fn subcommand_names() -> Vec<String> {
    Cli::command()
        .get_subcommands()
        .map(|s| s.get_name().to_string())
        .collect()
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run(args: Vec<OsString>) -> i32 {
    let names = subcommand_names();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let args = match expand_config(args, &names) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            1
        }
    }
}
