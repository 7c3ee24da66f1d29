//! The `lesioncam` command line: `synth`, `train`, `cam`, `propose`, `eval`.
//!
//! Every option can also come from a TOML file passed with `--config`
//! (see [`config`]); flags win over the file. Exit codes: 0 success,
//! 2 usage error, 3 input or IO failure, 4 internal error.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::error::Error;
use config::ConfigFile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

/// Environment variable consulted for the output directory.
pub const OUT_ENV: &str = "LESIONCAM_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "lesioncam",
    version,
    about = "Lesion localization with class activation maps",
    propagate_version = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Random seed [default: 0]
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads, 0 for one per core [default: 0]
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Output directory [env: LESIONCAM_OUT] [default: out]
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// TOML configuration file
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log more (-v info, -vv debug)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic fundus dataset with lesion masks
    Synth(SynthArgs),
    /// Train a CAM network on a manifest
    Train(TrainArgs),
    /// Write class activation heatmaps and overlays
    Cam(CamArgs),
    /// Turn heatmaps into scored region proposals
    Propose(ProposeArgs),
    /// Evaluate proposals and classifier scores against ground truth
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of images [default: 200]
    #[arg(long, value_name = "N")]
    pub images: Option<usize>,
    /// Image side in pixels [default: 64]
    #[arg(long, value_name = "PX")]
    pub size: Option<usize>,
    /// 1 (gray) or 3 (RGB) [default: 3]
    #[arg(long)]
    pub channels: Option<usize>,
    /// Probability an image is diseased [default: 0.5]
    #[arg(long, value_name = "P")]
    pub diseased_fraction: Option<f64>,
    /// Most lesions per diseased image [default: 3]
    #[arg(long, value_name = "N")]
    pub max_lesions: Option<usize>,
    /// Comma-separated lesion types (H, HE, SE, RSD or full names) [default: all]
    #[arg(long, value_delimiter = ',', value_name = "TYPES")]
    pub lesion_types: Option<Vec<String>>,
    /// Simulate four annotators with noisy masks [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub expert_noise: Option<bool>,
    /// Image id prefix [default: img]
    #[arg(long)]
    pub id_prefix: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest (JSON lines)
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Architecture text file [default: built-in toy network]
    #[arg(long, value_name = "FILE")]
    pub arch: Option<PathBuf>,
    /// Continue training from a saved model
    #[arg(long, value_name = "FILE")]
    pub resume: Option<PathBuf>,
    /// Preprocessed image side [default: the architecture's input size, 64 for the toy network]
    #[arg(long, value_name = "PX")]
    pub size: Option<usize>,
    /// Training epochs [default: 30]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Base learning rate [default: 0.01]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning rate decay per epoch, lr = base * (1 - decay)^epoch [default: 0.01]
    #[arg(long)]
    pub lr_decay: Option<f64>,
    /// SGD momentum [default: 0.8]
    #[arg(long)]
    pub momentum: Option<f64>,
    /// L2 weight decay on kernels and classifier weights [default: 0.0005]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Random brightness, contrast, rotation and flips [default: true]
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub augment: Option<bool>,
}

#[derive(Debug, Args)]
pub struct CamArgs {
    /// Trained model file
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Manifest listing the images
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Image files or directories (PNG/PPM), used when no manifest is given
    #[arg(long, num_args = 1.., value_name = "PATH")]
    pub images: Option<Vec<PathBuf>>,
    /// Class whose activation map is drawn [default: 1]
    #[arg(long)]
    pub class: Option<usize>,
    /// jet, hot or gray [default: jet]
    #[arg(long)]
    pub colormap: Option<String>,
    /// Heatmap opacity in the overlay [default: 0.4]
    #[arg(long)]
    pub alpha: Option<f32>,
    /// Also write classifier scores (id,score) to this CSV
    #[arg(long, value_name = "FILE")]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProposeArgs {
    /// Directory of <id>.cam.bin heatmaps [default: the output directory]
    #[arg(long, value_name = "DIR")]
    pub heatmaps: Option<PathBuf>,
    /// Compute heatmaps with this model instead of reading sidecars
    #[arg(long, value_name = "FILE", conflicts_with = "heatmaps")]
    pub model: Option<PathBuf>,
    /// Manifest listing the images (with --model)
    #[arg(long, value_name = "FILE", requires = "model")]
    pub manifest: Option<PathBuf>,
    /// Image files or directories (with --model)
    #[arg(long, num_args = 1.., value_name = "PATH", requires = "model")]
    pub images: Option<Vec<PathBuf>>,
    /// Class whose activation map is thresholded (with --model) [default: 1]
    #[arg(long, requires = "model")]
    pub class: Option<usize>,
    /// Threshold on the normalized heatmap [default: 0.65]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Smallest region kept, in pixels [default: 4]
    #[arg(long, value_name = "PX")]
    pub min_area: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Proposal file [default: <out>/proposals.jsonl]
    #[arg(long, value_name = "FILE")]
    pub proposals: Option<PathBuf>,
    /// Manifest with labels and annotation masks
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Classifier scores CSV (id,score)
    #[arg(long, value_name = "FILE")]
    pub scores: Option<PathBuf>,
    /// Side the heatmaps were computed at [default: 64]
    #[arg(long, value_name = "PX")]
    pub size: Option<usize>,
    /// overlap50, onepixel or both [default: both]
    #[arg(long)]
    pub criterion: Option<String>,
    /// Proposal score cut for the lesion-level table [default: 0.65]
    #[arg(long)]
    pub lesion_threshold: Option<f64>,
    /// Score at or above which an image is called diseased [default: 0.5]
    #[arg(long)]
    pub classification_threshold: Option<f64>,
}

/// A failed command: message plus process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_) | Error::Spec(_) => EXIT_USAGE,
            Error::Io { .. }
            | Error::Image { .. }
            | Error::Json(_)
            | Error::Manifest(_)
            | Error::ModelFile(_)
            | Error::DegenerateImage(_) => EXIT_INPUT,
            Error::Shape(_) | Error::MissingCache(_) => EXIT_INTERNAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.global.config {
        Some(p) => ConfigFile::read(p)?,
        None => ConfigFile::default(),
    };
    let threads = cli.global.threads.or(file.threads).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure {
            code: EXIT_INTERNAL,
            message: format!("thread pool: {e}"),
        })?;
    let ctx = commands::Context {
        seed: cli.global.seed.or(file.seed).unwrap_or(0),
        out: cli
            .global
            .out
            .clone()
            .or_else(|| file.out.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out")),
    };
    pool.install(|| match cli.command {
        Command::Synth(a) => commands::synth(&ctx, a, &file.synth),
        Command::Train(a) => commands::train(&ctx, a, &file.train),
        Command::Cam(a) => commands::cam(&ctx, a, &file.cam),
        Command::Propose(a) => commands::propose(&ctx, a, &file.propose),
        Command::Eval(a) => commands::eval(&ctx, a, &file.eval),
    })
}
