//! `aeroscene`: dataset generation, training, evaluation, prediction,
//! reconstruction and reporting from one binary.
//!
//! Every command writes into its own output directory together with a
//! `manifest.json` from which `aeroscene replay` can repeat it.

mod cloud;
mod commands;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use aeroscene_core::Error as CoreError;

/// Default root for output directories when `--out` is omitted.
pub const OUT_ROOT_ENV: &str = "AEROSCENE_OUT_ROOT";

/// A failure caused by the invocation rather than by a bug.
#[derive(Debug)]
pub struct UserError(String);

impl UserError {
    pub fn new(msg: impl Into<String>) -> Self {
        UserError(msg.into())
    }
}

impl fmt::Display for UserError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

#[derive(Parser, Debug)]
#[command(name = "aeroscene", version, about = "Joint depth and semantic segmentation for aerial video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset.
    Generate(GenerateArgs),
    /// Train a model on one dataset or a mix of two.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset and write a report.
    Eval(EvalArgs),
    /// Write depth and segmentation images for one frame.
    Predict(PredictArgs),
    /// Write a labeled point cloud for one frame.
    Reconstruct(ReconstructArgs),
    /// Combine the summaries of several eval runs into one report.
    Report(ReportArgs),
    /// Repeat a run from its manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    /// Output directory [default: $AEROSCENE_OUT_ROOT/<command>-<hash>, or runs/...]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace an existing run in the output directory.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum View {
    Nadir,
    Forward,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Dataset recipe (JSON); the built-in 96x96 toy recipe when omitted.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub view: Option<View>,
    /// Downward tilt of the forward view in degrees.
    #[arg(long, default_value_t = 30.0)]
    pub pitch: f64,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    /// Full-width network, augmentation on.
    Default,
    /// Narrow refiners, no augmentation, early stopping.
    Toy,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training dataset, or two comma-separated datasets to mix.
    #[arg(long, value_delimiter = ',', num_args = 1..=2, required = true)]
    pub data: Vec<PathBuf>,
    /// Sampling ratio between the two datasets.
    #[arg(long, default_value = "1:1")]
    pub ratio: String,
    /// Windows per epoch when mixing.
    #[arg(long)]
    pub epoch_size: Option<usize>,
    /// Validation dataset [default: the first training dataset]
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Base training configuration (JSON); flags override its fields.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Weight of the semantic loss.
    #[arg(long)]
    pub loss_weight: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_augment: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Cap {
    #[value(name = "80")]
    Near,
    #[value(name = "200")]
    Far,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Depth cap in meters.
    #[arg(long, value_enum, default_value = "80")]
    pub cap: Cap,
    /// Name of the run in the report [default: output directory name]
    #[arg(long)]
    pub run_id: Option<String>,
    /// Frames shown in the qualitative panel.
    #[arg(long, default_value_t = 2)]
    pub qualitative: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct FrameArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Frame index within the trajectory.
    #[arg(long)]
    pub frame: usize,
    /// Trajectory id [default: the first trajectory]
    #[arg(long)]
    pub trajectory: Option<String>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    pub frame: FrameArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize, serde::Deserialize)]
pub enum Coloring {
    /// Input image colors.
    Rgb,
    /// Class palette colors.
    Labels,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub frame: FrameArgs,
    /// Points at or beyond this depth (meters) are dropped.
    #[arg(long, default_value_t = 200.0)]
    pub trunc: f64,
    #[arg(long, value_enum, default_value_t = Coloring::Rgb)]
    pub color: Coloring,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Eval run directories (or summary.jsonl files).
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// A manifest.json, or the directory holding one.
    pub manifest: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UserError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<CoreError>() {
        Some(e) => match e {
            CoreError::Contract(_) | CoreError::Shape(_) | CoreError::Json(_) | CoreError::Csv(_) => 2,
            _ => 1,
        },
        None if err.downcast_ref::<std::io::Error>().is_some() => 1,
        None => 2,
    }
}

fn one_line(err: &anyhow::Error) -> String {
    let text = format!("{err:#}");
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error: {first} (see --help)");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Predict(a) => commands::predict(a),
        Command::Reconstruct(a) => commands::reconstruct(a),
        Command::Report(a) => commands::report(a),
        Command::Replay(a) => commands::replay(a),
    };
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
