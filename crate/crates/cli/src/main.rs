mod commands;
mod config;
mod image;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evpose::posenet::Variant;
use evpose::synthgen::Figure;

#[derive(Parser)]
#[command(name = "evpose", version, about = "Human pose estimation from event-camera streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic stick-figure dataset.
    Synth(SynthArgs),
    /// Slice an event file into fixed-interval frames.
    Convert(ConvertArgs),
    /// Train a model on a generated dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a dataset.
    Eval(EvalArgs),
    /// Run the finite-difference gradient checks.
    Gradcheck(GradcheckArgs),
    /// Decode poses for every frame of an event file.
    Infer(InferArgs),
    /// Render inputs, predictions, heatmaps and attention maps of one clip.
    Plot(PlotArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub sequences: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub static_fraction: Option<f64>,
    #[arg(long, value_parser = parse_figure)]
    pub figure: Option<Figure>,
    /// Length of every sequence in milliseconds.
    #[arg(long)]
    pub duration_ms: Option<u64>,
    #[arg(long)]
    pub width: Option<u16>,
    #[arg(long)]
    pub height: Option<u16>,
    /// Replace an existing non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long, default_value_t = evpose::events::DEFAULT_INTERVAL_US)]
    pub interval_us: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Frames per clip; also raises the model's t_max to match.
    #[arg(long = "T", id = "T")]
    pub t: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Report test-split PCK after every epoch.
    #[arg(long)]
    pub val: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Settings for metrics and clip length; its model section must match
    /// the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long = "T", id = "T")]
    pub t: Option<usize>,
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// Also check a full unroll of the micro model for every variant.
    #[arg(long)]
    pub full_model: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "T", id = "T")]
    pub t: Option<usize>,
    #[arg(long, default_value_t = evpose::events::DEFAULT_INTERVAL_US)]
    pub interval_us: u64,
    #[arg(long, default_value_t = evpose::events::DEFAULT_COUNT_CAP)]
    pub count_cap: u32,
}

#[derive(Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Sequence id from the dataset manifest.
    #[arg(long)]
    pub clip: String,
    #[arg(long)]
    pub out: PathBuf,
    /// First frame of the clip within the sequence.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    #[arg(long = "T", id = "T")]
    pub t: Option<usize>,
    /// Attention pair `t,tau`; may be repeated.
    #[arg(long, value_parser = parse_pair)]
    pub attention: Vec<(usize, usize)>,
    #[arg(long, default_value_t = evpose::events::DEFAULT_INTERVAL_US)]
    pub interval_us: u64,
    #[arg(long, default_value_t = evpose::events::DEFAULT_COUNT_CAP)]
    pub count_cap: u32,
}

fn parse_figure(s: &str) -> Result<Figure, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| format!("unknown figure `{s}` (expected human or star)"))
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `t,tau`, got `{s}`"))?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    Ok((p(a)?, p(b)?))
}

fn init_threads() {
    if let Some(n) = std::env::var("EVPOSE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Convert(a) => commands::convert(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Infer(a) => commands::infer(a),
        Command::Plot(a) => commands::plot(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
