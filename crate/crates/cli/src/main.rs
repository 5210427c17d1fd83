//! `radar-obb`: simulate, process, detect, auto-label and evaluate synthetic
//! corner-radar frames.
//!
//! Every subcommand exits 0 on success. Failures print one JSON object
//! `{"error", "stage", "causes"}` on stderr and exit 1 (2 for bad usage).
//! The log level is read from `RADAR_OBB_LOG` only.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const LOG_ENV: &str = "RADAR_OBB_LOG";

#[derive(Debug, Parser)]
#[command(name = "radar-obb", version, about = "Oriented vehicle detection on synthetic corner-radar data")]
pub struct Cli {
    /// Worker threads for frame-level parallelism (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scene JSON → RTD radar cubes plus ground-truth JSON lines.
    Simulate(SimulateArgs),
    /// RTD cubes → data-fft / img-fft / data-music / img-music tensors and PGM renders.
    Process(ProcessArgs),
    /// BEV tensors → detection JSON lines.
    Detect(DetectArgs),
    /// Detection sets + BEV tensors → filtered ground-truth JSON lines.
    Autolabel(AutolabelArgs),
    /// Fits the toy probabilistic detection head and writes its loss trace.
    FitDemo(FitDemoArgs),
    /// Detections vs ground truth → AP table and PR curves.
    Eval(EvalArgs),
    /// End-to-end synthetic benchmark over all four formats.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// A scene object or an array of scenes.
    pub scene: PathBuf,
    /// Radar configuration JSON (defaults to the built-in corner radar).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides scene seeds: frame i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-range-bin SNR of a unit scatterer (default: -noise_floor_db of the config).
    #[arg(long, conflicts_with = "no_noise")]
    pub snr_db: Option<f64>,
    /// Noise-free cubes.
    #[arg(long)]
    pub no_noise: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProcessArgs {
    /// RTD radar cubes.
    #[arg(required = true)]
    pub cubes: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Formats to emit (repeatable; default all four).
    #[arg(long = "format")]
    pub formats: Vec<String>,
    /// BEV forward/left/right extent in meters.
    #[arg(long, default_value_t = 40.0)]
    pub extent: f64,
    #[arg(long, default_value_t = 0.1)]
    pub meters_per_pixel: f64,
    /// PGM gamma.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CfarArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub pfa: f64,
    #[arg(long, default_value_t = 8)]
    pub train_cells: usize,
    #[arg(long, default_value_t = 2)]
    pub guard_cells: usize,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// BEV tensors. Frame ids come from `frame_<id>` file names, else the
    /// argument position.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub cfar: CfarArgs,
    #[arg(long, default_value_t = radar_obb::pipeline::DEFAULT_CONFIDENCE)]
    pub confidence: f64,
    #[arg(long, default_value_t = radar_obb::geometry::DEFAULT_NMS_IOU)]
    pub nms_iou: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AutolabelArgs {
    /// BEV tensors, one per frame.
    #[arg(long = "bev", required = true)]
    pub bevs: Vec<PathBuf>,
    /// Detection-set JSON lines (repeatable, one detection set per file and frame).
    #[arg(long = "dets")]
    pub dets: Vec<PathBuf>,
    /// Draws the 16 test-time-augmented detection sets from these true boxes
    /// with the built-in noisy detectors.
    #[arg(long)]
    pub synthesize_from: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = radar_obb::autolabel::DEFAULT_FUSION_THRESHOLD)]
    pub fusion_threshold: f64,
    #[arg(long, default_value_t = radar_obb::geometry::DEFAULT_SCORE_FLOOR)]
    pub score_floor: f64,
    #[arg(long, default_value_t = radar_obb::autolabel::DEFAULT_ENLARGE)]
    pub enlarge: f64,
    #[arg(long, default_value_t = radar_obb::autolabel::DEFAULT_MIN_CONCENTRATION)]
    pub min_concentration: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitDemoArgs {
    /// Toy dataset configuration JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = radar_obb::detmath::DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = radar_obb::detmath::DEFAULT_LR)]
    pub lr: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub dets: PathBuf,
    pub gt: PathBuf,
    /// IoU thresholds.
    #[arg(long, num_args = 1.., default_values_t = radar_obb::eval::DEFAULT_IOU_THRESHOLDS)]
    pub iou: Vec<f64>,
    /// Row name in the AP table (default: detection file stem).
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Benchmark configuration JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub snr_db: Option<f64>,
    #[arg(long, default_value = "demo")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", commands::error_json("args", &anyhow::Error::new(e)));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let stage = e.downcast_ref::<commands::StageError>().map_or("run", |s| s.stage.as_str()).to_string();
            eprintln!("{}", commands::error_json(&stage, &e));
            ExitCode::FAILURE
        }
    }
}
