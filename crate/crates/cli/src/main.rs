//! `gesture-pipe`: synthesise, ingest, augment, train, evaluate, stream and time arm gestures.
//!
//! Exit codes: 0 success, 2 bad flags, 3 data errors, 4 numeric failure.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gesture_pipe::features::Encoding;
use gesture_pipe::skeleton::GestureLabel;

#[derive(Debug, Parser)]
#[command(
    name = "gesture-pipe",
    version,
    about = "Arm-gesture recognition over OpenPose BODY-25 keypoints"
)]
#[command(after_help = "Set GESTURE_PIPE_THREADS to cap worker threads (0 = one per core).")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled synthetic dataset (one JSONL file per sequence).
    Synth(SynthArgs),
    /// Convert OpenPose output (directory of per-frame JSON, or JSONL) to a sequence file.
    Ingest(IngestArgs),
    /// Write rotated-view and/or speed-resampled copies of sequences.
    Augment(AugmentArgs),
    /// Train a classifier on a dataset directory.
    Train(TrainArgs),
    /// Confusion matrix and per-class accuracy of a trained model.
    Eval(EvalArgs),
    /// Replay a sequence through the sliding-window recognizer.
    Stream(StreamArgs),
    /// Estimate the period of a cyclic gesture.
    Speed(SpeedArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub per_class: usize,
    #[arg(long, default_value_t = 50)]
    pub n_frames: usize,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// Period range in frames, inclusive: MIN,MAX.
    #[arg(long, value_delimiter = ',', default_value = "20,40")]
    pub period: Vec<usize>,
    /// Shoulder-width range in pixels: MIN,MAX.
    #[arg(long, value_delimiter = ',', default_value = "60,140")]
    pub scale: Vec<f64>,
    /// Neck x range in pixels: MIN,MAX.
    #[arg(long, value_delimiter = ',', default_value = "200,440")]
    pub offset_x: Vec<f64>,
    /// Neck y range in pixels: MIN,MAX.
    #[arg(long, value_delimiter = ',', default_value = "120,240")]
    pub offset_y: Vec<f64>,
    /// Noise sigma range as a fraction of the shoulder width: MIN,MAX.
    #[arg(long, value_delimiter = ',', default_value = "0,0.02")]
    pub noise: Vec<f64>,
    /// Probability of dropping each keypoint in each frame.
    #[arg(long, default_value_t = 0.0)]
    pub drop_prob: f64,
    /// Start every sequence at the beginning of its cycle instead of a random phase.
    #[arg(long)]
    pub fixed_phase: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    /// Directory of OpenPose `*.json` frames, or a JSONL file of OpenPose documents.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    #[arg(long)]
    pub label: Option<GestureLabel>,
    #[arg(long, allow_negative_numbers = true)]
    pub view_angle: Option<f64>,
    /// Output sequence file (.jsonl).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    /// Sequence file or dataset directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Rotation angles in degrees, e.g. 15,30,45.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub angles: Vec<f64>,
    /// Also rotate by the negative of every angle.
    #[arg(long)]
    pub both_sides: bool,
    /// Speed ratios, e.g. 0.5,2.0.
    #[arg(long, value_delimiter = ',')]
    pub speed_ratios: Vec<f64>,
    /// Depth table file; the built-in table is used when absent.
    #[arg(long)]
    pub depth_table: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset directory of labelled sequence files.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "coordinate")]
    pub encoding: Encoding,
    /// Frames per training window, taken from the start of each sequence.
    #[arg(long, default_value_t = 50)]
    pub window: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Seed for weight initialisation and minibatch order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed for the 60/10/30 train/validation/test split.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Add copies of the training and validation sequences rotated by these angles
    /// (list both signs for both directions).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub augment_angles: Vec<f64>,
    #[arg(long)]
    pub depth_table: Option<PathBuf>,
    /// End training once validation accuracy reaches 1.
    #[arg(long)]
    pub stop_at_perfect_validation: bool,
    /// Output directory for weights.bin, history.csv and split.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Dataset directory of labelled sequence files.
    #[arg(long)]
    pub data: PathBuf,
    /// Only evaluate the test part of this split (as written by `train`). Files are
    /// matched on the name before any `__` suffix added by `augment`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Refuse weights trained with another encoding.
    #[arg(long)]
    pub encoding: Option<Encoding>,
    /// Window length at base fps and normal speed.
    #[arg(long, default_value_t = 50)]
    pub window: usize,
    #[arg(long, default_value_t = 30.0)]
    pub base_fps: f64,
    /// Resample every sequence to this speed and size the window to match.
    #[arg(long, default_value_t = 1.0)]
    pub speed_ratio: f64,
    /// Directory for confusion.csv, confusion.txt and per_class.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StreamArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Sequence file (.jsonl).
    #[arg(long)]
    pub input: PathBuf,
    /// Stream frame rate; defaults to the sequence's own.
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub base_len: usize,
    #[arg(long, default_value_t = 30.0)]
    pub base_fps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub speed_ratio: f64,
    #[arg(long, default_value_t = 5)]
    pub vote_n: usize,
    /// Fraction of the window kept between evaluations.
    #[arg(long, default_value_t = 0.5)]
    pub retention: f64,
    /// Pace frames at the stream frame rate instead of replaying at full speed.
    #[arg(long)]
    pub realtime: bool,
    /// Also write the emissions as CSV here (a manifest is written beside it).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SpeedArgs {
    /// Sequence file (.jsonl); the whole sequence is the window.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub label: GestureLabel,
    /// Start-position file; the synthetic generator's start poses are used when absent.
    #[arg(long)]
    pub start_positions: Option<PathBuf>,
    /// Encoding for the built-in start positions.
    #[arg(long, default_value = "coordinate")]
    pub encoding: Encoding,
    /// Defaults to the sequence's own frame rate.
    #[arg(long)]
    pub fps: Option<f64>,
    /// Neighbourhood radius for local minima.
    #[arg(long, default_value_t = 2)]
    pub radius: usize,
    /// Also write the estimate as JSON here (a manifest is written beside it).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Ok(v) = std::env::var("GESTURE_PIPE_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) => {
                if !gesture_pipe::par::configure_threads(n) {
                    log::warn!("could not size the thread pool to {n}");
                }
            }
            Err(_) => {
                eprintln!("error: GESTURE_PIPE_THREADS must be a non-negative integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Augment(a) => commands::augment(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Stream(a) => commands::stream(a),
        Command::Speed(a) => commands::speed(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
