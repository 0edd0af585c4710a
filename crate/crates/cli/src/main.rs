//! `evseg`: synthesize, segment, evaluate, and render event-camera motion
//! streams from the command line.
//!
//! Exit codes: 0 success, 2 bad usage or malformed input, 3 I/O failure,
//! 4 degenerate denoising (segmentation recovered with motion-only labels).

mod config;
mod eval;
mod render;
mod segment;
mod sweep;
mod synth;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use evseg::events::EventIoError;
use evseg::metrics::MetricsError;
use evseg::motion::MotionError;
use evseg::synth::SynthError;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_DEGENERATE: u8 = 4;

/// Command failure carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, config keys, or input content.
    Usage(String),
    /// Filesystem or serialization failure.
    Io(String),
    /// Denoising lost all correlation signal; motion-only outputs were
    /// still written.
    Degenerate,
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Degenerate => EXIT_DEGENERATE,
        }
    }
}

impl From<EventIoError> for CliError {
    fn from(err: EventIoError) -> Self {
        match err {
            EventIoError::Io(_) => CliError::Io(err.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(err: SynthError) -> Self {
        CliError::Usage(err.to_string())
    }
}

impl From<MotionError> for CliError {
    fn from(err: MotionError) -> Self {
        CliError::Usage(err.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(err: MetricsError) -> Self {
        CliError::Usage(err.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "evseg",
    version,
    about = "Event-camera motion segmentation and denoising"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic event sequences with ground-truth labels.
    Synth(synth::SynthArgs),
    /// Segment an event file into moving clusters plus noise.
    Segment(segment::SegmentArgs),
    /// Score a predicted label sidecar against ground truth.
    Eval(eval::EvalArgs),
    /// Render events and labels as a color composite image.
    Render(render::RenderArgs),
    /// Compare segmentation methods across a sequence suite.
    Sweep(sweep::SweepArgs),
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => synth::run(&args),
        Command::Segment(args) => segment::run(&args),
        Command::Eval(args) => eval::run(&args),
        Command::Render(args) => render::run(&args),
        Command::Sweep(args) => sweep::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match &err {
                CliError::Usage(msg) | CliError::Io(msg) => eprintln!("error: {msg}"),
                CliError::Degenerate => {
                    eprintln!("warning: degenerate denoising; wrote motion-only labels")
                }
            }
            ExitCode::from(err.code())
        }
    }
}
