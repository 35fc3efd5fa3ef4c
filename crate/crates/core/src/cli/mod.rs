//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input errors (bad flags, unreadable or malformed
//! input, invalid parameters), 3 runtime errors.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use volcd::synth::CorrelationPreset;
use volcd::Error;

pub use config::DetectorParams;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::NonFiniteSample { .. }
            | Error::ChannelMismatch { .. }
            | Error::InsufficientHistory { .. }
            | Error::Empty(_)
            | Error::Parse { .. } => CliError::Input(e.to_string()),
            Error::Degenerate(_) | Error::NoFeasibleMu { .. } | Error::Io { .. } => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "volcd", version, about = "Detect and locate volatility change points")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a detector over a CSV file and print one JSON record per event
    Detect(DetectArgs),
    /// Generate synthetic scenarios with ground-truth sidecars
    Simulate(SimulateArgs),
    /// Score a detector on scenarios that have ground-truth sidecars
    Evaluate(EvaluateArgs),
    /// Tabulate the expected-weight and differenced-volatility oracles
    Analyze(AnalyzeArgs),
    /// Choose mu to meet a false-positive budget on synthetic data
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Sample CSV; `-` reads stdin
    #[arg(long, short)]
    pub input: PathBuf,
    /// Write events here instead of stdout
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub params: DetectorParams,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, short)]
    pub output_dir: PathBuf,
    /// File name prefix; files are `<prefix>.csv` or `<prefix>_NNNN.csv` with --count > 1
    #[arg(long, default_value = "scenario")]
    pub prefix: String,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// identity | low | high
    #[arg(long, default_value = "identity", value_parser = parse_preset)]
    pub correlation: CorrelationPreset,
    #[arg(long)]
    pub min_total: Option<usize>,
    #[arg(long)]
    pub max_total: Option<usize>,
    #[arg(long, env = "VOLCD_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Sample CSV files or directories containing them
    #[arg(long, short, num_args = 1.., required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value_t = 300)]
    pub match_window: usize,
    /// With the GLR detector, score every channel separately instead of fusing events
    #[arg(long)]
    pub per_channel: bool,
    /// Also write the aggregate report (TOML) here
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub params: DetectorParams,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, default_value_t = 1.0)]
    pub sigma1: f64,
    #[arg(long, default_value_t = 2.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 20)]
    pub fast_window: usize,
    #[arg(long, default_value_t = 250)]
    pub slow_window: usize,
    #[arg(long, default_value_t = 10)]
    pub desired_window: usize,
    #[arg(long, default_value_t = 50)]
    pub diff_window: usize,
    /// Monte Carlo draws per table row
    #[arg(long, default_value_t = 4000)]
    pub n_mc: usize,
    /// Largest post-change offset tabulated for the expected weight [default: 2 T_f]
    #[arg(long)]
    pub max_offset: Option<usize>,
    /// Desired-window placement: disjoint | overlapping
    #[arg(long, default_value = "disjoint", value_parser = parse_layout)]
    pub layout: volcd::analysis::DesiredLayout,
    /// Write lambda.svg, mixture.svg and sigma_d.svg here
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
    #[arg(long, env = "VOLCD_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// False-positive budget: proportion of detections (protocol mode) or
    /// events per 5000 samples (--stationary)
    #[arg(long)]
    pub target: f64,
    /// Calibrate on stationary series instead of the change-point protocol
    #[arg(long)]
    pub stationary: bool,
    #[arg(long, default_value_t = 50)]
    pub scenarios: usize,
    /// identity | low | high; the channel count is taken from --channels
    #[arg(long, default_value = "low", value_parser = parse_preset)]
    pub correlation: CorrelationPreset,
    #[arg(long, default_value_t = 0.01)]
    pub grid_lo: f64,
    #[arg(long, default_value_t = 100.0)]
    pub grid_hi: f64,
    #[arg(long, default_value_t = 25)]
    pub grid_n: usize,
    #[arg(long, default_value_t = 300)]
    pub match_window: usize,
    #[command(flatten)]
    pub params: DetectorParams,
}

fn parse_preset(s: &str) -> Result<CorrelationPreset, String> {
    s.parse()
}

fn parse_layout(s: &str) -> Result<volcd::analysis::DesiredLayout, String> {
    match s {
        "disjoint" => Ok(volcd::analysis::DesiredLayout::Disjoint),
        "overlapping" => Ok(volcd::analysis::DesiredLayout::Overlapping),
        other => Err(format!("unknown layout `{other}`")),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Detect(a) => commands::detect(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Calibrate(a) => commands::calibrate(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
