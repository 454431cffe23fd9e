//! `pickeff`: annotate, train, classify and evaluate picking-cart telemetry, and
//! turn labels into picker efficiency reports.

mod commands;
mod config;
mod error;
mod manifest;
mod plots;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pickeff_core::evaluate::Averaging;
use pickeff_core::model::FeatureSet;

#[derive(Debug, Parser)]
#[command(name = "pickeff", version, about = "Picking-cart telemetry to picker efficiency")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML file with [annotate], [model], [train], [efficiency] and [synth] sections.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set train.epochs=10`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Seed for training and synthetic data.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output; repeat for debug level.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricChoice {
    Efficiency,
    TrayFill,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label telemetry Pick/NoPick with the unsupervised geofence, clustering and mass filter.
    Annotate {
        #[arg(long, required = true, num_args = 1..)]
        telemetry: Vec<PathBuf>,
        #[arg(long)]
        boundary: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the segmentation network on labeled telemetry.
    Train {
        #[arg(long, required = true, num_args = 1..)]
        telemetry: Vec<PathBuf>,
        /// velocity, accel, mass, mass+accel or all.
        #[arg(long)]
        features: Option<FeatureSet>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label telemetry with a trained model.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        telemetry: Vec<PathBuf>,
        /// Overlapping windows every N samples with majority voting instead of tiling.
        #[arg(long)]
        overlap_stride: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-date-out cross-validation.
    Loocv {
        #[arg(long, required = true, num_args = 1..)]
        telemetry: Vec<PathBuf>,
        #[arg(long)]
        features: Option<FeatureSet>,
        /// Dates to hold out, comma separated (default: every date).
        #[arg(long, value_delimiter = ',')]
        held_out_dates: Vec<String>,
        #[arg(long, default_value = "macro")]
        averaging: Averaging,
        /// Write each fold's predicted labels.
        #[arg(long)]
        save_predictions: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted labels against truth, and/or estimated reports against ground-truth reports.
    Evaluate {
        #[arg(long, num_args = 1..)]
        pred: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        truth: Vec<PathBuf>,
        #[arg(long)]
        truth_report: Option<PathBuf>,
        #[arg(long)]
        est_report: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-session efficiency and tray-fill report from labeled telemetry.
    Efficiency {
        #[arg(long, required = true, num_args = 1..)]
        telemetry: Vec<PathBuf>,
        #[arg(long)]
        break_log: Option<PathBuf>,
        #[arg(long)]
        tray_counts: Option<PathBuf>,
        /// Exit with status 3 when any session is skipped.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Season summary statistics and plots from efficiency reports.
    Season {
        #[arg(long, required = true, num_args = 1..)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "both")]
        metric: MetricChoice,
        #[arg(long, default_value = "on")]
        iqr: Toggle,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic labeled dataset with ground truth.
    Synth {
        #[arg(long, default_value_t = 10)]
        days: u32,
        /// Anomaly injection severity in [0, 1].
        #[arg(long, default_value_t = 0.0)]
        severity: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
