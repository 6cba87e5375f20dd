use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "thumbkey", version, about = "Decode taps, simulate typing experiments and compute text-entry metrics")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Flags beat the config file, which beats
/// the embedded defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Layout preset (`original`, `enlarged`) or path to a layout JSON document.
    #[arg(long, global = true)]
    pub layout: Option<String>,
    /// Lexicon TSV (`word<TAB>count` per line).
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    /// Phrase file, one phrase per line.
    #[arg(long, global = true)]
    pub phrases: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory or file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode a tap file ("x y" in mm per line) into candidates and suggestions.
    Decode {
        taps: PathBuf,
        /// Number of candidate sequences to print.
        #[arg(long, default_value_t = 10)]
        candidates: usize,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Run a simulated experiment and write logs and summaries.
    Simulate,
    /// Recompute the summary from a directory of trial logs.
    Metrics {
        /// Simulation output directory or its `logs/` subdirectory.
        dir: PathBuf,
    },
    /// Check a data file and report what was found.
    Validate {
        #[command(subcommand)]
        target: ValidateTarget,
    },
    /// Fit a profile's motor noise to a target corrected error rate.
    Calibrate {
        /// Profile preset to start from.
        #[arg(long, default_value = "ar-thumb")]
        profile: String,
        /// Target mean corrected error rate in percent.
        #[arg(long)]
        target_cer: f64,
        /// Accepted distance from the target in percentage points.
        #[arg(long, default_value_t = 0.5)]
        tolerance: f64,
    },
    /// Write a layout as JSON.
    Layout {
        #[command(subcommand)]
        action: LayoutAction,
    },
    /// Serve the session API (and optionally static UI files).
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Directory of static files served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Default tracking jitter offered to new sessions (mm).
        #[arg(long, default_value_t = 0.0)]
        jitter_mm: f64,
        /// Default tracking latency offered to new sessions (ms).
        #[arg(long, default_value_t = 0.0)]
        latency_ms: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum ValidateTarget {
    Lexicon { path: PathBuf },
    /// Preset name or layout document.
    Layout { layout: String },
    /// Phrase file, filtered against `--lexicon` (or the shipped one).
    Phrases { path: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum LayoutAction {
    /// Print (or write to `--out`) the `--layout` document.
    Export,
}
