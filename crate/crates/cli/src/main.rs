use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use hilsim_core::campaign::{CampaignConfig, Preset};
use hilsim_core::BayerPattern;

mod commands;

#[derive(Parser)]
#[command(name = "hilsim", version, about = "Hardware-in-the-loop image sensor simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a study's images into BAY1 mosaics plus an index manifest.
    Convert(ConvertArgs),
    /// Run a capture campaign and write per-frame and summary reports.
    Run(RunArgs),
    /// Write the power-versus-frame-rate curve as CSV.
    Sweep(SweepArgs),
    /// Summarize one or more run directories.
    Report(ReportArgs),
    /// Generate a synthetic PNG study with a manifest.
    Synth(SynthArgs),
}

/// Flags shared by every command that reads a campaign configuration.
#[derive(Args, Clone, Default)]
pub struct ConfigArgs {
    /// JSON campaign configuration, layered over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Top-level seed; overrides the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Base settings: nominal-75mhz or lowpower-5mhz.
    #[arg(long)]
    pub preset: Option<Preset>,
}

impl ConfigArgs {
    pub fn load(&self, default: Preset) -> Result<CampaignConfig> {
        let base = self.preset.unwrap_or(default).config();
        let mut cfg = match &self.config {
            Some(path) => CampaignConfig::load(path, &base)?,
            None => base,
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
pub struct ConvertArgs {
    /// Study manifest (CSV: index,filename,timestamp_ms,label).
    pub manifest: PathBuf,
    /// Output directory for .bay files and index.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Colour filter layout; defaults to the configured sensor's.
    #[arg(long)]
    pub pattern: Option<BayerPattern>,
    /// Sample depth in bits; defaults to the configured sensor's.
    #[arg(long)]
    pub bit_depth: Option<u16>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args)]
pub struct RunArgs {
    /// Output directory for frames.jsonl and summary.json.
    #[arg(long, default_value = "hilsim-run")]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 0.1)]
    pub fps_start: f64,
    #[arg(long, default_value_t = 4.0)]
    pub fps_end: f64,
    #[arg(long, default_value_t = 0.1)]
    pub fps_step: f64,
    /// Sensor clock; defaults to the configured one (5 MHz unless a preset or config says otherwise).
    #[arg(long)]
    pub clock_hz: Option<u64>,
    #[arg(long)]
    pub p_active_mw: Option<f64>,
    #[arg(long)]
    pub p_idle_mw: Option<f64>,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Run directories written by `hilsim run`.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Histogram CSV destination; defaults to the first run directory.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    /// Histogram bin width in milliseconds.
    #[arg(long, default_value_t = 1.0)]
    pub bin_ms: f64,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 12)]
    pub frames: usize,
    #[arg(long, default_value_t = 2.0)]
    pub fps: f64,
    /// Edge length of the square source images.
    #[arg(long, default_value_t = 640)]
    pub size: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Convert(a) => commands::convert(&a),
        Command::Run(a) => commands::run(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Report(a) => commands::report(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
