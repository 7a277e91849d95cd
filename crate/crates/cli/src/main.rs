//! `srnerv`: fit, compress, decode and evaluate per-video neural codecs.

mod commands;
mod error;
mod settings;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use srnerv_core::media::SynthKind;
use srnerv_core::model::ShareMode;

#[derive(Parser)]
#[command(
    name = "srnerv",
    version,
    about = "Per-video neural representation codec"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Global {
    /// Seed for initialization, frame order and synthetic content.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key = value` file with model and training settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Setting override, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Concurrent sweep cells.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// More logging (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a video and write a float checkpoint.
    Fit(FitArgs),
    /// Prune, fine-tune with fake quantization and write a bitstream.
    Compress(CompressArgs),
    /// Decode a bitstream to video.
    Decompress(DecompressArgs),
    /// PSNR/SSIM between videos, or BD-rate between RD curves.
    Eval(EvalArgs),
    /// Rate-distortion sweep over budgets and share modes.
    Sweep(SweepArgs),
    /// Write a synthetic clip.
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct FitArgs {
    pub video: PathBuf,
    /// Pick the channel width whose parameter count is nearest this.
    #[arg(long)]
    pub params: Option<usize>,
    /// Training log CSV (default `<out>.log.csv`).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompressArgs {
    pub checkpoint: PathBuf,
    pub video: PathBuf,
    /// Fraction of mixing weights to prune; 0 leaves the model unmasked.
    #[arg(long)]
    pub prune: Option<f64>,
    /// Report CSV (default `<out>.report.csv`).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct DecompressArgs {
    pub bitstream: PathBuf,
    /// Original video; prints PSNR when given.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    pub reference: PathBuf,
    pub test: PathBuf,
    /// Treat both inputs as `bpp,psnr` curves and report BD-rate.
    #[arg(long)]
    pub rd: bool,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Video to sweep.
    #[arg(long, conflicts_with = "synth")]
    pub input: Option<PathBuf>,
    /// Sweep a synthetic clip instead.
    #[arg(long)]
    pub synth: Option<SynthKind>,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    /// Parameter budgets.
    #[arg(long, value_delimiter = ',', required = true)]
    pub budgets: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "none,full,hybrid")]
    pub modes: Vec<ShareMode>,
    /// Debug: every mode reuses the unshared model, so all curves coincide.
    #[arg(long)]
    pub alias_modes: bool,
    /// Skip the BD-rate summary.
    #[arg(long)]
    pub no_bdrate: bool,
    #[command(flatten)]
    pub knobs: SynthKnobs,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[command(flatten)]
    pub knobs: SynthKnobs,
}

/// Optional overrides of the synthetic clip recipe.
#[derive(Args)]
pub struct SynthKnobs {
    #[arg(long)]
    pub square_size: Option<usize>,
    #[arg(long)]
    pub cell_size: Option<usize>,
    #[arg(long)]
    pub scene_interval: Option<usize>,
    #[arg(long)]
    pub pan_speed: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let g = &cli.global;
    let result = match &cli.command {
        Command::Fit(a) => commands::fit_cmd(g, a),
        Command::Compress(a) => commands::compress(g, a),
        Command::Decompress(a) => commands::decompress(g, a),
        Command::Eval(a) => commands::eval(g, a),
        Command::Sweep(a) => sweep::sweep(g, a),
        Command::Synth(a) => commands::synth(g, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
