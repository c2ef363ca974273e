mod dataset;
mod evaluate;
mod generate;
mod plot;
mod reconstruct;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sparsecafm::characterize::BaselineUpsampling;
use sparsecafm::{Channel, SparsityFactor};

/// Worker-thread cap for the data-parallel parts of every command.
const THREADS_ENV: &str = "SPARSECAFM_THREADS";

#[derive(Parser)]
#[command(name = "sparsecafm", version, about = "Sparse conductive-AFM reconstruction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of scan pairs and ground-truth masks.
    Generate(generate::Args),
    /// Train an upsampler from scratch.
    Train(train::TrainArgs),
    /// Fine-tune an existing checkpoint on new data.
    Finetune(train::FinetuneArgs),
    /// Reconstruct full-resolution scans from sparse ones.
    Reconstruct(reconstruct::Args),
    /// Score reconstructions against ground truth with PSNR and SSIM.
    Evaluate(evaluate::EvalArgs),
    /// Compare extracted current-map properties of predictions and sparse baselines.
    Scorecard(evaluate::ScorecardArgs),
    /// Render scans or metric tables to PNG.
    Plot(plot::Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    Morphology,
    Current,
}

impl From<ChannelArg> for Channel {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::Morphology => Channel::Morphology,
            ChannelArg::Current => Channel::Current,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    Nearest,
    Bicubic,
}

impl From<BaselineArg> for BaselineUpsampling {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::Nearest => BaselineUpsampling::Nearest,
            BaselineArg::Bicubic => BaselineUpsampling::Bicubic,
        }
    }
}

pub fn parse_sigma(s: &str) -> Result<SparsityFactor, String> {
    let k: u32 = s.parse().map_err(|_| format!("`{s}` is not an integer"))?;
    SparsityFactor::new(k).map_err(|e| e.to_string())
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")?;
    log::debug!("worker pool capped at {n} threads");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|()| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Generate(args) => generate::run(args),
        Command::Train(args) => train::run_train(args),
        Command::Finetune(args) => train::run_finetune(args),
        Command::Reconstruct(args) => reconstruct::run(args),
        Command::Evaluate(args) => evaluate::run_evaluate(args),
        Command::Scorecard(args) => evaluate::run_scorecard(args),
        Command::Plot(args) => plot::run(args),
    }
}

/// Creates the parent directory of `path` when it has one.
pub fn ensure_parent(path: &std::path::Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// Writes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json_value(path: &PathBuf) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
