use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use newsmom_core::config::BackendKind;
use newsmom_core::search::{HyperParams, Param};
use newsmom_core::{Frequency, PromptVariant, Weighting};

/// Backtests a cross-sectional momentum strategy whose holdings are tilted by
/// language-model scores of recent company news.
#[derive(Debug, Parser)]
#[command(name = "newsmom", version, propagate_version = true)]
pub struct Cli {
    /// More log output (repeat for trace). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate returns, risk-free and news files and write canonical copies.
    Ingest(IngestArgs),
    /// Fill the score cache for the rebalance dates a parameter set needs.
    Score(ScoreArgs),
    /// Run the baseline and enhanced portfolios on the full and test windows.
    Backtest(ThetaCommand),
    /// Evaluate all 512 grid points on the validation window and pick the best.
    Search(RunArgs),
    /// Sweep each parameter around an optimum on the test window.
    Perturb(PerturbArgs),
    /// Summary tables and charts of the news feed, returns and cached scores.
    Report(ThetaCommand),
    /// Write a seeded synthetic universe plus a config that points at it.
    Synth(SynthArgs),
}

/// Flags shared by every command that reads a config.
#[derive(Debug, Args)]
pub struct Common {
    /// JSON run config. Relative paths inside it resolve against its directory.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,

    #[command(flatten)]
    pub out: OutputArgs,

    /// Score backend; overrides the config. The live backend reads its token
    /// from the environment variable named in the config.
    #[arg(long, value_name = "KIND", value_parser = ["mock", "live", "cache-only"])]
    pub backend: Option<String>,

    /// First date of the command's window (YYYY-MM-DD); overrides the config split.
    #[arg(long, value_name = "DATE")]
    pub from: Option<NaiveDate>,

    /// Last date of the command's window (YYYY-MM-DD); overrides the config split.
    #[arg(long, value_name = "DATE")]
    pub to: Option<NaiveDate>,
}

impl Common {
    pub fn backend(&self) -> Option<BackendKind> {
        self.backend.as_deref().map(|b| b.parse().expect("clap restricts the values"))
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Directory for results; overrides the config. Written atomically.
    #[arg(long, value_name = "DIR")]
    pub output: Option<PathBuf>,

    /// Replace an existing non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

/// Parameter overrides applied on top of the config's defaults.
#[derive(Debug, Args, Default)]
pub struct ThetaArgs {
    /// Read parameters from a JSON file (a search's theta_star.json or a bare parameter object).
    #[arg(long, value_name = "PATH")]
    pub theta: Option<PathBuf>,

    /// Rebalance frequency: weekly or monthly.
    #[arg(long, value_name = "FREQ")]
    pub tau: Option<Frequency>,

    /// News lookback in business days.
    #[arg(long, value_name = "DAYS")]
    pub k: Option<u32>,

    /// Portfolio size.
    #[arg(long, value_name = "N")]
    pub m: Option<usize>,

    /// Prompt variant: basic or advanced.
    #[arg(long, value_name = "VARIANT")]
    pub prompt: Option<PromptVariant>,

    /// Per-name weight cap.
    #[arg(long, value_name = "on|off", value_parser = parse_on_off)]
    pub cap: Option<bool>,

    /// Base weighting: equal or value.
    #[arg(long, value_name = "W")]
    pub weighting: Option<Weighting>,

    /// Score tilt strength.
    #[arg(long, value_name = "ETA")]
    pub eta: Option<f64>,
}

fn parse_on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(format!("expected on or off, got {s:?}")),
    }
}

impl ThetaArgs {
    pub fn apply(&self, mut p: HyperParams) -> HyperParams {
        if let Some(v) = self.tau {
            p.tau = v;
        }
        if let Some(v) = self.k {
            p.k = v;
        }
        if let Some(v) = self.m {
            p.m = v;
        }
        if let Some(v) = self.prompt {
            p.prompt = v;
        }
        if let Some(v) = self.cap {
            p.cap = v;
        }
        if let Some(v) = self.weighting {
            p.weighting = v;
        }
        if let Some(v) = self.eta {
            p.eta = v;
        }
        p
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Config supplying default input paths.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub out: OutputArgs,

    /// Returns panel CSV.
    #[arg(long, value_name = "PATH")]
    pub returns: Option<PathBuf>,

    /// Daily risk-free CSV.
    #[arg(long, value_name = "PATH")]
    pub risk_free: Option<PathBuf>,

    /// Canonical news JSONL.
    #[arg(long, value_name = "PATH", conflicts_with = "vendor_news")]
    pub news: Option<PathBuf>,

    /// Vendor news file (JSON lines or one JSON document), converted with --mapping.
    #[arg(long, value_name = "PATH", requires = "mapping")]
    pub vendor_news: Option<PathBuf>,

    /// JSON field mapping for --vendor-news.
    #[arg(long, value_name = "PATH", requires = "vendor_news")]
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: Common,

    #[command(flatten)]
    pub theta: ThetaArgs,

    /// Score every key the full grid needs instead of a single parameter set.
    #[arg(long)]
    pub grid: bool,
}

#[derive(Debug, Args)]
pub struct ThetaCommand {
    #[command(flatten)]
    pub common: Common,

    #[command(flatten)]
    pub theta: ThetaArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub common: Common,

    #[command(flatten)]
    pub theta: ThetaArgs,

    /// Parameters to sweep (tau, k, m, prompt, cap, weighting, eta); all when omitted.
    #[arg(long = "param", value_name = "NAME", value_delimiter = ',')]
    pub params: Vec<Param>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub out: OutputArgs,

    #[arg(long, default_value_t = 2024)]
    pub seed: u64,

    /// Number of tickers.
    #[arg(long, default_value_t = 250)]
    pub tickers: usize,

    /// First calendar date (defaults cover the standard split plus a year of history).
    #[arg(long, value_name = "DATE")]
    pub start: Option<NaiveDate>,

    #[arg(long, value_name = "DATE")]
    pub end: Option<NaiveDate>,

    /// Expected news items per ticker per calendar day.
    #[arg(long, value_name = "RATE")]
    pub news_rate: Option<f64>,
}
