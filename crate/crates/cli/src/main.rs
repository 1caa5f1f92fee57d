mod args;
mod staging;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use newsmom_core::config::{DataPaths, RunConfig};
use newsmom_core::news::FieldMapping;
use newsmom_core::portfolio::WEIGHT_CAP;
use newsmom_core::search::{DateRange, HyperParams, Param};
use newsmom_core::synthetic::{generate, SyntheticSpec};
use newsmom_core::workflow::{self, NewsSource, Workspace};
use tracing_subscriber::EnvFilter;

use crate::args::{Cli, Command, Common, IngestArgs, OutputArgs, PerturbArgs, ScoreArgs, SynthArgs, ThetaArgs};
use crate::staging::Staged;

type CliResult<T> = Result<T, String>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose, cli.quiet);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "error",
        (_, 0) => "info",
        (_, 1) => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).with_target(false).init();
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Score(a) => score(a),
        Command::Backtest(a) => backtest(&a.common, &a.theta),
        Command::Search(a) => search(&a.common),
        Command::Perturb(a) => perturb(a),
        Command::Report(a) => report(&a.common, &a.theta),
        Command::Synth(a) => synth(a),
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(&common.config).map_err(err)?;
    if let Some(kind) = common.backend() {
        cfg.backend.kind = kind;
    }
    if let Some(out) = &common.out.output {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn output_dir(flag: &OutputArgs, cfg: Option<&RunConfig>) -> CliResult<PathBuf> {
    flag.output
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.clone()))
        .ok_or_else(|| "no output directory: pass --output or set \"output\" in the config".to_string())
}

/// Runs `body` against a staging directory and moves it into place on success.
fn staged<T>(target: &Path, force: bool, body: impl FnOnce(&Path) -> CliResult<T>) -> CliResult<T> {
    let stage = Staged::begin(target, force)?;
    match body(stage.dir()) {
        Ok(v) => {
            let path = stage.commit()?;
            tracing::info!(output = %path.display(), "wrote results");
            Ok(v)
        }
        Err(e) => {
            stage.abort();
            Err(format!("{e}\nno output was written to {}", target.display()))
        }
    }
}

/// `--from`/`--to` override either end of `default`.
fn window(common: &Common, default: DateRange) -> CliResult<DateRange> {
    DateRange::new(common.from.unwrap_or(default.from), common.to.unwrap_or(default.to)).map_err(err)
}

fn read_theta(path: &Path) -> CliResult<HyperParams> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    // A search summary nests the parameters under best.params.
    let params = value.pointer("/best/params").cloned().unwrap_or(value);
    serde_json::from_value(params).map_err(|e| format!("{}: not a parameter set: {e}", path.display()))
}

fn theta(cfg: &RunConfig, args: &ThetaArgs) -> CliResult<HyperParams> {
    let base = match &args.theta {
        Some(path) => read_theta(path)?,
        None => cfg.params,
    };
    Ok(args.apply(base))
}

fn open(cfg: RunConfig) -> CliResult<Workspace> {
    Workspace::open(cfg).map_err(err)
}

fn ingest(a: IngestArgs) -> CliResult<()> {
    let cfg = a.config.as_deref().map(RunConfig::load).transpose().map_err(err)?;
    let pick = |flag: &Option<PathBuf>, from_cfg: fn(&DataPaths) -> &PathBuf, name: &str| {
        flag.clone()
            .or_else(|| cfg.as_ref().map(|c| from_cfg(&c.data).clone()))
            .ok_or_else(|| format!("no {name} input: pass --{name} or --config"))
    };
    let returns = pick(&a.returns, |d| &d.returns, "returns")?;
    let risk_free = pick(&a.risk_free, |d| &d.risk_free, "risk-free")?;
    let mapping = match &a.mapping {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            Some(serde_json::from_str::<FieldMapping>(&text).map_err(|e| format!("{}: {e}", p.display()))?)
        }
        None => None,
    };
    let news_path = match &a.vendor_news {
        Some(p) => p.clone(),
        None => pick(&a.news, |d| &d.news, "news")?,
    };
    let source = match &mapping {
        Some(m) => NewsSource::Vendor { path: &news_path, mapping: m },
        None => NewsSource::Canonical(&news_path),
    };
    let out = output_dir(&a.out, cfg.as_ref())?;
    let report = staged(&out, a.out.force, |dir| workflow::ingest(&returns, &risk_free, source, dir).map_err(err))?;
    println!(
        "ingested {} dates x {} tickers ({} missing returns), {} news items ({} duplicates dropped)",
        report.dates, report.tickers, report.missing_returns, report.news_items, report.news_duplicates_dropped
    );
    Ok(())
}

fn score(a: ScoreArgs) -> CliResult<()> {
    let cfg = load_config(&a.common)?;
    let params = if a.grid { workflow::full_grid() } else { vec![theta(&cfg, &a.theta)?] };
    let range = window(&a.common, cfg.split.full())?;
    let out = output_dir(&a.common.out, Some(&cfg))?;
    let ws = open(cfg)?;
    let s = staged(&out, a.common.out.force, |dir| workflow::score(&ws, range, &params, dir).map_err(err))?;
    println!(
        "{} requests on {}: {} backend calls, {} cache hits, {} empty windows, {} clamped",
        s.requests, s.range, s.backend_calls, s.cache_hits, s.empty_windows, s.clamped
    );
    Ok(())
}

fn backtest(common: &Common, theta_args: &ThetaArgs) -> CliResult<()> {
    let cfg = load_config(common)?;
    let params = theta(&cfg, theta_args)?;
    let full = window(common, cfg.split.full())?;
    let test = cfg.split.test;
    let out = output_dir(&common.out, Some(&cfg))?;
    let ws = open(cfg)?;
    let s = staged(&out, common.out.force, |dir| workflow::backtest(&ws, &params, full, test, dir).map_err(err))?;
    let sharpe = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
    println!("{params}");
    println!("full {}: Sharpe baseline {} enhanced {}", s.full, sharpe(s.baseline.sharpe), sharpe(s.enhanced.sharpe));
    println!(
        "test {}: Sharpe baseline {} enhanced {}",
        s.test,
        sharpe(s.baseline_test.sharpe),
        sharpe(s.enhanced_test.sharpe)
    );
    Ok(())
}

fn search(common: &Common) -> CliResult<()> {
    let cfg = load_config(common)?;
    let validation = window(common, cfg.split.validation)?;
    let out = output_dir(&common.out, Some(&cfg))?;
    let ws = open(cfg)?;
    let grid = workflow::full_grid();
    let result = staged(&out, common.out.force, |dir| workflow::search(&ws, &grid, validation, dir).map_err(err))?;
    let best = result.best();
    println!("evaluated {} parameter sets on {validation}", result.rows.len());
    println!("best: {} (utility {:.4})", best.params, best.utility);
    Ok(())
}

fn perturb(a: PerturbArgs) -> CliResult<()> {
    let cfg = load_config(&a.common)?;
    let optimum = theta(&cfg, &a.theta)?;
    let params = if a.params.is_empty() { Param::ALL.to_vec() } else { a.params.clone() };
    let test = window(&a.common, cfg.split.test)?;
    let out = output_dir(&a.common.out, Some(&cfg))?;
    let ws = open(cfg)?;
    let rows = staged(&out, a.common.out.force, |dir| {
        workflow::perturbations(&ws, &optimum, &params, test, dir).map_err(err)
    })?;
    println!("{} rows over {} parameters around {optimum}", rows.len(), params.len());
    Ok(())
}

fn report(common: &Common, theta_args: &ThetaArgs) -> CliResult<()> {
    let mut cfg = load_config(common)?;
    // The return histogram is of the baseline these parameters select.
    cfg.params = theta(&cfg, theta_args)?;
    if common.from.is_some() || common.to.is_some() {
        let full = window(common, cfg.split.full())?;
        // The report's return histogram covers the full window.
        cfg.split.validation.from = full.from;
        cfg.split.test.to = full.to;
        cfg.validate().map_err(err)?;
    }
    let out = output_dir(&common.out, Some(&cfg))?;
    let ws = open(cfg)?;
    let s = staged(&out, common.out.force, |dir| workflow::report(&ws, dir).map_err(err))?;
    println!(
        "{} news items, {} firm-years, {} baseline days, {} cached scores",
        s.news_items, s.firm_years, s.baseline_days, s.scores
    );
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let mut spec = SyntheticSpec { tickers: a.tickers, seed: a.seed, ..SyntheticSpec::universe(a.seed) };
    if let Some(d) = a.start {
        spec.start = d;
    }
    if let Some(d) = a.end {
        spec.end = d;
    }
    if let Some(r) = a.news_rate {
        spec.news_rate = r;
    }
    let out = output_dir(&a.out, None)?;
    let data = generate(&spec).map_err(err)?;
    staged(&out, a.out.force, |dir| {
        data.panel.save(&dir.join("returns.csv"), &dir.join("riskfree.csv")).map_err(err)?;
        data.news.write_jsonl(&dir.join("news.jsonl")).map_err(err)?;
        let mut cfg = RunConfig::new(
            DataPaths { returns: "returns.csv".into(), risk_free: "riskfree.csv".into(), news: "news.jsonl".into() },
            "cache/scores.jsonl".into(),
        );
        cfg.output = Some("results".into());
        if (spec.tickers / 10) as f64 * WEIGHT_CAP < 1.0 {
            // A capped top decile would be infeasible.
            cfg.params.cap = false;
        }
        std::fs::write(dir.join("config.json"), cfg.to_json() + "\n").map_err(err)
    })?;
    println!(
        "wrote {} tickers x {} dates and {} news items to {}",
        data.panel.tickers().len(),
        data.panel.dates().len(),
        data.news.len(),
        out.display()
    );
    Ok(())
}
