//! End-to-end runs that read a config's inputs and write result files into a directory.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use chrono::{Datelike, NaiveDate};
use serde::Serialize;

use crate::analytics::{alpha_regression, equity_curve, AlphaReport, PerfStats};
use crate::backtest::annualized_turnover;
use crate::config::{BackendConfig, BackendKind, RunConfig};
use crate::error::{Error, Result};
use crate::market_data::ReturnPanel;
use crate::news::{adapt_vendor_file, FieldMapping, NewsStore};
use crate::plot::{bar_chart, line_chart};
use crate::prompt::TemplateSet;
use crate::report::{firm_year_distribution, news_by_year, score_histogram, Histogram};
use crate::scorer::{
    normalize, CacheOnlyBackend, LiveBackend, MockBackend, RawScore, ScoreBackend, ScoreCache, ScoreStats, Scorer,
};
use crate::search::{
    enumerate_grid, opt, perturb, perturbation_params, run_grid, utility, window_schedule, write_perturb_csv,
    DateRange, EvalContext, GridResult, GridRow, HyperParams, Param, PerturbRow, ScoreMap, ScoreSpec, ScoringInputs,
    StrategyRun,
};

pub fn make_backend(cfg: &BackendConfig) -> Result<Arc<dyn ScoreBackend>> {
    Ok(match cfg.kind {
        BackendKind::Mock => Arc::new(MockBackend),
        BackendKind::CacheOnly => Arc::new(CacheOnlyBackend),
        BackendKind::Live => {
            Arc::new(LiveBackend::from_env(cfg.live()).map_err(|e| Error::Invalid(format!("live backend: {e}")))?)
        }
    })
}

/// Loaded inputs plus a scorer bound to the configured cache and backend.
pub struct Workspace {
    pub config: RunConfig,
    pub panel: ReturnPanel,
    pub news: NewsStore,
    pub templates: TemplateSet,
    pub scorer: Scorer,
}

impl std::fmt::Debug for Workspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workspace").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Workspace {
    pub fn open(config: RunConfig) -> Result<Self> {
        let panel = ReturnPanel::load(&config.data.returns, &config.data.risk_free)?;
        let news = NewsStore::load(&config.data.news)?;
        let templates = match &config.templates {
            Some(dir) => TemplateSet::from_dir(dir)?,
            None => TemplateSet::default(),
        };
        let backend = make_backend(&config.backend)?;
        let cache = Arc::new(ScoreCache::open(&config.score_cache)?);
        let scorer = Scorer::with_policy(backend, cache, config.backend.retry(), config.backend.fan_out());
        Ok(Self { config, panel, news, templates, scorer })
    }

    pub fn inputs(&self) -> ScoringInputs<'_> {
        ScoringInputs { panel: &self.panel, news: &self.news, templates: &self.templates, scorer: &self.scorer }
    }

    pub fn context(&self, range: DateRange, params: &[HyperParams]) -> Result<EvalContext<'_>> {
        EvalContext::build(self.inputs(), range, self.config.cost_bps, params)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("results serialize");
    text.push('\n');
    write_text(path, &text)
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let err = |e: csv::Error| Error::Invalid(format!("writing {}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub dates: usize,
    pub tickers: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub missing_returns: usize,
    pub news_items: usize,
    pub news_duplicates_dropped: usize,
}

/// Where `ingest` reads news from.
#[derive(Debug, Clone, Copy)]
pub enum NewsSource<'a> {
    Canonical(&'a Path),
    Vendor { path: &'a Path, mapping: &'a FieldMapping },
}

/// Validates the inputs and writes canonical copies plus `validation_report.json`.
pub fn ingest(returns: &Path, risk_free: &Path, news: NewsSource<'_>, out: &Path) -> Result<IngestReport> {
    let panel = ReturnPanel::load(returns, risk_free)?;
    let store = match news {
        NewsSource::Canonical(p) => NewsStore::load(p)?,
        NewsSource::Vendor { path, mapping } => NewsStore::from_items(adapt_vendor_file(path, mapping)?),
    };
    panel.save(&out.join("returns.csv"), &out.join("riskfree.csv"))?;
    store.write_jsonl(&out.join("news.jsonl"))?;
    let cells = panel.dates().len() * panel.tickers().len();
    let report = IngestReport {
        dates: panel.dates().len(),
        tickers: panel.tickers().len(),
        first_date: panel.dates().first().copied(),
        last_date: panel.dates().last().copied(),
        missing_returns: cells - panel.observed_returns().count(),
        news_items: store.len(),
        news_duplicates_dropped: store.duplicates_dropped(),
    };
    write_json(&out.join("validation_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScoreSummary {
    pub range: DateRange,
    pub requests: usize,
    pub backend_calls: usize,
    pub cache_hits: usize,
    pub empty_windows: usize,
    pub clamped: usize,
}

/// Fills the score cache for every key `params` needs on `range`.
pub fn score(ws: &Workspace, range: DateRange, params: &[HyperParams], out: &Path) -> Result<ScoreSummary> {
    let before = ws.scorer.stats();
    let ctx = ws.context(range, params)?;
    let after = ws.scorer.stats();
    let diff = |f: fn(&ScoreStats) -> usize| f(&after) - f(&before);
    let mut specs: Vec<_> = params.iter().map(ScoreSpec::from).collect();
    specs.sort();
    specs.dedup();
    let requests = specs
        .iter()
        .map(|s| ctx.formations(s.tau).map_or(0, |f| f.iter().map(|x| x.extended.len()).sum::<usize>()))
        .sum();
    let summary = ScoreSummary {
        range,
        requests,
        backend_calls: diff(|s| s.backend_calls),
        cache_hits: diff(|s| s.cache_hits),
        empty_windows: diff(|s| s.missing),
        clamped: diff(|s| s.clamped),
    };
    write_json(&out.join("score_summary.json"), &summary)?;
    Ok(summary)
}

const STAT_HEADER: [&str; 5] = ["metric", "baseline", "enhanced", "baseline_test", "enhanced_test"];

fn stat_rows(runs: [&StrategyRun; 4], params: &HyperParams) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = (0..6)
        .map(|i| {
            let mut row = vec![runs[0].stats.rows()[i].0.to_string()];
            row.extend(runs.iter().map(|r| opt(r.stats.rows()[i].1)));
            row
        })
        .collect();
    let mut annual = vec!["Turnover (annualized)".to_string()];
    annual.extend(runs.iter().map(|r| {
        let in_window: Vec<_> = r.backtest.rebalances.iter().filter(|x| r.dates.contains(&x.date)).copied().collect();
        opt(annualized_turnover(&in_window, params.tau))
    }));
    rows.push(annual);
    rows
}

fn returns_rows(run: &StrategyRun) -> Vec<Vec<String>> {
    let equity = equity_curve(&run.returns);
    run.dates
        .iter()
        .zip(&run.returns)
        .zip(&equity[1..])
        .map(|((d, r), e)| {
            let (t, c) = run.backtest.rebalance_on(*d).map_or((0.0, 0.0), |x| (x.turnover, x.cost));
            vec![d.to_string(), r.to_string(), e.to_string(), t.to_string(), c.to_string()]
        })
        .collect()
}

fn weight_rows(baseline: &StrategyRun, enhanced: &StrategyRun) -> Vec<Vec<String>> {
    let mut by: BTreeMap<(NaiveDate, String), (f64, f64)> = BTreeMap::new();
    for w in &baseline.schedule {
        for (t, x) in &w.weights {
            by.entry((w.date, t.to_string())).or_default().0 = *x;
        }
    }
    for w in &enhanced.schedule {
        for (t, x) in &w.weights {
            by.entry((w.date, t.to_string())).or_default().1 = *x;
        }
    }
    by.into_iter().map(|((d, t), (b, e))| vec![d.to_string(), t, b.to_string(), e.to_string()]).collect()
}

fn excess(run: &StrategyRun) -> Vec<f64> {
    run.returns.iter().zip(&run.risk_free).map(|(r, f)| r - f).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AlphaOutcome {
    Fitted(AlphaReport),
    Unavailable { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestSummary {
    pub params: HyperParams,
    pub full: DateRange,
    pub test: DateRange,
    pub baseline: PerfStats,
    pub enhanced: PerfStats,
    pub baseline_test: PerfStats,
    pub enhanced_test: PerfStats,
    pub alpha: AlphaOutcome,
    pub alpha_test: AlphaOutcome,
}

fn write_window(tag: &str, baseline: &StrategyRun, enhanced: &StrategyRun, out: &Path) -> Result<()> {
    let header = ["date", "net_return", "equity", "turnover", "cost"];
    write_csv(&out.join(format!("returns_{tag}_baseline.csv")), &header, returns_rows(baseline))?;
    write_csv(&out.join(format!("returns_{tag}_enhanced.csv")), &header, returns_rows(enhanced))?;
    write_csv(
        &out.join(format!("weights_{tag}.csv")),
        &["date", "ticker", "weight_baseline", "weight_enhanced"],
        weight_rows(baseline, enhanced),
    )?;
    let eb = equity_curve(&baseline.returns);
    let ee = equity_curve(&enhanced.returns);
    write_csv(
        &out.join(format!("equity_{tag}.csv")),
        &["date", "baseline", "enhanced"],
        baseline
            .dates
            .iter()
            .zip(eb[1..].iter().zip(&ee[1..]))
            .map(|(d, (b, e))| vec![d.to_string(), b.to_string(), e.to_string()]),
    )?;
    let labels: Vec<String> = baseline.dates.iter().map(|d| d.to_string()).collect();
    write_text(
        &out.join(format!("equity_{tag}.svg")),
        &line_chart(
            &format!("Cumulative net return ({tag})"),
            &labels,
            &[("LLM-enhanced", &ee[1..]), ("Baseline", &eb[1..])],
        ),
    )
}

fn alpha_of(baseline: &StrategyRun, enhanced: &StrategyRun) -> AlphaOutcome {
    match alpha_regression(&excess(enhanced), &excess(baseline)) {
        Ok(a) => AlphaOutcome::Fitted(a),
        Err(e) => AlphaOutcome::Unavailable { error: e.to_string() },
    }
}

/// Baseline and enhanced portfolios on the full window and the test window.
pub fn backtest(
    ws: &Workspace,
    params: &HyperParams,
    full: DateRange,
    test: DateRange,
    out: &Path,
) -> Result<BacktestSummary> {
    let full_eval = ws.context(full, &[*params])?.evaluate(params)?;
    let test_eval = ws.context(test, &[*params])?.evaluate(params)?;
    write_window("full", &full_eval.baseline, &full_eval.enhanced, out)?;
    write_window("test", &test_eval.baseline, &test_eval.enhanced, out)?;
    write_csv(
        &out.join("stats.csv"),
        &STAT_HEADER,
        stat_rows([&full_eval.baseline, &full_eval.enhanced, &test_eval.baseline, &test_eval.enhanced], params),
    )?;
    let summary = BacktestSummary {
        params: *params,
        full,
        test,
        baseline: full_eval.baseline.stats,
        enhanced: full_eval.enhanced.stats,
        baseline_test: test_eval.baseline.stats,
        enhanced_test: test_eval.enhanced.stats,
        alpha: alpha_of(&full_eval.baseline, &full_eval.enhanced),
        alpha_test: alpha_of(&test_eval.baseline, &test_eval.enhanced),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSummary {
    pub validation: DateRange,
    pub evaluated: usize,
    pub best: GridRow,
}

/// Evaluates every grid point on `validation`, writes `grid.csv` and `theta_star.json`.
pub fn search(ws: &Workspace, grid: &[HyperParams], validation: DateRange, out: &Path) -> Result<GridResult> {
    let ctx = ws.context(validation, grid)?;
    let result = utility(&run_grid(&ctx, grid, true)?)?;
    result.save_csv(&out.join("grid.csv"))?;
    write_json(
        &out.join("theta_star.json"),
        &SearchSummary { validation, evaluated: grid.len(), best: *result.best() },
    )?;
    Ok(result)
}

/// The full grid.
pub fn full_grid() -> Vec<HyperParams> {
    enumerate_grid()
}

/// One-at-a-time sweeps around `optimum` on `test`.
pub fn perturbations(
    ws: &Workspace,
    optimum: &HyperParams,
    params: &[Param],
    test: DateRange,
    out: &Path,
) -> Result<Vec<PerturbRow>> {
    let ctx = ws.context(test, &perturbation_params(optimum))?;
    let mut all = Vec::new();
    for p in params {
        let rows = perturb(&ctx, optimum, *p)?;
        let categories: Vec<String> = rows.iter().map(|r| r.value.clone()).collect();
        let sharpe = |f: fn(&PerturbRow) -> Option<f64>| rows.iter().map(|r| f(r).unwrap_or(f64::NAN)).collect();
        write_text(
            &out.join(format!("perturb_{}.svg", p.name())),
            &bar_chart(
                &format!("Test-window Sharpe by {}", p.name()),
                &categories,
                &[("LLM-enhanced", sharpe(|r| r.enhanced.sharpe)), ("Baseline", sharpe(|r| r.baseline.sharpe))],
            ),
        )?;
        all.extend(rows);
    }
    let file = std::fs::File::create(out.join("perturb.csv")).map_err(|e| Error::io(out.join("perturb.csv"), e))?;
    write_perturb_csv(&all, std::io::BufWriter::new(file))?;
    write_json(&out.join("theta_star.json"), optimum)?;
    Ok(all)
}

fn histogram_files(hist: &Histogram, title: &str, stem: &str, out: &Path) -> Result<()> {
    write_csv(
        &out.join(format!("{stem}.csv")),
        &["lower", "upper", "count"],
        hist.counts
            .iter()
            .enumerate()
            .map(|(i, c)| vec![hist.edges[i].to_string(), hist.edges[i + 1].to_string(), c.to_string()]),
    )?;
    let labels: Vec<String> = hist.edges[..hist.counts.len()].iter().map(|e| format!("{e:.2}")).collect();
    write_text(
        &out.join(format!("{stem}.svg")),
        &bar_chart(title, &labels, &[("count", hist.counts.iter().map(|c| *c as f64).collect())]),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub news_items: usize,
    pub firm_years: usize,
    pub baseline_days: usize,
    pub scores: usize,
}

pub const RETURN_BINS: usize = 50;

/// Descriptive tables and charts of the news feed, baseline returns and cached scores.
pub fn report(ws: &Workspace, out: &Path) -> Result<ReportSummary> {
    let dates = ws.panel.dates();
    let years = match (dates.first(), dates.last()) {
        (Some(a), Some(b)) => a.year()..=b.year(),
        _ => return Err(Error::Invalid("returns panel has no dates".into())),
    };

    let by_year = news_by_year(&ws.news, years.clone());
    write_csv(
        &out.join("news_by_year.csv"),
        &["year", "items"],
        by_year.iter().map(|(y, c)| vec![y.to_string(), c.to_string()]),
    )?;
    write_text(
        &out.join("news_by_year.svg"),
        &bar_chart(
            "News items per year",
            &by_year.iter().map(|(y, _)| y.to_string()).collect::<Vec<_>>(),
            &[("items", by_year.iter().map(|(_, c)| *c as f64).collect())],
        ),
    )?;

    let bins = firm_year_distribution(&ws.news, ws.panel.tickers(), years);
    write_csv(
        &out.join("news_per_firm_year.csv"),
        &["items_lower", "items_upper", "firm_years"],
        bins.iter().map(|b| vec![b.lower.to_string(), (b.upper - 1).to_string(), b.firm_years.to_string()]),
    )?;
    write_text(
        &out.join("news_per_firm_year.svg"),
        &bar_chart(
            "Firm-years by news count (log bins)",
            &bins.iter().map(|b| b.label()).collect::<Vec<_>>(),
            &[("firm-years", bins.iter().map(|b| b.firm_years as f64).collect())],
        ),
    )?;

    let full = ws.config.split.full();
    let p = ws.config.params;
    let baseline = baseline_run(ws, &p, full)?;
    histogram_files(
        &Histogram::auto(&baseline.returns, RETURN_BINS),
        "Baseline daily net returns",
        "baseline_return_hist",
        out,
    )?;

    let scores: Vec<f64> =
        ws.scorer.cache().snapshot().into_iter().map(|(_, raw)| normalize(RawScore::new(raw)).value()).collect();
    histogram_files(&score_histogram(scores.iter().copied()), "Normalized LLM scores", "score_hist", out)?;

    let summary = ReportSummary {
        news_items: ws.news.len(),
        firm_years: bins.iter().map(|b| b.firm_years).sum(),
        baseline_days: baseline.returns.len(),
        scores: scores.len(),
    };
    write_json(&out.join("report_summary.json"), &summary)?;
    Ok(summary)
}

/// The baseline needs no scores, so it runs without touching the scorer.
fn baseline_run(ws: &Workspace, p: &HyperParams, range: DateRange) -> Result<StrategyRun> {
    let dates = window_schedule(&ws.panel, p.tau, range)?;
    let scores = BTreeMap::from([(ScoreSpec::from(p), vec![ScoreMap::new(); dates.len()])]);
    let ctx = EvalContext::with_scores(&ws.panel, range, ws.config.cost_bps, scores)?;
    ctx.evaluate_baseline(p)
}
