//! Signal, scoring and portfolio construction wired into backtests.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use rayon::prelude::*;

use super::params::{DateRange, HyperParams};
use crate::analytics::{perf_stats, PerfStats};
use crate::backtest::{self, BacktestConfig, BacktestResult};
use crate::error::{Error, Result};
use crate::market_data::{extended_momentum_set, momentum_signal, Frequency, ReturnPanel, Ticker, LOOKBACK_DAYS};
use crate::news::NewsStore;
use crate::portfolio::{apply_cap, baseline_weights, select, tilt, WeightVector, Weighting, WEIGHT_CAP};
use crate::prompt::{render, PromptSpec, PromptVariant, TemplateSet};
use crate::scorer::{normalize, NormalizedScore, ScoreKey, ScoreRequest, Scorer};

/// Requests go out five minutes after the news cutoff.
pub fn request_time(date: NaiveDate) -> NaiveDateTime {
    date.and_time(NaiveTime::from_hms_opt(15, 55, 0).expect("valid time"))
}

/// Period ends with enough history for a momentum signal.
pub fn rebalance_dates(panel: &ReturnPanel, freq: Frequency) -> Vec<NaiveDate> {
    let cal = panel.calendar();
    cal.period_ends(freq).into_iter().filter(|d| cal.index_of(*d).is_some_and(|i| i >= LOOKBACK_DAYS)).collect()
}

/// Rebalance dates used to trade `range`: the last one strictly before
/// `range.from` (so the book is already invested on the first day) followed
/// by every one inside the range.
pub fn window_schedule(panel: &ReturnPanel, freq: Frequency, range: DateRange) -> Result<Vec<NaiveDate>> {
    let all = rebalance_dates(panel, freq);
    let before = all.partition_point(|d| *d < range.from);
    let start = before.saturating_sub(1);
    let out: Vec<NaiveDate> = all[start..].iter().copied().take_while(|d| *d <= range.to).collect();
    if out.is_empty() || out[0] > range.to {
        return Err(Error::Invalid(format!("no {freq} rebalance date available for {range}")));
    }
    Ok(out)
}

/// Candidate sets on one rebalance date.
#[derive(Debug, Clone, PartialEq)]
pub struct Formation {
    pub date: NaiveDate,
    pub date_idx: usize,
    /// Momentum decile 1, rank order.
    pub top_decile: Vec<Ticker>,
    /// Deciles 1 and 2, rank order.
    pub extended: Vec<Ticker>,
}

pub fn formation(panel: &ReturnPanel, date: NaiveDate) -> Result<Formation> {
    let signal = momentum_signal(panel, date)?;
    Ok(Formation {
        date,
        date_idx: panel.calendar().index_of(date).ok_or(Error::UnknownDate(date))?,
        top_decile: signal.top_decile(),
        extended: extended_momentum_set(&signal)?,
    })
}

pub fn formations(panel: &ReturnPanel, dates: &[NaiveDate]) -> Result<Vec<Formation>> {
    dates.par_iter().map(|d| formation(panel, *d)).collect()
}

/// Scores for one formation, keyed by ticker.
pub type ScoreMap = HashMap<Ticker, NormalizedScore>;

/// What fixes a score besides ticker and date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScoreSpec {
    pub tau: Frequency,
    pub k: u32,
    pub prompt: PromptVariant,
}

impl From<&HyperParams> for ScoreSpec {
    fn from(p: &HyperParams) -> Self {
        Self { tau: p.tau, k: p.k, prompt: p.prompt }
    }
}

/// Inputs needed to render and score prompts.
#[derive(Clone, Copy)]
pub struct ScoringInputs<'a> {
    pub panel: &'a ReturnPanel,
    pub news: &'a NewsStore,
    pub templates: &'a TemplateSet,
    pub scorer: &'a Scorer,
}

const SCORE_CHUNK: usize = 512;

impl ScoringInputs<'_> {
    /// The request for `ticker` on formation date `date`.
    pub fn request(&self, spec: ScoreSpec, date: NaiveDate, ticker: &Ticker) -> Result<ScoreRequest> {
        let cal = self.panel.calendar();
        let horizon = spec.tau.horizon_days();
        let window = self.news.query_window(cal, ticker, date, spec.k);
        let empty_window = window.is_empty();
        let prompt = render(
            self.templates,
            &PromptSpec {
                variant: spec.prompt,
                ticker: ticker.to_string(),
                as_of: request_time(date),
                lookback_days: spec.k,
                horizon_days: horizon,
                window,
            },
            cal.shift(date, horizon as i64),
        )?;
        Ok(ScoreRequest {
            key: ScoreKey {
                ticker: ticker.clone(),
                as_of: date,
                lookback: spec.k,
                horizon,
                variant: spec.prompt,
                template_hash: self.templates.get(spec.prompt).hash().to_owned(),
            },
            prompt,
            empty_window,
        })
    }

    /// Normalized scores for every extended-set name of every formation.
    pub fn score(&self, spec: ScoreSpec, formations: &[Formation]) -> Result<Vec<ScoreMap>> {
        let jobs: Vec<(usize, &Ticker)> =
            formations.iter().enumerate().flat_map(|(i, f)| f.extended.iter().map(move |t| (i, t))).collect();
        let mut out = vec![ScoreMap::new(); formations.len()];
        for chunk in jobs.chunks(SCORE_CHUNK) {
            let requests = chunk
                .par_iter()
                .map(|(i, t)| self.request(spec, formations[*i].date, t))
                .collect::<Result<Vec<_>>>()?;
            let raw = self.scorer.batch_score(&requests)?;
            for ((i, t), r) in chunk.iter().zip(raw) {
                out[*i].insert((*t).clone(), normalize(r));
            }
        }
        Ok(out)
    }
}

/// Everything needed to evaluate any grid point on one window.
#[derive(Debug)]
pub struct EvalContext<'a> {
    panel: &'a ReturnPanel,
    range: DateRange,
    cost_bps: f64,
    formations: BTreeMap<Frequency, Vec<Formation>>,
    scores: BTreeMap<ScoreSpec, Vec<ScoreMap>>,
}

/// One portfolio's path through a window.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub schedule: Vec<WeightVector>,
    pub backtest: BacktestResult,
    /// Dates and net returns inside the window.
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
    pub risk_free: Vec<f64>,
    pub stats: PerfStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub params: HyperParams,
    pub enhanced: StrategyRun,
    pub baseline: StrategyRun,
}

impl<'a> EvalContext<'a> {
    /// Precomputes formations and scores for every parameter set in `params`.
    pub fn build(inputs: ScoringInputs<'a>, range: DateRange, cost_bps: f64, params: &[HyperParams]) -> Result<Self> {
        let specs: BTreeSet<ScoreSpec> = params.iter().map(ScoreSpec::from).collect();
        let freqs: BTreeSet<Frequency> = specs.iter().map(|s| s.tau).collect();
        let mut formations_by = BTreeMap::new();
        for freq in freqs {
            let dates = window_schedule(inputs.panel, freq, range)?;
            formations_by.insert(freq, formations(inputs.panel, &dates)?);
        }
        let mut scores = BTreeMap::new();
        for spec in specs {
            tracing::info!(tau = %spec.tau, k = spec.k, prompt = %spec.prompt, %range, "scoring");
            scores.insert(spec, inputs.score(spec, &formations_by[&spec.tau])?);
        }
        Ok(Self { panel: inputs.panel, range, cost_bps, formations: formations_by, scores })
    }

    /// Context with scores supplied directly, one map per formation date.
    pub fn with_scores(
        panel: &'a ReturnPanel,
        range: DateRange,
        cost_bps: f64,
        scores: BTreeMap<ScoreSpec, Vec<ScoreMap>>,
    ) -> Result<Self> {
        let mut formations_by = BTreeMap::new();
        for freq in scores.keys().map(|s| s.tau).collect::<BTreeSet<_>>() {
            let dates = window_schedule(panel, freq, range)?;
            formations_by.insert(freq, formations(panel, &dates)?);
        }
        for (spec, maps) in &scores {
            if maps.len() != formations_by[&spec.tau].len() {
                return Err(Error::Misaligned(format!(
                    "{} score maps for {} {} formations",
                    maps.len(),
                    formations_by[&spec.tau].len(),
                    spec.tau
                )));
            }
        }
        Ok(Self { panel, range, cost_bps, formations: formations_by, scores })
    }

    pub fn range(&self) -> DateRange {
        self.range
    }

    pub fn formations(&self, freq: Frequency) -> Option<&[Formation]> {
        self.formations.get(&freq).map(Vec::as_slice)
    }

    pub fn scores(&self, spec: ScoreSpec) -> Option<&[ScoreMap]> {
        self.scores.get(&spec).map(Vec::as_slice)
    }

    fn cap_at(&self, date_idx: usize) -> impl Fn(&Ticker) -> Option<f64> + '_ {
        move |t| self.panel.ticker_index(t).and_then(|ti| self.panel.market_cap(date_idx, ti))
    }

    /// Enhanced target weights for `params` on every formation date.
    pub fn enhanced_schedule(&self, params: &HyperParams) -> Result<Vec<WeightVector>> {
        let spec = ScoreSpec::from(params);
        let forms = self.formation_list(params.tau)?;
        let scores =
            self.scores.get(&spec).ok_or_else(|| Error::Invalid(format!("no scores prepared for {params}")))?;
        forms
            .iter()
            .zip(scores)
            .map(|(f, sc)| {
                let chosen = select(f.date, &f.extended, sc, params.m);
                let base = baseline_weights(f.date, &chosen.selected, params.weighting, self.cap_at(f.date_idx))?;
                let tilted = tilt(&base, sc, params.eta)?;
                if params.cap {
                    apply_cap(&tilted, WEIGHT_CAP)
                } else {
                    Ok(tilted)
                }
            })
            .collect()
    }

    /// Top-decile momentum weights on every formation date.
    pub fn baseline_schedule(&self, tau: Frequency, weighting: Weighting, cap: bool) -> Result<Vec<WeightVector>> {
        self.formation_list(tau)?
            .iter()
            .map(|f| {
                let w = baseline_weights(f.date, &f.top_decile, weighting, self.cap_at(f.date_idx))?;
                if cap {
                    apply_cap(&w, WEIGHT_CAP)
                } else {
                    Ok(w)
                }
            })
            .collect()
    }

    fn formation_list(&self, tau: Frequency) -> Result<&[Formation]> {
        self.formations
            .get(&tau)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Invalid(format!("no {tau} formations prepared")))
    }

    /// Backtests `schedule` and measures it on the window.
    pub fn run_schedule(&self, schedule: Vec<WeightVector>) -> Result<StrategyRun> {
        let config = BacktestConfig { cost_bps: self.cost_bps, schedule, end: Some(self.range.to) };
        let result = backtest::run(self.panel, &config)?;
        let (dates, returns) = result.slice(self.range.from, self.range.to);
        let cal = self.panel.calendar();
        let risk_free: Vec<f64> = dates
            .iter()
            .map(|d| self.panel.risk_free(cal.index_of(*d).expect("backtest dates are panel dates")))
            .collect();
        let in_window: Vec<_> = result.rebalances.iter().filter(|r| self.range.contains(r.date)).copied().collect();
        let stats = perf_stats(&returns, &risk_free, backtest::turnover_stat(&in_window))?;
        Ok(StrategyRun { schedule: config.schedule, backtest: result, dates, returns, risk_free, stats })
    }

    pub fn evaluate_enhanced(&self, params: &HyperParams) -> Result<StrategyRun> {
        self.run_schedule(self.enhanced_schedule(params)?)
    }

    pub fn evaluate_baseline(&self, params: &HyperParams) -> Result<StrategyRun> {
        self.run_schedule(self.baseline_schedule(params.tau, params.weighting, params.cap)?)
    }

    pub fn evaluate(&self, params: &HyperParams) -> Result<Evaluation> {
        Ok(Evaluation {
            params: *params,
            enhanced: self.evaluate_enhanced(params)?,
            baseline: self.evaluate_baseline(params)?,
        })
    }
}
