//! Grid evaluation, percentile-rank utility and one-at-a-time perturbations.

mod params;
mod pipeline;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

pub use params::{
    enumerate_grid, DateRange, HyperParams, Param, SampleSplit, CAP_OPTIONS, ETA_OPTIONS, K_OPTIONS, M_OPTIONS,
};
pub use pipeline::{
    formation, formations, rebalance_dates, request_time, window_schedule, EvalContext, Evaluation, Formation,
    ScoreMap, ScoreSpec, ScoringInputs, StrategyRun,
};

use crate::analytics::PerfStats;
use crate::error::{Error, Result};

pub const SHARPE_WEIGHT: f64 = 0.75;
pub const DRAWDOWN_WEIGHT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    pub params: HyperParams,
    pub stats: PerfStats,
    pub pct_sharpe: f64,
    pub pct_mdd: f64,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    /// In evaluation input order.
    pub rows: Vec<GridRow>,
    /// Index into `rows` of the selected configuration.
    pub best: usize,
}

impl GridResult {
    pub fn best(&self) -> &GridRow {
        &self.rows[self.best]
    }

    /// Rows by utility descending, then parameters ascending.
    pub fn ranked(&self) -> Vec<&GridRow> {
        let mut rows: Vec<&GridRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| b.utility.total_cmp(&a.utility).then(a.params.cmp(&b.params)));
        rows
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Invalid(format!("writing grid csv: {e}"));
        w.write_record([
            "tau",
            "k",
            "l",
            "m",
            "prompt",
            "cap",
            "weighting",
            "eta",
            "sharpe",
            "sortino",
            "ann_return",
            "ann_vol",
            "mdd",
            "turnover",
            "pct_sharpe",
            "pct_mdd",
            "utility",
        ])
        .map_err(csv_err)?;
        for r in self.ranked() {
            let p = &r.params;
            w.write_record([
                p.tau.to_string(),
                p.k.to_string(),
                p.horizon().to_string(),
                p.m.to_string(),
                p.prompt.to_string(),
                Param::Cap.value_of(p),
                p.weighting.to_string(),
                p.eta.to_string(),
                opt(r.stats.sharpe),
                opt(r.stats.sortino),
                r.stats.ann_return.to_string(),
                r.stats.ann_vol.to_string(),
                r.stats.mdd.to_string(),
                opt(r.stats.turnover),
                r.pct_sharpe.to_string(),
                r.pct_mdd.to_string(),
                r.utility.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Invalid(format!("writing grid csv: {e}")))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Empty for undefined values.
pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Fraction of `values` that are `<= values[i]`, for every `i`.
fn weak_percentiles(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    values.iter().map(|v| sorted.partition_point(|x| x.total_cmp(v).is_le()) as f64 / n).collect()
}

/// Ranks every evaluated configuration and picks the best.
///
/// Higher Sharpe is better and an undefined Sharpe ranks below every defined
/// one. A deeper drawdown gets a higher drawdown percentile, which lowers U.
/// Ties in U go to the smaller parameter tuple.
pub fn utility(results: &[(HyperParams, PerfStats)]) -> Result<GridResult> {
    if results.len() < 2 {
        return Err(Error::TooFewObservations { needed: 2, available: results.len() });
    }
    let sharpe: Vec<f64> = results.iter().map(|(_, s)| s.sharpe.unwrap_or(f64::NEG_INFINITY)).collect();
    let depth: Vec<f64> = results.iter().map(|(_, s)| s.mdd.abs()).collect();
    let ps = weak_percentiles(&sharpe);
    let pm = weak_percentiles(&depth);
    let rows: Vec<GridRow> = results
        .iter()
        .zip(ps.iter().zip(&pm))
        .map(|((params, stats), (&pct_sharpe, &pct_mdd))| GridRow {
            params: *params,
            stats: *stats,
            pct_sharpe,
            pct_mdd,
            utility: SHARPE_WEIGHT * pct_sharpe - DRAWDOWN_WEIGHT * pct_mdd,
        })
        .collect();
    let best = (0..rows.len())
        .min_by(|&a, &b| rows[b].utility.total_cmp(&rows[a].utility).then(rows[a].params.cmp(&rows[b].params)))
        .expect("at least two rows");
    Ok(GridResult { rows, best })
}

/// Enhanced-portfolio statistics for each configuration, in input order.
pub fn run_grid(
    ctx: &EvalContext<'_>,
    params: &[HyperParams],
    parallel: bool,
) -> Result<Vec<(HyperParams, PerfStats)>> {
    let eval = |p: &HyperParams| ctx.evaluate_enhanced(p).map(|r| (*p, r.stats));
    if parallel {
        params.par_iter().map(eval).collect()
    } else {
        params.iter().map(eval).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbRow {
    pub param: &'static str,
    pub value: String,
    pub is_optimum: bool,
    pub params: HyperParams,
    pub enhanced: PerfStats,
    pub baseline: PerfStats,
}

/// Evaluates `optimum` with `param` swept over its admissible values.
pub fn perturb(ctx: &EvalContext<'_>, optimum: &HyperParams, param: Param) -> Result<Vec<PerturbRow>> {
    param
        .sweep(optimum)
        .par_iter()
        .map(|p| {
            let e = ctx.evaluate(p)?;
            Ok(PerturbRow {
                param: param.name(),
                value: param.value_of(p),
                is_optimum: p == optimum,
                params: *p,
                enhanced: e.enhanced.stats,
                baseline: e.baseline.stats,
            })
        })
        .collect()
}

/// Every configuration any sweep around `optimum` needs.
pub fn perturbation_params(optimum: &HyperParams) -> Vec<HyperParams> {
    let mut all: Vec<HyperParams> = Param::ALL.iter().flat_map(|p| p.sweep(optimum)).collect();
    all.sort();
    all.dedup();
    all
}

pub fn write_perturb_csv(rows: &[PerturbRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Invalid(format!("writing perturbation csv: {e}"));
    w.write_record([
        "param",
        "value",
        "is_optimum",
        "sharpe_enhanced",
        "sharpe_baseline",
        "mdd_enhanced",
        "mdd_baseline",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.param.to_string(),
            r.value.clone(),
            r.is_optimum.to_string(),
            opt(r.enhanced.sharpe),
            opt(r.baseline.sharpe),
            r.enhanced.mdd.to_string(),
            r.baseline.mdd.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Invalid(format!("writing perturbation csv: {e}")))
}
