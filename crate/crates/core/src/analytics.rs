//! Performance metrics and the single-regressor alpha regression.

use serde::Serialize;

use crate::error::{Error, Result};

pub const TRADING_DAYS: f64 = 252.0;
pub const MIN_ALPHA_OBSERVATIONS: usize = 30;

/// Annualized statistics of a daily net return series.
///
/// Ratios with a zero denominator are `None` rather than infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerfStats {
    pub sharpe: Option<f64>,
    pub sortino: Option<f64>,
    pub ann_return: f64,
    pub ann_vol: f64,
    pub mdd: f64,
    pub turnover: Option<f64>,
}

impl PerfStats {
    /// Row labels in display order, paired with formatted values.
    pub fn rows(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("Sharpe", self.sharpe),
            ("Sortino", self.sortino),
            ("Return", Some(self.ann_return)),
            ("Volatility", Some(self.ann_vol)),
            ("MDD", Some(self.mdd)),
            ("Turnover", self.turnover),
        ]
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// True when every value is identical, so the dispersion is zero in exact
/// arithmetic even if the floating-point estimate is not.
fn is_constant(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] == w[1])
}

pub fn sharpe(excess: &[f64]) -> Option<f64> {
    if is_constant(excess) {
        return None;
    }
    let sd = sample_std(excess);
    (sd > 0.0).then(|| mean(excess) / sd * TRADING_DAYS.sqrt())
}

/// Downside deviation uses a zero target.
pub fn sortino(excess: &[f64]) -> Option<f64> {
    let dd = (excess.iter().map(|x| x.min(0.0).powi(2)).sum::<f64>() / excess.len() as f64).sqrt();
    (dd > 0.0).then(|| mean(excess) / dd * TRADING_DAYS.sqrt())
}

/// Cumulative equity levels starting from 1.0, one more entry than `returns`.
pub fn equity_curve(returns: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(returns.len() + 1);
    let mut level = 1.0;
    out.push(level);
    for r in returns {
        level *= 1.0 + r;
        out.push(level);
    }
    out
}

/// Most negative `equity_t / max_{s<=t} equity_s - 1`; zero for an empty curve.
pub fn max_drawdown(equity: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &e in equity {
        peak = peak.max(e);
        worst = worst.min(e / peak - 1.0);
    }
    worst
}

/// `net` and `risk_free` are aligned daily series. The drawdown is measured on
/// the equity curve that starts at 1.0 before the first return.
pub fn perf_stats(net: &[f64], risk_free: &[f64], turnover: Option<f64>) -> Result<PerfStats> {
    if net.len() != risk_free.len() {
        return Err(Error::Misaligned(format!("{} returns against {} risk-free rates", net.len(), risk_free.len())));
    }
    if net.len() < 2 {
        return Err(Error::TooFewObservations { needed: 2, available: net.len() });
    }
    let excess: Vec<f64> = net.iter().zip(risk_free).map(|(r, f)| r - f).collect();
    let growth: f64 = net.iter().map(|r| 1.0 + r).product();
    Ok(PerfStats {
        sharpe: sharpe(&excess),
        sortino: sortino(&excess),
        ann_return: growth.powf(TRADING_DAYS / net.len() as f64) - 1.0,
        ann_vol: sample_std(net) * TRADING_DAYS.sqrt(),
        mdd: max_drawdown(&equity_curve(net)),
        turnover,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaReport {
    pub alpha: f64,
    pub alpha_annualized: f64,
    pub beta: f64,
    /// `None` when the fit is exact.
    pub t_stat_alpha: Option<f64>,
    pub observations: usize,
}

/// OLS of `enhanced = alpha + beta * baseline + e` with classical standard errors.
pub fn alpha_regression(enhanced: &[f64], baseline: &[f64]) -> Result<AlphaReport> {
    if enhanced.len() != baseline.len() {
        return Err(Error::Misaligned(format!(
            "{} enhanced against {} baseline observations",
            enhanced.len(),
            baseline.len()
        )));
    }
    let n = enhanced.len();
    if n < MIN_ALPHA_OBSERVATIONS {
        return Err(Error::TooFewObservations { needed: MIN_ALPHA_OBSERVATIONS, available: n });
    }
    let (mx, my) = (mean(baseline), mean(enhanced));
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in baseline.iter().zip(enhanced) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 || is_constant(baseline) {
        return Err(Error::DegenerateRegressor);
    }
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    let sse: f64 = baseline.iter().zip(enhanced).map(|(x, y)| (y - alpha - beta * x).powi(2)).sum();
    let s2 = sse / (n - 2) as f64;
    let se_alpha = (s2 * (1.0 / n as f64 + mx * mx / sxx)).sqrt();
    Ok(AlphaReport {
        alpha,
        alpha_annualized: alpha * TRADING_DAYS,
        beta,
        t_stat_alpha: (se_alpha > 0.0).then(|| alpha / se_alpha),
        observations: n,
    })
}
