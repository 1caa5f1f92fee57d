//! Daily simulation with weight drift between rebalances and proportional
//! one-way transaction costs charged at each rebalance close.

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market_data::{Frequency, ReturnPanel, Ticker};
use crate::portfolio::WeightVector;

pub const DEFAULT_COST_BPS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    /// One-way cost in basis points of traded weight.
    pub cost_bps: f64,
    /// Target weights by rebalance date, ascending. The first entry is the
    /// cost-free inception trade.
    pub schedule: Vec<WeightVector>,
    /// Last simulated date; defaults to the panel's last date.
    pub end: Option<NaiveDate>,
}

impl BacktestConfig {
    pub fn rebalance_dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.schedule.iter().map(|w| w.date)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RebalanceRecord {
    pub date: NaiveDate,
    /// Sum of absolute weight changes against the drifted book.
    pub turnover: f64,
    pub cost: f64,
}

/// A held name whose return was missing; it was sold at its last price and
/// the proceeds spread over the remaining holdings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiquidationEvent {
    pub date: NaiveDate,
    pub ticker: Ticker,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub inception: NaiveDate,
    /// Return dates, strictly after inception.
    pub dates: Vec<NaiveDate>,
    pub gross_returns: Vec<f64>,
    pub net_returns: Vec<f64>,
    /// `equity[0] = 1.0` at inception, then one level per return date.
    pub equity: Vec<f64>,
    /// Rebalances after inception.
    pub rebalances: Vec<RebalanceRecord>,
    pub liquidations: Vec<LiquidationEvent>,
}

impl BacktestResult {
    /// Turnover and cost on `date`, zero when it was not a rebalance.
    pub fn rebalance_on(&self, date: NaiveDate) -> Option<&RebalanceRecord> {
        self.rebalances.binary_search_by(|r| r.date.cmp(&date)).ok().map(|i| &self.rebalances[i])
    }

    /// Net returns restricted to `[from, to]` together with their dates.
    pub fn slice(&self, from: NaiveDate, to: NaiveDate) -> (Vec<NaiveDate>, Vec<f64>) {
        self.dates
            .iter()
            .zip(&self.net_returns)
            .filter(|(d, _)| **d >= from && **d <= to)
            .map(|(d, r)| (*d, *r))
            .unzip()
    }
}

fn resolve(panel: &ReturnPanel, w: &WeightVector) -> Result<Vec<(usize, f64)>> {
    let mut out = w
        .weights
        .iter()
        .map(|(t, x)| {
            panel
                .ticker_index(t)
                .map(|i| (i, *x))
                .ok_or_else(|| Error::Invalid(format!("{t} in schedule on {} is not in the panel", w.date)))
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|(i, _)| *i);
    if out.windows(2).any(|p| p[0].0 == p[1].0) {
        return Err(Error::Invalid(format!("duplicate ticker in schedule on {}", w.date)));
    }
    Ok(out)
}

/// `sum |a_i - b_i|` over the union of two ticker-sorted books.
fn one_way_turnover(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut total) = (0, 0, 0.0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x.0 == y.0 => {
                total += (x.1 - y.1).abs();
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x.0 < y.0 => {
                total += x.1.abs();
                i += 1;
            }
            (Some(_), Some(y)) => {
                total += y.1.abs();
                j += 1;
            }
            (Some(x), None) => {
                total += x.1.abs();
                i += 1;
            }
            (None, Some(y)) => {
                total += y.1.abs();
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    total
}

/// Simulates the schedule on `panel`.
///
/// On each day the book earns `sum w_i r_i` and drifts to `w_i (1 + r_i) / sum_j w_j (1 + r_j)`.
/// On a rebalance date the trade happens at that day's close: turnover is
/// measured against the drifted book, the cost is subtracted from that day's
/// return, and the new targets earn returns from the next day.
pub fn run(panel: &ReturnPanel, config: &BacktestConfig) -> Result<BacktestResult> {
    let first = config.schedule.first().ok_or_else(|| Error::Invalid("empty rebalance schedule".into()))?;
    if config.schedule.windows(2).any(|w| w[0].date >= w[1].date) {
        return Err(Error::Invalid("rebalance dates must be strictly increasing".into()));
    }
    let calendar = panel.calendar();
    let start = calendar.index_of(first.date).ok_or(Error::UnknownDate(first.date))?;
    let end = match config.end {
        Some(d) => calendar.range_indices(first.date, d).last().unwrap_or(start),
        None => calendar.len() - 1,
    };
    let mut targets = Vec::with_capacity(config.schedule.len());
    for w in &config.schedule {
        let di = calendar.index_of(w.date).ok_or(Error::UnknownDate(w.date))?;
        if di <= end {
            targets.push((di, resolve(panel, w)?));
        }
    }

    let cost_rate = config.cost_bps * 1e-4;
    let dates = calendar.dates();
    let mut book = targets[0].1.clone();
    let mut next_target = 1;
    let days = end - start;
    let mut result = BacktestResult {
        inception: first.date,
        dates: Vec::with_capacity(days),
        gross_returns: Vec::with_capacity(days),
        net_returns: Vec::with_capacity(days),
        equity: Vec::with_capacity(days + 1),
        rebalances: Vec::new(),
        liquidations: Vec::new(),
    };
    result.equity.push(1.0);
    let mut missing: Vec<usize> = Vec::new();

    for di in (start + 1)..=end {
        let date = dates[di];
        missing.clear();
        let mut gross = 0.0;
        let mut total = 0.0;
        for (pos, (ti, w)) in book.iter_mut().enumerate() {
            let r = match panel.ret(di, *ti) {
                Some(r) => r,
                None => {
                    missing.push(pos);
                    0.0
                }
            };
            gross += *w * r;
            *w *= 1.0 + r;
            total += *w;
        }
        if total <= 0.0 {
            return Err(Error::PortfolioWipedOut(date));
        }
        for (_, w) in book.iter_mut() {
            *w /= total;
        }

        if !missing.is_empty() && missing.len() < book.len() {
            let sold: f64 = missing.iter().map(|p| book[*p].1).sum();
            for p in missing.iter().rev() {
                let (ti, w) = book.remove(*p);
                tracing::info!(%date, ticker = %panel.tickers()[ti], weight = w, "liquidated on missing return");
                result.liquidations.push(LiquidationEvent { date, ticker: panel.tickers()[ti].clone(), weight: w });
            }
            let keep = 1.0 - sold;
            for (_, w) in book.iter_mut() {
                *w /= keep;
            }
        }

        let mut net = gross;
        if next_target < targets.len() && targets[next_target].0 == di {
            let target = &targets[next_target].1;
            let turnover = one_way_turnover(&book, target);
            let cost = cost_rate * turnover;
            net = gross - cost;
            result.rebalances.push(RebalanceRecord { date, turnover, cost });
            book = target.clone();
            next_target += 1;
        }

        let level = result.equity.last().copied().unwrap_or(1.0) * (1.0 + net);
        result.dates.push(date);
        result.gross_returns.push(gross);
        result.net_returns.push(net);
        result.equity.push(level);
    }
    Ok(result)
}

/// Mean one-way turnover per rebalance, inception excluded. `None` without rebalances.
pub fn turnover_stat(rebalances: &[RebalanceRecord]) -> Option<f64> {
    if rebalances.is_empty() {
        return None;
    }
    Some(rebalances.iter().map(|r| r.turnover).sum::<f64>() / rebalances.len() as f64)
}

/// Per-rebalance turnover scaled by rebalances per year.
pub fn annualized_turnover(rebalances: &[RebalanceRecord], freq: Frequency) -> Option<f64> {
    turnover_stat(rebalances).map(|t| t * freq.periods_per_year())
}
