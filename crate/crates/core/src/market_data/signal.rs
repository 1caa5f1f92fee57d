use std::collections::HashMap;

use chrono::NaiveDate;
use serde::Serialize;

use super::panel::{ReturnPanel, Ticker};
use crate::error::{Error, Result};

/// Trading days in the 12-month formation lookback.
pub const LOOKBACK_DAYS: usize = 252;
/// Trading days skipped at the end of the lookback (the most recent month).
pub const SKIP_DAYS: usize = 21;
/// Minimum fraction of non-missing returns inside the window.
pub const MIN_COVERAGE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalEntry {
    pub ticker: Ticker,
    /// Compounded return over the formation window.
    pub value: f64,
    /// 1 = strongest signal.
    pub rank: usize,
    /// 1..=10.
    pub decile: u8,
}

/// Cross-sectional 12-1 momentum on one formation date. Entries are in rank order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentumSignal {
    pub formation_date: NaiveDate,
    pub entries: Vec<SignalEntry>,
}

impl MomentumSignal {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> HashMap<&str, f64> {
        self.entries.iter().map(|e| (e.ticker.as_str(), e.value)).collect()
    }

    pub fn ranks(&self) -> HashMap<&str, usize> {
        self.entries.iter().map(|e| (e.ticker.as_str(), e.rank)).collect()
    }

    pub fn deciles(&self) -> HashMap<&str, u8> {
        self.entries.iter().map(|e| (e.ticker.as_str(), e.decile)).collect()
    }

    /// Tickers in decile 1, rank order.
    pub fn top_decile(&self) -> Vec<Ticker> {
        self.entries.iter().take_while(|e| e.decile == 1).map(|e| e.ticker.clone()).collect()
    }
}

/// Decile of `rank` among `n` names: the smallest `j` with `rank <= ceil(j*n/10)`.
pub fn decile_of(rank: usize, n: usize) -> u8 {
    debug_assert!(rank >= 1 && rank <= n);
    (1..=10u8).find(|&j| rank <= decile_boundary(j as usize, n)).unwrap_or(10)
}

/// Last rank belonging to decile `j`: `ceil(j*n/10)`.
pub fn decile_boundary(j: usize, n: usize) -> usize {
    (j * n).div_ceil(10)
}

/// Computes 12-1 momentum for every eligible ticker at `formation_date`.
///
/// The window covers the daily returns at calendar indices `[f-252, f-21)`.
/// Missing returns inside the window compound as zero; a ticker needs at
/// least 90% coverage and membership on the formation date.
pub fn momentum_signal(panel: &ReturnPanel, formation_date: NaiveDate) -> Result<MomentumSignal> {
    let f = panel.calendar().index_of(formation_date).ok_or(Error::UnknownDate(formation_date))?;
    if f < LOOKBACK_DAYS {
        return Err(Error::InsufficientHistory { date: formation_date, needed: LOOKBACK_DAYS, available: f });
    }
    let window = (f - LOOKBACK_DAYS)..(f - SKIP_DAYS);
    let window_len = window.len();

    let mut scored: Vec<(f64, &Ticker)> = Vec::new();
    for (ti, ticker) in panel.tickers().iter().enumerate() {
        if !panel.is_member(f, ti) {
            continue;
        }
        let mut growth = 1.0;
        let mut observed = 0usize;
        for di in window.clone() {
            if let Some(r) = panel.ret(di, ti) {
                growth *= 1.0 + r;
                observed += 1;
            }
        }
        if (observed as f64) < MIN_COVERAGE * window_len as f64 {
            continue;
        }
        scored.push((growth - 1.0, ticker));
    }
    if scored.is_empty() {
        return Err(Error::NoEligibleTickers(formation_date));
    }

    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let n = scored.len();
    let entries = scored
        .into_iter()
        .enumerate()
        .map(|(i, (value, ticker))| SignalEntry {
            ticker: ticker.clone(),
            value,
            rank: i + 1,
            decile: decile_of(i + 1, n),
        })
        .collect();
    Ok(MomentumSignal { formation_date, entries })
}

/// Deciles 1 and 2 in rank order: the candidate pool handed to the news scorer.
pub fn extended_momentum_set(signal: &MomentumSignal) -> Result<Vec<Ticker>> {
    let n = signal.len();
    if n < 10 {
        return Err(Error::TooFewForDeciles(n));
    }
    Ok(signal.entries.iter().take(decile_boundary(2, n)).map(|e| e.ticker.clone()).collect())
}
