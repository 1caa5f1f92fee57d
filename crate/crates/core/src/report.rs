//! Descriptive statistics of the inputs: news coverage, return and score distributions.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use chrono::Datelike;
use serde::Serialize;

use crate::market_data::Ticker;
use crate::news::NewsStore;

/// Items published in each year of `years`, zeros included.
pub fn news_by_year(news: &NewsStore, years: RangeInclusive<i32>) -> Vec<(i32, usize)> {
    let mut counts: BTreeMap<i32, usize> = years.clone().map(|y| (y, 0)).collect();
    for item in news.iter() {
        if let Some(c) = counts.get_mut(&item.published_at.year()) {
            *c += 1;
        }
    }
    counts.into_iter().collect()
}

/// Firm-years whose item count falls in `[lower, upper)`. The first bin holds
/// exactly zero; later bins double in width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CountBin {
    pub lower: usize,
    pub upper: usize,
    pub firm_years: usize,
}

impl CountBin {
    pub fn label(&self) -> String {
        if self.upper == self.lower + 1 {
            self.lower.to_string()
        } else {
            format!("{}-{}", self.lower, self.upper - 1)
        }
    }
}

fn log_bin(count: usize) -> usize {
    // 0 -> 0, 1 -> 1, 2..3 -> 2, 4..7 -> 3, ...
    (usize::BITS - count.leading_zeros()) as usize
}

/// Distribution of per-firm, per-year item counts over `tickers` x `years`.
pub fn firm_year_distribution(news: &NewsStore, tickers: &[Ticker], years: RangeInclusive<i32>) -> Vec<CountBin> {
    let mut bins: Vec<usize> = vec![0];
    for t in tickers {
        let mut per_year: BTreeMap<i32, usize> = years.clone().map(|y| (y, 0)).collect();
        for item in news.items_for(t) {
            if let Some(c) = per_year.get_mut(&item.published_at.year()) {
                *c += 1;
            }
        }
        for c in per_year.values() {
            let b = log_bin(*c);
            if b >= bins.len() {
                bins.resize(b + 1, 0);
            }
            bins[b] += 1;
        }
    }
    bins.into_iter()
        .enumerate()
        .map(|(b, firm_years)| {
            let (lower, upper) = if b == 0 { (0, 1) } else { (1 << (b - 1), 1 << b) };
            CountBin { lower, upper, firm_years }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `counts.len() + 1` ascending edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// `bins` equal-width bins over `[lo, hi]`. Values outside are dropped.
    pub fn new(values: impl IntoIterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Self {
        assert!(bins > 0 && hi > lo, "histogram needs bins and a positive range");
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
        let mut counts = vec![0; bins];
        for v in values {
            if !(lo..=hi).contains(&v) {
                continue;
            }
            let i = (((v - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Self { edges, counts }
    }

    /// Bins spanning the observed range of `values`; a single empty bin when there are none.
    pub fn auto(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            return Self::new(std::iter::empty(), 0.0, 1.0, bins);
        }
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self::new(values.iter().copied(), lo, hi, bins)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub const SCORE_BINS: usize = 20;

/// Normalized scores in `[-1, 1]`, 20 bins. Callers pass non-missing scores only.
pub fn score_histogram(normalized: impl IntoIterator<Item = f64>) -> Histogram {
    Histogram::new(normalized, -1.0, 1.0, SCORE_BINS)
}
