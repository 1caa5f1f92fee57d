use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

/// How often the portfolio is re-formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Weekly,
    Monthly,
}

impl Frequency {
    pub const ALL: [Frequency; 2] = [Frequency::Weekly, Frequency::Monthly];

    /// Prompt forecast horizon in business days bound to this frequency.
    pub fn horizon_days(self) -> u32 {
        match self {
            Frequency::Weekly => 5,
            Frequency::Monthly => 21,
        }
    }

    /// Rebalances per year, used to annualize turnover.
    pub fn periods_per_year(self) -> f64 {
        match self {
            Frequency::Weekly => 52.0,
            Frequency::Monthly => 12.0,
        }
    }

    fn period_of(self, date: NaiveDate) -> (i32, u32) {
        match self {
            Frequency::Weekly => {
                let week = date.iso_week();
                (week.year(), week.week())
            }
            Frequency::Monthly => (date.year(), date.month()),
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frequency::Weekly => "weekly",
            Frequency::Monthly => "monthly",
        })
    }
}

impl FromStr for Frequency {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "weekly" | "week" | "w" => Ok(Frequency::Weekly),
            "monthly" | "month" | "m" => Ok(Frequency::Monthly),
            other => Err(format!("unknown rebalance frequency `{other}`")),
        }
    }
}

/// Ordered set of trading dates. Business-day arithmetic steps through these
/// dates and falls back to plain weekdays outside the covered range.
#[derive(Debug, Clone, PartialEq)]
pub struct TradingCalendar {
    dates: Vec<NaiveDate>,
    index: HashMap<NaiveDate, usize>,
}

impl TradingCalendar {
    /// `dates` must be strictly increasing; callers validate before constructing.
    pub(crate) fn new(dates: Vec<NaiveDate>) -> Self {
        debug_assert!(dates.windows(2).all(|w| w[0] < w[1]));
        let index = dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        Self { dates, index }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.index.get(&date).copied()
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.index.contains_key(&date)
    }

    pub fn first(&self) -> Option<NaiveDate> {
        self.dates.first().copied()
    }

    pub fn last(&self) -> Option<NaiveDate> {
        self.dates.last().copied()
    }

    /// Indices of dates inside `[from, to]`.
    pub fn range_indices(&self, from: NaiveDate, to: NaiveDate) -> std::ops::Range<usize> {
        let start = self.dates.partition_point(|d| *d < from);
        let end = self.dates.partition_point(|d| *d <= to);
        start..end.max(start)
    }

    /// Moves `n` business days from `date` (negative goes backwards).
    pub fn shift(&self, date: NaiveDate, n: i64) -> NaiveDate {
        let mut current = date;
        for _ in 0..n.unsigned_abs() {
            current = if n > 0 { self.next_business_day(current) } else { self.prev_business_day(current) };
        }
        current
    }

    fn next_business_day(&self, date: NaiveDate) -> NaiveDate {
        let pos = self.dates.partition_point(|d| *d <= date);
        match self.dates.get(pos) {
            Some(next) => *next,
            None => next_weekday(date),
        }
    }

    fn prev_business_day(&self, date: NaiveDate) -> NaiveDate {
        let pos = self.dates.partition_point(|d| *d < date);
        if pos > 0 {
            self.dates[pos - 1]
        } else {
            prev_weekday(date)
        }
    }

    /// Last trading date of each period, excluding the final calendar date
    /// (whose period may be incomplete).
    pub fn period_ends(&self, freq: Frequency) -> Vec<NaiveDate> {
        self.dates.windows(2).filter(|w| freq.period_of(w[0]) != freq.period_of(w[1])).map(|w| w[0]).collect()
    }
}

fn is_weekend(date: NaiveDate) -> bool {
    matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

fn next_weekday(date: NaiveDate) -> NaiveDate {
    let mut d = date + Days::new(1);
    while is_weekend(d) {
        d = d + Days::new(1);
    }
    d
}

fn prev_weekday(date: NaiveDate) -> NaiveDate {
    let mut d = date - Days::new(1);
    while is_weekend(d) {
        d = d - Days::new(1);
    }
    d
}
