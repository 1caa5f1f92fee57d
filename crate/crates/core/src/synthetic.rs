//! Seeded synthetic market and news data for demos, tests and benchmarks.
//!
//! Returns follow a one-factor model plus a slowly mean-reverting
//! idiosyncratic drift, which is enough to give past winners some persistence.

use chrono::{Datelike, Days, NaiveDate, NaiveTime, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{PanelRecord, ReturnPanel, Ticker};
use crate::news::{NewsItem, NewsStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub tickers: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub seed: u64,
    /// Expected news items per ticker per calendar day.
    pub news_rate: f64,
    /// Probability that a return cell is missing.
    pub missing_rate: f64,
}

impl SyntheticSpec {
    /// Ten names over three years.
    pub fn small(seed: u64) -> Self {
        Self {
            tickers: 10,
            start: NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2023, 12, 31).expect("valid date"),
            seed,
            news_rate: 0.3,
            missing_rate: 0.0,
        }
    }

    /// A 250-name universe covering the default validation and test windows
    /// plus a year of signal history.
    pub fn universe(seed: u64) -> Self {
        Self {
            tickers: 250,
            start: NaiveDate::from_ymd_opt(2018, 7, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2025, 3, 31).expect("valid date"),
            seed,
            news_rate: 0.25,
            missing_rate: 0.0002,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub panel: ReturnPanel,
    pub news: NewsStore,
}

pub fn ticker_name(i: usize) -> Ticker {
    Ticker::new(format!("T{i:03}"))
}

fn weekdays(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    start
        .iter_days()
        .take_while(|d| *d <= end)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

const HEADLINES: [&str; 8] = [
    "reports quarterly results above expectations",
    "shares slip after guidance cut",
    "announces new product line",
    "faces regulatory inquiry",
    "raises dividend",
    "wins large supply contract",
    "CEO steps down",
    "analysts upgrade outlook",
];
const SOURCES: [&str; 4] = ["Newswire", "Market Daily", "Finance Post", "Street Journal"];

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.tickers == 0 || spec.start > spec.end {
        return Err(Error::Invalid("synthetic spec needs tickers and a non-empty date range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dates = weekdays(spec.start, spec.end);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");

    struct Name {
        mu: f64,
        beta: f64,
        vol: f64,
        drift: f64,
        cap: f64,
    }
    let mut names: Vec<Name> = (0..spec.tickers)
        .map(|_| Name {
            mu: rng.random_range(-0.05..0.20) / 252.0,
            beta: rng.random_range(0.7..1.3),
            vol: rng.random_range(0.15..0.45) / 252f64.sqrt(),
            drift: 0.0,
            cap: (rng.random_range(8.0..12.0f64)).exp() * 1e3,
        })
        .collect();

    let mut records = Vec::with_capacity(dates.len() * spec.tickers);
    let mut risk_free = Vec::with_capacity(dates.len());
    for date in &dates {
        let market = 0.0003 + 0.01 * std_normal.sample(&mut rng);
        risk_free.push((*date, (0.01 + 0.01 * ((date.year() - 2018) as f64 / 7.0)) / 252.0));
        for (i, n) in names.iter_mut().enumerate() {
            n.drift = 0.995 * n.drift + 0.00015 * std_normal.sample(&mut rng);
            let r = (n.mu + n.beta * market + n.drift + n.vol * std_normal.sample(&mut rng)).max(-0.5);
            let missing = rng.random_bool(spec.missing_rate);
            if !missing {
                n.cap *= 1.0 + r;
            }
            records.push(PanelRecord {
                date: *date,
                ticker: ticker_name(i),
                ret: (!missing).then_some(r),
                market_cap: Some(n.cap),
                member: true,
            });
        }
    }
    // Records were produced date-major in ticker order, which is the required sort.
    let panel = ReturnPanel::from_records(&records, &risk_free, std::path::Path::new("<synthetic>"))?;

    let mut items = Vec::new();
    if spec.news_rate > 0.0 {
        let poisson = Poisson::new(spec.news_rate).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut day = spec.start;
        while day <= spec.end {
            for i in 0..spec.tickers {
                let count = poisson.sample(&mut rng) as usize;
                for _ in 0..count {
                    let minute = rng.random_range(0..24 * 60);
                    let at = day.and_time(NaiveTime::from_hms_opt(minute / 60, minute % 60, 0).expect("valid time"));
                    let headline = HEADLINES[rng.random_range(0..HEADLINES.len())];
                    let ticker = ticker_name(i);
                    items.push(NewsItem {
                        title: format!("{ticker} {headline}"),
                        summary: format!("{ticker} {headline} on {day}, according to people familiar with the matter."),
                        source: SOURCES[rng.random_range(0..SOURCES.len())].to_owned(),
                        ticker,
                        published_at: at,
                    });
                }
            }
            day = day + Days::new(1);
        }
    }
    Ok(SyntheticData { panel, news: NewsStore::from_items(items) })
}
