use std::borrow::Borrow;
use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::ops::Deref;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::calendar::TradingCalendar;
use crate::error::{Error, Result};

/// Security identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ticker(String);

impl Ticker {
    pub fn new(s: impl Into<String>) -> Self {
        Ticker(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Deref for Ticker {
    type Target = str;
    fn deref(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for Ticker {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Ticker {
    fn from(s: &str) -> Self {
        Ticker(s.to_owned())
    }
}

impl From<String> for Ticker {
    fn from(s: String) -> Self {
        Ticker(s)
    }
}

impl fmt::Display for Ticker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One `(date, ticker)` observation. `ret == None` marks an explicitly missing return.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRecord {
    pub date: NaiveDate,
    pub ticker: Ticker,
    pub ret: Option<f64>,
    pub market_cap: Option<f64>,
    pub member: bool,
}

/// Point-in-time daily returns, market caps and index membership on a dense
/// date x ticker grid. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    calendar: TradingCalendar,
    tickers: Vec<Ticker>,
    ticker_index: HashMap<Ticker, usize>,
    // Row-major by date. Missing values are NaN; `present` tracks which rows exist in the source.
    returns: Vec<f64>,
    market_cap: Vec<f64>,
    member: Vec<bool>,
    present: Vec<bool>,
    risk_free: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct ReturnRow {
    date: String,
    ticker: String,
    #[serde(rename = "return")]
    ret: String,
    market_cap: String,
    member: String,
}

#[derive(Debug, Deserialize)]
struct RiskFreeRow {
    date: String,
    rf_daily: String,
}

const RETURNS_HEADER: [&str; 5] = ["date", "ticker", "return", "market_cap", "member"];
const RISK_FREE_HEADER: [&str; 2] = ["date", "rf_daily"];

impl ReturnPanel {
    /// Builds a panel from records sorted by `(date, ticker)` and a risk-free series.
    ///
    /// `source` only labels diagnostics; record `i` is reported as line `i + 2`
    /// so messages line up with a CSV that has a header row.
    pub fn from_records(records: &[PanelRecord], risk_free: &[(NaiveDate, f64)], source: &Path) -> Result<Self> {
        let mut dates: Vec<NaiveDate> = Vec::new();
        let mut tickers: Vec<Ticker> = Vec::new();
        for (i, rec) in records.iter().enumerate() {
            let line = i + 2;
            if i > 0 {
                let prev = &records[i - 1];
                match (prev.date, &prev.ticker).cmp(&(rec.date, &rec.ticker)) {
                    std::cmp::Ordering::Less => {}
                    std::cmp::Ordering::Equal => {
                        return Err(Error::malformed(
                            source,
                            line,
                            format!("duplicate (date, ticker) = ({}, {})", rec.date, rec.ticker),
                        ))
                    }
                    std::cmp::Ordering::Greater => {
                        return Err(Error::malformed(source, line, "rows must be sorted by date then ticker"))
                    }
                }
            }
            if rec.ticker.is_empty() {
                return Err(Error::malformed(source, line, "empty ticker"));
            }
            if let Some(r) = rec.ret {
                if !r.is_finite() {
                    return Err(Error::malformed(source, line, format!("non-finite return {r}")));
                }
            }
            if let Some(cap) = rec.market_cap {
                if !cap.is_finite() || cap <= 0.0 {
                    return Err(Error::malformed(source, line, format!("market cap must be positive, got {cap}")));
                }
            }
            if rec.member && rec.market_cap.is_none() {
                return Err(Error::malformed(
                    source,
                    line,
                    format!("member {} has no market cap on {}", rec.ticker, rec.date),
                ));
            }
            if dates.last() != Some(&rec.date) {
                dates.push(rec.date);
            }
            tickers.push(rec.ticker.clone());
        }
        tickers.sort();
        tickers.dedup();

        let calendar = TradingCalendar::new(dates);
        let ticker_index: HashMap<Ticker, usize> = tickers.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let cells = calendar.len() * tickers.len();
        let mut panel = ReturnPanel {
            returns: vec![f64::NAN; cells],
            market_cap: vec![f64::NAN; cells],
            member: vec![false; cells],
            present: vec![false; cells],
            risk_free: vec![f64::NAN; calendar.len()],
            calendar,
            tickers,
            ticker_index,
        };
        for rec in records {
            let cell = panel
                .cell(panel.calendar.index_of(rec.date).expect("date indexed above"), panel.ticker_index[&rec.ticker]);
            panel.present[cell] = true;
            panel.returns[cell] = rec.ret.unwrap_or(f64::NAN);
            panel.market_cap[cell] = rec.market_cap.unwrap_or(f64::NAN);
            panel.member[cell] = rec.member;
        }

        let rf: HashMap<NaiveDate, f64> = risk_free.iter().copied().collect();
        for (di, date) in panel.calendar.dates().iter().enumerate() {
            match rf.get(date) {
                Some(v) if v.is_finite() => panel.risk_free[di] = *v,
                Some(v) => return Err(Error::Invalid(format!("non-finite risk-free rate {v} on {date}"))),
                None => return Err(Error::Invalid(format!("risk-free rate missing for trading date {date}"))),
            }
        }
        Ok(panel)
    }

    /// Loads and validates the returns and risk-free CSV files.
    pub fn load(returns_path: &Path, riskfree_path: &Path) -> Result<Self> {
        let records = read_return_rows(returns_path)?;
        let risk_free = read_risk_free(riskfree_path)?;
        Self::from_records(&records, &risk_free, returns_path)
    }

    /// Writes the panel back out in the ingestion format. Reloading the
    /// written files reproduces the panel bit-for-bit.
    pub fn save(&self, returns_path: &Path, riskfree_path: &Path) -> Result<()> {
        let mut out = csv_writer(returns_path)?;
        let to_err = |e: csv::Error| Error::Invalid(format!("{}: {e}", returns_path.display()));
        out.write_record(RETURNS_HEADER).map_err(to_err)?;
        for (di, date) in self.calendar.dates().iter().enumerate() {
            let date_str = date.to_string();
            for (ti, ticker) in self.tickers.iter().enumerate() {
                let cell = self.cell(di, ti);
                if !self.present[cell] {
                    continue;
                }
                out.write_record([
                    date_str.as_str(),
                    ticker.as_str(),
                    &fmt_opt(self.returns[cell]),
                    &fmt_opt(self.market_cap[cell]),
                    if self.member[cell] { "1" } else { "0" },
                ])
                .map_err(to_err)?;
            }
        }
        out.flush().map_err(|e| Error::io(returns_path, e))?;

        let mut rf = csv_writer(riskfree_path)?;
        let to_err = |e: csv::Error| Error::Invalid(format!("{}: {e}", riskfree_path.display()));
        rf.write_record(RISK_FREE_HEADER).map_err(to_err)?;
        for (date, v) in self.calendar.dates().iter().zip(&self.risk_free) {
            rf.write_record([date.to_string(), v.to_string()]).map_err(to_err)?;
        }
        rf.flush().map_err(|e| Error::io(riskfree_path, e))?;
        Ok(())
    }

    #[inline]
    fn cell(&self, date_idx: usize, ticker_idx: usize) -> usize {
        date_idx * self.tickers.len() + ticker_idx
    }

    pub fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    pub fn dates(&self) -> &[NaiveDate] {
        self.calendar.dates()
    }

    /// Tickers in lexicographic order.
    pub fn tickers(&self) -> &[Ticker] {
        &self.tickers
    }

    pub fn ticker_index(&self, ticker: &str) -> Option<usize> {
        self.ticker_index.get(ticker).copied()
    }

    /// Daily return at `(date_idx, ticker_idx)`, `None` when missing.
    #[inline]
    pub fn ret(&self, date_idx: usize, ticker_idx: usize) -> Option<f64> {
        let v = self.returns[self.cell(date_idx, ticker_idx)];
        (!v.is_nan()).then_some(v)
    }

    #[inline]
    pub fn market_cap(&self, date_idx: usize, ticker_idx: usize) -> Option<f64> {
        let v = self.market_cap[self.cell(date_idx, ticker_idx)];
        (!v.is_nan()).then_some(v)
    }

    #[inline]
    pub fn is_member(&self, date_idx: usize, ticker_idx: usize) -> bool {
        self.member[self.cell(date_idx, ticker_idx)]
    }

    pub fn risk_free(&self, date_idx: usize) -> f64 {
        self.risk_free[date_idx]
    }

    pub fn risk_free_series(&self) -> &[f64] {
        &self.risk_free
    }

    /// All present returns, row-major. Used for summary reporting.
    pub fn observed_returns(&self) -> impl Iterator<Item = f64> + '_ {
        self.returns.iter().copied().filter(|v| !v.is_nan())
    }
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

fn csv_reader(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| Error::malformed(path, 1, format!("unreadable header: {e}")))?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::malformed(
            path,
            1,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(reader)
}

fn parse_date(path: &Path, line: usize, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| Error::malformed(path, line, format!("bad date `{s}`: {e}")))
}

fn parse_opt_f64(path: &Path, line: usize, field: &str, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| Error::malformed(path, line, format!("bad {field} `{s}`")))
}

pub(crate) fn read_return_rows(path: &Path) -> Result<Vec<PanelRecord>> {
    let mut reader = csv_reader(path, &RETURNS_HEADER)?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<ReturnRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::malformed(path, line, e.to_string()))?;
        let member = match row.member.as_str() {
            "1" => true,
            "0" => false,
            other => return Err(Error::malformed(path, line, format!("member must be 0 or 1, got `{other}`"))),
        };
        out.push(PanelRecord {
            date: parse_date(path, line, &row.date)?,
            ticker: Ticker::new(row.ticker),
            ret: parse_opt_f64(path, line, "return", &row.ret)?,
            market_cap: parse_opt_f64(path, line, "market_cap", &row.market_cap)?,
            member,
        });
    }
    Ok(out)
}

pub(crate) fn read_risk_free(path: &Path) -> Result<Vec<(NaiveDate, f64)>> {
    let mut reader = csv_reader(path, &RISK_FREE_HEADER)?;
    let mut out: Vec<(NaiveDate, f64)> = Vec::new();
    for (i, row) in reader.deserialize::<RiskFreeRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::malformed(path, line, e.to_string()))?;
        let date = parse_date(path, line, &row.date)?;
        let value = parse_opt_f64(path, line, "rf_daily", &row.rf_daily)?
            .ok_or_else(|| Error::malformed(path, line, "empty rf_daily"))?;
        if let Some((prev, _)) = out.last() {
            if *prev >= date {
                return Err(Error::malformed(path, line, "risk-free rows must be strictly increasing by date"));
            }
        }
        out.push((date, value));
    }
    Ok(out)
}

/// Writes a canonical copy of `panel` into `dir` and returns the two paths.
pub fn save_to_dir(panel: &ReturnPanel, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let returns = dir.join("returns.csv");
    let rf = dir.join("riskfree.csv");
    panel.save(&returns, &rf)?;
    Ok((returns, rf))
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    const RF: &str = "date,rf_daily\n2024-01-02,0.0001\n2024-01-03,0.0001\n2024-01-04,0.0001\n";

    #[test]
    fn loads_minimal_panel() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(
            dir.path(),
            "r.csv",
            "date,ticker,return,market_cap,member\n\
             2024-01-02,AAA,0.01,100,1\n2024-01-02,BBB,-0.02,50,1\n\
             2024-01-03,AAA,0.0,101,1\n2024-01-03,BBB,0.01,49,1\n\
             2024-01-04,AAA,,101,1\n2024-01-04,BBB,0.005,49.5,1\n",
        );
        let rf = write(dir.path(), "rf.csv", RF);
        let panel = ReturnPanel::load(&r, &rf).unwrap();
        assert_eq!(panel.dates().len(), 3);
        assert_eq!(panel.tickers().len(), 2);
        assert_eq!(panel.ret(0, 1), Some(-0.02));
        assert_eq!(panel.ret(2, 0), None);
        assert_eq!(panel.market_cap(2, 1), Some(49.5));
        assert_eq!(panel.risk_free(1), 0.0001);
    }

    #[test]
    fn duplicate_row_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(
            dir.path(),
            "r.csv",
            "date,ticker,return,market_cap,member\n\
             2024-01-02,AAA,0.01,100,1\n2024-01-02,AAA,0.01,100,1\n",
        );
        let rf = write(dir.path(), "rf.csv", RF);
        let err = ReturnPanel::load(&r, &rf).unwrap_err();
        match err {
            Error::Malformed { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("duplicate"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unsorted_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(
            dir.path(),
            "r.csv",
            "date,ticker,return,market_cap,member\n\
             2024-01-03,AAA,0.01,100,1\n2024-01-02,AAA,0.01,100,1\n",
        );
        let rf = write(dir.path(), "rf.csv", RF);
        assert!(matches!(ReturnPanel::load(&r, &rf), Err(Error::Malformed { line: 3, .. })));
    }

    #[test]
    fn member_without_cap_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(dir.path(), "r.csv", "date,ticker,return,market_cap,member\n2024-01-02,AAA,0.01,,1\n");
        let rf = write(dir.path(), "rf.csv", RF);
        assert!(matches!(ReturnPanel::load(&r, &rf), Err(Error::Malformed { line: 2, .. })));
        let r = write(dir.path(), "r.csv", "date,ticker,return,market_cap,member\n2024-01-02,AAA,0.01,-3,1\n");
        assert!(matches!(ReturnPanel::load(&r, &rf), Err(Error::Malformed { line: 2, .. })));
    }

    #[test]
    fn risk_free_gap_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(
            dir.path(),
            "r.csv",
            "date,ticker,return,market_cap,member\n2024-01-02,AAA,0.01,100,1\n2024-01-05,AAA,0.01,100,1\n",
        );
        let rf = write(dir.path(), "rf.csv", RF);
        let err = ReturnPanel::load(&r, &rf).unwrap_err().to_string();
        assert!(err.contains("2024-01-05"), "{err}");
    }

    #[test]
    fn missing_file_and_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let rf = write(dir.path(), "rf.csv", RF);
        assert!(matches!(ReturnPanel::load(&dir.path().join("nope.csv"), &rf), Err(Error::Io { .. })));
        let r = write(dir.path(), "r.csv", "date,ticker,ret,cap,member\n");
        assert!(matches!(ReturnPanel::load(&r, &rf), Err(Error::Malformed { line: 1, .. })));
    }

    #[test]
    fn membership_gap_matches_hand_built_panel() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(
            dir.path(),
            "r.csv",
            "date,ticker,return,market_cap,member\n\
             2024-01-02,AAA,0.01,100,1\n2024-01-02,BBB,0.02,80,1\n\
             2024-01-03,AAA,0.01,100,0\n2024-01-03,BBB,0.02,80,1\n\
             2024-01-04,AAA,0.01,100,1\n2024-01-04,BBB,0.02,80,1\n",
        );
        let rf = write(dir.path(), "rf.csv", RF);
        let loaded = ReturnPanel::load(&r, &rf).unwrap();

        let d = |s: &str| s.parse::<NaiveDate>().unwrap();
        let mut records = Vec::new();
        for (date, aaa_member) in [("2024-01-02", true), ("2024-01-03", false), ("2024-01-04", true)] {
            records.push(PanelRecord {
                date: d(date),
                ticker: "AAA".into(),
                ret: Some(0.01),
                market_cap: Some(100.0),
                member: aaa_member,
            });
            records.push(PanelRecord {
                date: d(date),
                ticker: "BBB".into(),
                ret: Some(0.02),
                market_cap: Some(80.0),
                member: true,
            });
        }
        let rf_series: Vec<_> = ["2024-01-02", "2024-01-03", "2024-01-04"].iter().map(|s| (d(s), 0.0001)).collect();
        let expected = ReturnPanel::from_records(&records, &rf_series, Path::new("<hand>")).unwrap();
        // NaN-free panel, so PartialEq on the f64 grids is meaningful.
        assert_eq!(loaded, expected);
        assert!(!loaded.is_member(1, 0));
        assert!(loaded.is_member(1, 1));
    }
}
