//! Firm-specific news ingestion and the 15:45-anchored lookback windows used for prompting.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::market_data::{Ticker, TradingCalendar};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M";

/// Daily news cutoff in exchange-local time.
pub fn cutoff_time() -> NaiveTime {
    NaiveTime::from_hms_opt(15, 45, 0).expect("valid time")
}

/// Timestamp at the 15:45 cutoff on `date`.
pub fn cutoff_on(date: NaiveDate) -> NaiveDateTime {
    date.and_time(cutoff_time())
}

mod minute_timestamp {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    use super::TIMESTAMP_FORMAT;

    pub fn serialize<S: Serializer>(ts: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.format(TIMESTAMP_FORMAT).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let raw = String::deserialize(d)?;
        NaiveDateTime::parse_from_str(&raw, TIMESTAMP_FORMAT)
            .map_err(|e| serde::de::Error::custom(format!("unparseable timestamp `{raw}`: {e}")))
    }
}

/// A single headline. Timestamps are naive exchange-local times at minute precision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsItem {
    pub ticker: Ticker,
    #[serde(with = "minute_timestamp")]
    pub published_at: NaiveDateTime,
    pub title: String,
    #[serde(default)]
    pub summary: String,
    #[serde(default)]
    pub source: String,
}

impl NewsItem {
    fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Newest first, then title, then the remaining fields so duplicates resolve the same way
        // regardless of input order.
        other
            .published_at
            .cmp(&self.published_at)
            .then_with(|| self.title.cmp(&other.title))
            .then_with(|| self.summary.cmp(&other.summary))
            .then_with(|| self.source.cmp(&other.source))
    }

    fn same_key(&self, other: &Self) -> bool {
        self.ticker == other.ticker && self.published_at == other.published_at && self.title == other.title
    }
}

/// Items that fall in one `(ticker, as_of, k)` lookback, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct NewsWindow {
    pub ticker: Ticker,
    /// 15:45 on the query date.
    pub as_of: NaiveDateTime,
    pub lookback_days: u32,
    pub items: Vec<NewsItem>,
}

impl NewsWindow {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Immutable per-ticker index of news items.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewsStore {
    by_ticker: BTreeMap<Ticker, Vec<NewsItem>>,
    duplicates_dropped: usize,
}

impl NewsStore {
    /// Builds a canonical store. Records sharing `(ticker, published_at, title)` collapse to one.
    pub fn from_items(items: impl IntoIterator<Item = NewsItem>) -> Self {
        let mut by_ticker: BTreeMap<Ticker, Vec<NewsItem>> = BTreeMap::new();
        for item in items {
            by_ticker.entry(item.ticker.clone()).or_default().push(item);
        }
        let mut duplicates_dropped = 0;
        for list in by_ticker.values_mut() {
            list.sort_by(NewsItem::canonical_cmp);
            let before = list.len();
            list.dedup_by(|later, earlier| later.same_key(earlier));
            duplicates_dropped += before - list.len();
        }
        Self { by_ticker, duplicates_dropped }
    }

    /// Reads the canonical JSONL format. Blank lines are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut items = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let item: NewsItem =
                serde_json::from_str(&line).map_err(|e| Error::malformed(path, line_no, e.to_string()))?;
            if item.title.trim().is_empty() {
                return Err(Error::malformed(path, line_no, "empty title"));
            }
            if item.ticker.is_empty() {
                return Err(Error::malformed(path, line_no, "empty ticker"));
            }
            items.push(item);
        }
        let store = Self::from_items(items);
        if store.duplicates_dropped > 0 {
            tracing::warn!(
                path = %path.display(),
                dropped = store.duplicates_dropped,
                "dropped duplicate news records"
            );
        }
        Ok(store)
    }

    /// Writes every item as canonical JSONL: tickers ascending, items oldest first.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        for list in self.by_ticker.values() {
            for item in list.iter().rev() {
                let line = serde_json::to_string(item).expect("news items serialize");
                writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
            }
        }
        file.flush().map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.by_ticker.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    pub fn tickers(&self) -> impl Iterator<Item = &Ticker> {
        self.by_ticker.keys()
    }

    /// Items for `ticker`, newest first.
    pub fn items_for(&self, ticker: &str) -> &[NewsItem] {
        self.by_ticker.get(ticker).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = &NewsItem> {
        self.by_ticker.values().flatten()
    }

    /// Items with `cutoff(t - k) < published_at <= cutoff(t)`, where `t - k` steps
    /// back `k` business days on `calendar`.
    pub fn query_window(
        &self,
        calendar: &TradingCalendar,
        ticker: &str,
        date: NaiveDate,
        lookback_days: u32,
    ) -> NewsWindow {
        let upper = cutoff_on(date);
        let lower = cutoff_on(calendar.shift(date, -(lookback_days as i64)));
        let items = self.items_for(ticker);
        // Descending by published_at: find the first item at or before `upper`
        // and the first item at or before `lower`.
        let start = items.partition_point(|it| it.published_at > upper);
        let end = items.partition_point(|it| it.published_at > lower);
        NewsWindow {
            ticker: Ticker::from(ticker),
            as_of: upper,
            lookback_days,
            items: items[start..end.max(start)].to_vec(),
        }
    }

    /// Number of items in the window without materializing it.
    pub fn count_window(&self, calendar: &TradingCalendar, ticker: &str, date: NaiveDate, lookback_days: u32) -> usize {
        let upper = cutoff_on(date);
        let lower = cutoff_on(calendar.shift(date, -(lookback_days as i64)));
        let items = self.items_for(ticker);
        let start = items.partition_point(|it| it.published_at > upper);
        let end = items.partition_point(|it| it.published_at > lower);
        end.saturating_sub(start)
    }
}

/// Maps a vendor's news payload onto [`NewsItem`].
///
/// Field paths are dot-separated keys into each vendor record (`"meta.title"`).
/// The ticker field may hold a string or an array of strings; an article tagged
/// with several tickers yields one item per ticker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMapping {
    pub ticker: String,
    pub published_at: String,
    pub title: String,
    #[serde(default)]
    pub summary: Option<String>,
    #[serde(default)]
    pub source: Option<String>,
    /// chrono format string for the vendor timestamp. With `%z` the local
    /// wall-clock part is kept and the offset discarded.
    #[serde(default = "default_vendor_format")]
    pub timestamp_format: String,
    /// Path to the array of records when the input is a single JSON document
    /// (e.g. `"data"`). When absent the input is read as JSONL.
    #[serde(default)]
    pub records_path: Option<String>,
}

fn default_vendor_format() -> String {
    TIMESTAMP_FORMAT.to_owned()
}

impl FieldMapping {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.line(), e.to_string()))
    }
}

fn lookup<'a>(record: &'a Value, dotted: &str) -> Option<&'a Value> {
    dotted.split('.').try_fold(record, |v, key| v.get(key))
}

fn parse_vendor_timestamp(raw: &str, format: &str) -> std::result::Result<NaiveDateTime, String> {
    let parsed = if format.contains("%z") || format.contains("%:z") {
        DateTime::parse_from_str(raw, format).map(|dt| dt.naive_local())
    } else {
        NaiveDateTime::parse_from_str(raw, format)
    }
    .map_err(|e| format!("unparseable timestamp `{raw}`: {e}"))?;
    Ok(parsed.with_second(0).and_then(|t| t.with_nanosecond(0)).expect("zero seconds is valid"))
}

/// Converts a vendor file to canonical news items using `mapping`.
pub fn adapt_vendor_file(path: &Path, mapping: &FieldMapping) -> Result<Vec<NewsItem>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<(usize, Value)> = match &mapping.records_path {
        Some(records_path) => {
            let doc: Value =
                serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.line(), e.to_string()))?;
            let array = lookup(&doc, records_path)
                .and_then(Value::as_array)
                .ok_or_else(|| Error::malformed(path, 1, format!("`{records_path}` is not an array")))?;
            array.iter().cloned().enumerate().map(|(i, v)| (i + 1, v)).collect()
        }
        None => text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map(|v| (i + 1, v)).map_err(|e| Error::malformed(path, i + 1, e.to_string()))
            })
            .collect::<Result<_>>()?,
    };

    let text_field = |record: &Value, field: &Option<String>| -> String {
        field.as_deref().and_then(|f| lookup(record, f)).and_then(Value::as_str).unwrap_or_default().to_owned()
    };

    let mut out = Vec::new();
    for (pos, record) in records {
        let err = |msg: String| Error::malformed(path, pos, msg);
        let tickers: Vec<String> = match lookup(&record, &mapping.ticker) {
            Some(Value::String(s)) => vec![s.clone()],
            Some(Value::Array(list)) => list
                .iter()
                .map(|v| v.as_str().map(str::to_owned).ok_or_else(|| err("non-string ticker".into())))
                .collect::<Result<_>>()?,
            _ => return Err(err(format!("missing ticker field `{}`", mapping.ticker))),
        };
        let raw_ts = lookup(&record, &mapping.published_at)
            .and_then(Value::as_str)
            .ok_or_else(|| err(format!("missing timestamp field `{}`", mapping.published_at)))?;
        let published_at = parse_vendor_timestamp(raw_ts, &mapping.timestamp_format).map_err(err)?;
        let title = lookup(&record, &mapping.title)
            .and_then(Value::as_str)
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| err(format!("missing or empty title field `{}`", mapping.title)))?
            .to_owned();
        let summary = text_field(&record, &mapping.summary);
        let source = text_field(&record, &mapping.source);
        for ticker in tickers {
            out.push(NewsItem {
                ticker: ticker.into(),
                published_at,
                title: title.clone(),
                summary: summary.clone(),
                source: source.clone(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT).unwrap()
    }

    fn item(ticker: &str, at: &str, title: &str) -> NewsItem {
        NewsItem {
            ticker: ticker.into(),
            published_at: ts(at),
            title: title.into(),
            summary: format!("summary of {title}"),
            source: "Wire".into(),
        }
    }

    fn calendar() -> TradingCalendar {
        let dates = ["2024-01-02", "2024-01-03", "2024-01-04", "2024-01-05", "2024-01-08", "2024-01-09", "2024-01-10"];
        TradingCalendar::new(dates.iter().map(|d| d.parse().unwrap()).collect())
    }

    fn day(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn empty_file_gives_empty_store() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.jsonl");
        std::fs::write(&p, "").unwrap();
        let store = NewsStore::load(&p).unwrap();
        assert!(store.is_empty());
    }

    #[test]
    fn single_record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.jsonl");
        std::fs::write(
            &p,
            r#"{"ticker":"AAPL","published_at":"2024-01-03 10:12","title":"Apple up","summary":"s","source":"CNBC"}"#,
        )
        .unwrap();
        let store = NewsStore::load(&p).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.items_for("AAPL")[0].title, "Apple up");
        assert!(store.items_for("MSFT").is_empty());
    }

    #[test]
    fn malformed_record_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.jsonl");
        std::fs::write(
            &p,
            "{\"ticker\":\"A\",\"published_at\":\"2024-01-03 10:12\",\"title\":\"t\",\"summary\":\"\",\"source\":\"\"}\n\
             {\"ticker\":\"A\",\"published_at\":\"2024-01-03T10:12\",\"title\":\"t\",\"summary\":\"\",\"source\":\"\"}\n",
        )
        .unwrap();
        match NewsStore::load(&p) {
            Err(Error::Malformed { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("timestamp"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_are_dropped() {
        // 10 records, 2 of which repeat an earlier (ticker, published_at, title) key.
        let mut items = vec![
            item("A", "2024-01-03 10:00", "a1"),
            item("A", "2024-01-03 11:00", "a2"),
            item("A", "2024-01-04 09:00", "a3"),
            item("B", "2024-01-03 10:00", "a1"),
            item("B", "2024-01-05 12:00", "b2"),
            item("C", "2024-01-02 16:00", "c1"),
            item("C", "2024-01-02 16:00", "c2"),
            item("A", "2024-01-03 10:00", "a1"),
        ];
        let mut dup = item("C", "2024-01-02 16:00", "c2");
        dup.summary = "different body".into();
        items.push(dup);
        items.push(item("D", "2024-01-08 08:00", "d1"));
        assert_eq!(items.len(), 10);
        let store = NewsStore::from_items(items);
        assert_eq!(store.len(), 8);
        assert_eq!(store.duplicates_dropped(), 2);
    }

    #[test]
    fn window_bounds_are_open_below_closed_above() {
        let store = NewsStore::from_items([
            item("AAPL", "2024-01-08 15:45", "at upper"),
            item("AAPL", "2024-01-05 15:45", "at lower"),
            item("AAPL", "2024-01-05 15:46", "just inside"),
            item("AAPL", "2024-01-08 15:46", "after"),
        ]);
        let w = store.query_window(&calendar(), "AAPL", day("2024-01-08"), 1);
        let titles: Vec<_> = w.items.iter().map(|i| i.title.as_str()).collect();
        assert_eq!(titles, ["at upper", "just inside"]);
        assert_eq!(w.as_of, ts("2024-01-08 15:45"));
    }

    #[test]
    fn weekend_news_belongs_to_monday_window() {
        let store = NewsStore::from_items([item("AAPL", "2024-01-06 12:00", "saturday")]);
        let w = store.query_window(&calendar(), "AAPL", day("2024-01-08"), 1);
        assert_eq!(w.items.len(), 1);
    }

    #[test]
    fn longer_lookback_is_superset() {
        let stamps = [
            "2024-01-02 09:00",
            "2024-01-02 16:00",
            "2024-01-03 15:45",
            "2024-01-04 08:30",
            "2024-01-04 15:44",
            "2024-01-05 15:46",
            "2024-01-08 07:00",
            "2024-01-09 15:45",
            "2024-01-09 15:46",
            "2024-01-10 10:00",
        ];
        let store = NewsStore::from_items(stamps.iter().enumerate().map(|(i, s)| item("X", s, &format!("n{i}"))));
        let t = day("2024-01-09");
        let k1 = store.query_window(&calendar(), "X", t, 1);
        let k5 = store.query_window(&calendar(), "X", t, 5);
        // k=1: (2024-01-08 15:45, 2024-01-09 15:45] holds only the 01-09 15:45 item.
        assert_eq!(k1.items.len(), 1);
        // k=5: (2024-01-02 15:45, 2024-01-09 15:45] holds n1..=n7.
        assert_eq!(k5.items.len(), 7);
        assert!(k1.items.iter().all(|i| k5.items.contains(i)));
        assert_eq!(store.count_window(&calendar(), "X", t, 5), 7);
    }

    #[test]
    fn window_order_is_newest_first_then_title() {
        let store = NewsStore::from_items([
            item("X", "2024-01-04 10:00", "b"),
            item("X", "2024-01-04 12:00", "z"),
            item("X", "2024-01-04 10:00", "a"),
        ]);
        let w = store.query_window(&calendar(), "X", day("2024-01-04"), 1);
        let titles: Vec<_> = w.items.iter().map(|i| i.title.as_str()).collect();
        assert_eq!(titles, ["z", "a", "b"]);
    }

    #[test]
    fn store_is_independent_of_input_order() {
        let items = vec![
            item("X", "2024-01-04 10:00", "b"),
            item("Y", "2024-01-04 12:00", "z"),
            item("X", "2024-01-03 10:00", "a"),
            item("X", "2024-01-04 10:00", "b"),
        ];
        let mut reversed = items.clone();
        reversed.reverse();
        assert_eq!(NewsStore::from_items(items), NewsStore::from_items(reversed));
    }

    #[test]
    fn adapter_fans_out_tickers_and_strips_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vendor.json");
        std::fs::write(
            &p,
            r#"{"data":[{"tickers":["AAPL","MSFT"],"date":"Wed, 03 Jan 2024 10:30:27 -0500",
               "title":"Big tech rallies","text":"Shares rose.","source_name":"CNBC"}]}"#,
        )
        .unwrap();
        let mapping = FieldMapping {
            ticker: "tickers".into(),
            published_at: "date".into(),
            title: "title".into(),
            summary: Some("text".into()),
            source: Some("source_name".into()),
            timestamp_format: "%a, %d %b %Y %H:%M:%S %z".into(),
            records_path: Some("data".into()),
        };
        let items = adapt_vendor_file(&p, &mapping).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].ticker.as_str(), "AAPL");
        assert_eq!(items[1].ticker.as_str(), "MSFT");
        assert_eq!(items[0].published_at, ts("2024-01-03 10:30"));
        assert_eq!(items[0].summary, "Shares rose.");
    }

    #[test]
    fn adapter_rejects_missing_title() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vendor.jsonl");
        std::fs::write(&p, "{\"sym\":\"A\",\"ts\":\"2024-01-03 10:30\"}\n").unwrap();
        let mapping = FieldMapping {
            ticker: "sym".into(),
            published_at: "ts".into(),
            title: "headline".into(),
            summary: None,
            source: None,
            timestamp_format: default_vendor_format(),
            records_path: None,
        };
        assert!(matches!(adapt_vendor_file(&p, &mapping), Err(Error::Malformed { line: 1, .. })));
    }
}
