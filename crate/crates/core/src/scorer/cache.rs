use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{ScoreError, ScoreKey};
use crate::market_data::Ticker;
use crate::prompt::PromptVariant;

/// One line of the cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub ticker: Ticker,
    pub as_of: NaiveDate,
    pub lookback: u32,
    pub horizon: u32,
    pub variant: PromptVariant,
    pub template_hash: String,
    pub raw: f64,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scored_at: Option<String>,
}

impl CacheEntry {
    pub fn key(&self) -> ScoreKey {
        ScoreKey {
            ticker: self.ticker.clone(),
            as_of: self.as_of,
            lookback: self.lookback,
            horizon: self.horizon,
            variant: self.variant,
            template_hash: self.template_hash.clone(),
        }
    }
}

/// Append-only JSONL score cache, safe for concurrent appends.
///
/// Each entry is written with a single `write_all` of a complete line while
/// the writer lock is held, so a concurrent reader of the file only ever sees
/// whole lines plus at most one trailing partial line, which loading drops.
#[derive(Debug)]
pub struct ScoreCache {
    path: Option<PathBuf>,
    values: RwLock<HashMap<ScoreKey, f64>>,
    writer: Mutex<Option<File>>,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        Self { path: None, values: RwLock::new(HashMap::new()), writer: Mutex::new(None) }
    }

    /// Opens (creating if needed) the cache at `path` and loads every complete entry.
    pub fn open(path: &Path) -> Result<Self, ScoreError> {
        let cache_err = |message: String| ScoreError::Cache { path: path.display().to_string(), message };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| cache_err(e.to_string()))?;
        }
        let mut values = HashMap::new();
        let mut valid_len: u64 = 0;
        if path.exists() {
            let file = File::open(path).map_err(|e| cache_err(e.to_string()))?;
            let mut reader = BufReader::new(file);
            let mut line = String::new();
            let mut line_no = 0;
            loop {
                line.clear();
                let n = reader.read_line(&mut line).map_err(|e| cache_err(e.to_string()))?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                if !line.ends_with('\n') {
                    tracing::warn!(path = %path.display(), line_no, "dropping partial trailing cache line");
                    break;
                }
                valid_len += n as u64;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry =
                    serde_json::from_str(&line).map_err(|e| cache_err(format!("line {line_no}: {e}")))?;
                values.entry(entry.key()).or_insert(entry.raw);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| cache_err(e.to_string()))?;
        if file.metadata().map_err(|e| cache_err(e.to_string()))?.len() > valid_len {
            file.set_len(valid_len).map_err(|e| cache_err(e.to_string()))?;
        }
        Ok(Self { path: Some(path.to_owned()), values: RwLock::new(values), writer: Mutex::new(Some(file)) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &ScoreKey) -> Option<f64> {
        self.values.read().expect("cache lock poisoned").get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.values.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every cached `(key, raw)` pair sorted by key.
    pub fn snapshot(&self) -> Vec<(ScoreKey, f64)> {
        let mut all: Vec<_> =
            self.values.read().expect("cache lock poisoned").iter().map(|(k, v)| (k.clone(), *v)).collect();
        all.sort_by(|a, b| a.0.cmp(&b.0));
        all
    }

    /// Records `raw` for `key`. The first value stored for a key wins.
    pub fn insert(&self, key: &ScoreKey, raw: f64, backend: &str, deterministic: bool) -> Result<(), ScoreError> {
        let mut writer = self.writer.lock().expect("cache writer poisoned");
        {
            let mut values = self.values.write().expect("cache lock poisoned");
            if values.contains_key(key) {
                return Ok(());
            }
            values.insert(key.clone(), raw);
        }
        if let Some(file) = writer.as_mut() {
            let entry = CacheEntry {
                ticker: key.ticker.clone(),
                as_of: key.as_of,
                lookback: key.lookback,
                horizon: key.horizon,
                variant: key.variant,
                template_hash: key.template_hash.clone(),
                raw,
                backend: backend.to_owned(),
                scored_at: (!deterministic).then(|| chrono::Utc::now().to_rfc3339()),
            };
            let mut line = serde_json::to_string(&entry).expect("cache entries serialize");
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(|e| ScoreError::Cache {
                path: self.path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }
}
