//! Prompt scoring: reply parsing, normalization, the persistent score cache
//! and bounded fan-out over a pluggable backend.

mod backend;
mod cache;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    mock_raw_value, BackendFailure, CacheOnlyBackend, LiveBackend, LiveConfig, MockBackend, ScoreBackend,
};
pub use cache::{CacheEntry, ScoreCache};

use crate::market_data::Ticker;
use crate::prompt::{PromptVariant, RenderedPrompt};

/// Uniquely identifies one scoring decision.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScoreKey {
    pub ticker: Ticker,
    pub as_of: NaiveDate,
    pub lookback: u32,
    pub horizon: u32,
    pub variant: PromptVariant,
    pub template_hash: String,
}

impl ScoreKey {
    /// Stable text form; the mock backend digests exactly these bytes.
    pub fn canonical(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}",
            self.ticker, self.as_of, self.lookback, self.horizon, self.variant, self.template_hash
        )
    }
}

impl fmt::Display for ScoreKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} k={} l={} {}", self.ticker, self.as_of, self.lookback, self.horizon, self.variant)
    }
}

/// Model score in `[0, 1]`, or missing when the news window was empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawScore {
    pub value: Option<f64>,
}

impl RawScore {
    pub const MISSING: RawScore = RawScore { value: None };

    pub fn new(value: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&value));
        RawScore { value: Some(value) }
    }

    pub fn is_missing(&self) -> bool {
        self.value.is_none()
    }
}

/// Score mapped onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct NormalizedScore(pub f64);

impl NormalizedScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// `2v - 1` on the 4-decimal grid; missing maps to the neutral 0.
pub fn normalize(raw: RawScore) -> NormalizedScore {
    match raw.value {
        Some(v) => NormalizedScore(round4(2.0 * v - 1.0)),
        None => NormalizedScore(0.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplyError {
    NotNumeric,
}

/// Parses a bare decimal with optional surrounding whitespace. Values outside
/// `[0, 1]` are clamped; the flag reports whether clamping happened.
pub fn parse_reply(reply: &str) -> Result<(f64, bool), ReplyError> {
    let s = reply.trim();
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (int, frac) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    let well_formed = int.bytes().all(|b| b.is_ascii_digit())
        && frac.bytes().all(|b| b.is_ascii_digit())
        && (!int.is_empty() || !frac.is_empty());
    if !well_formed {
        return Err(ReplyError::NotNumeric);
    }
    let v: f64 = s.parse().map_err(|_| ReplyError::NotNumeric)?;
    if !v.is_finite() {
        return Err(ReplyError::NotNumeric);
    }
    let clamped = v.clamp(0.0, 1.0);
    Ok((round4(clamped), clamped != v))
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("non-numeric reply for {key} after {attempts} attempt(s): {reply:?}")]
    NonNumeric { key: ScoreKey, reply: String, attempts: u32 },

    #[error("backend failure for {key} after {attempts} attempt(s): {message}")]
    Transport { key: ScoreKey, message: String, attempts: u32 },

    #[error("backend unavailable for {key}: {message}")]
    Unavailable { key: ScoreKey, message: String },

    #[error("score cache {path}: {message}")]
    Cache { path: String, message: String },

    #[error("{} of {total} scoring requests failed; first: {}", failures.len(), failures[0])]
    Batch { total: usize, failures: Vec<ScoreError> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Additional attempts after the first.
    pub retries: u32,
    pub initial_backoff: Duration,
    pub backoff_factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { retries: 3, initial_backoff: Duration::from_millis(500), backoff_factor: 2.0 }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        self.initial_backoff.mul_f64(self.backoff_factor.powi(attempt as i32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanOut {
    pub max_in_flight: usize,
    /// `None` disables the rate budget.
    pub requests_per_minute: Option<u32>,
}

impl Default for FanOut {
    fn default() -> Self {
        Self { max_in_flight: 8, requests_per_minute: None }
    }
}

/// Spaces request starts evenly to respect a per-minute budget.
#[derive(Debug)]
struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn new(requests_per_minute: Option<u32>) -> Self {
        Self {
            interval: requests_per_minute.filter(|r| *r > 0).map(|r| Duration::from_secs(60) / r),
            next: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        let Some(interval) = self.interval else { return };
        let slot = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            thread::sleep(slot - now);
        }
    }
}

/// One prompt to score.
#[derive(Debug, Clone)]
pub struct ScoreRequest {
    pub key: ScoreKey,
    pub prompt: RenderedPrompt,
    /// True when the news window had no items; the backend is skipped.
    pub empty_window: bool,
}

/// Counters exposed for reporting and tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoreStats {
    pub backend_calls: usize,
    pub cache_hits: usize,
    pub missing: usize,
    pub clamped: usize,
}

/// One pending remote call: the score plus the raw value still to be cached.
type RemoteSlot = Mutex<Option<Result<(RawScore, f64), ScoreError>>>;

pub struct Scorer {
    backend: Arc<dyn ScoreBackend>,
    cache: Arc<ScoreCache>,
    retry: RetryPolicy,
    fan_out: FanOut,
    limiter: RateLimiter,
    backend_calls: AtomicUsize,
    cache_hits: AtomicUsize,
    missing: AtomicUsize,
    clamped: AtomicUsize,
}

impl fmt::Debug for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scorer")
            .field("backend", &self.backend.name())
            .field("retry", &self.retry)
            .field("fan_out", &self.fan_out)
            .finish()
    }
}

impl Scorer {
    pub fn new(backend: Arc<dyn ScoreBackend>, cache: Arc<ScoreCache>) -> Self {
        Self::with_policy(backend, cache, RetryPolicy::default(), FanOut::default())
    }

    pub fn with_policy(
        backend: Arc<dyn ScoreBackend>,
        cache: Arc<ScoreCache>,
        retry: RetryPolicy,
        fan_out: FanOut,
    ) -> Self {
        Self {
            limiter: RateLimiter::new(fan_out.requests_per_minute),
            backend,
            cache,
            retry,
            fan_out,
            backend_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
            missing: AtomicUsize::new(0),
            clamped: AtomicUsize::new(0),
        }
    }

    pub fn cache(&self) -> &ScoreCache {
        &self.cache
    }

    pub fn stats(&self) -> ScoreStats {
        ScoreStats {
            backend_calls: self.backend_calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
            missing: self.missing.load(Ordering::Relaxed),
            clamped: self.clamped.load(Ordering::Relaxed),
        }
    }

    /// Scores one prompt: empty window, then cache, then backend with retries.
    pub fn score(&self, request: &ScoreRequest) -> Result<RawScore, ScoreError> {
        if let Some(resolved) = self.resolve_locally(request) {
            return Ok(resolved);
        }
        self.score_remote(request, true).map(|(v, _)| v)
    }

    fn resolve_locally(&self, request: &ScoreRequest) -> Option<RawScore> {
        if request.empty_window {
            self.missing.fetch_add(1, Ordering::Relaxed);
            return Some(RawScore::MISSING);
        }
        let hit = self.cache.get(&request.key)?;
        self.cache_hits.fetch_add(1, Ordering::Relaxed);
        Some(RawScore::new(hit))
    }

    /// With `persist` off the caller must store the returned value itself.
    fn score_remote(&self, request: &ScoreRequest, persist: bool) -> Result<(RawScore, f64), ScoreError> {
        let key = &request.key;
        let attempts = self.retry.retries + 1;
        let mut last_reply = String::new();
        let mut transport_error: Option<String> = None;
        for attempt in 0..attempts {
            if attempt > 0 && transport_error.is_some() {
                thread::sleep(self.retry.delay(attempt - 1));
            }
            self.limiter.acquire();
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            match self.backend.complete(key, &request.prompt.text) {
                Ok(reply) => {
                    transport_error = None;
                    match parse_reply(&reply) {
                        Ok((value, clamped)) => {
                            if clamped {
                                self.clamped.fetch_add(1, Ordering::Relaxed);
                                tracing::warn!(%key, reply = %reply.trim(), value, "score outside [0, 1] clamped");
                            }
                            if persist {
                                self.persist(key, value)?;
                            }
                            return Ok((RawScore::new(value), value));
                        }
                        Err(ReplyError::NotNumeric) => {
                            tracing::warn!(%key, attempt, reply = %reply, "non-numeric reply");
                            last_reply = reply;
                        }
                    }
                }
                Err(BackendFailure::Transport(msg)) => {
                    tracing::warn!(%key, attempt, error = %msg, "backend transport failure");
                    transport_error = Some(msg);
                }
                Err(BackendFailure::Unavailable(message)) => {
                    return Err(ScoreError::Unavailable { key: key.clone(), message })
                }
            }
        }
        Err(match transport_error {
            Some(message) => ScoreError::Transport { key: key.clone(), message, attempts },
            None => ScoreError::NonNumeric { key: key.clone(), reply: last_reply, attempts },
        })
    }

    fn persist(&self, key: &ScoreKey, value: f64) -> Result<(), ScoreError> {
        self.cache.insert(key, value, &self.backend.name(), self.backend.is_deterministic())?;
        Ok(())
    }

    /// Scores every request, in input order, with at most `max_in_flight`
    /// concurrent backend calls. Fails only if some request hard-fails, and
    /// then reports all failures.
    pub fn batch_score(&self, requests: &[ScoreRequest]) -> Result<Vec<RawScore>, ScoreError> {
        let mut results: Vec<Option<Result<RawScore, ScoreError>>> =
            requests.iter().map(|r| self.resolve_locally(r).map(Ok)).collect();
        let pending: Vec<usize> = results.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(i, _)| i).collect();

        if !pending.is_empty() {
            // A deterministic backend's replies are appended once the batch
            // joins, in input order, so the cache file is reproducible. Live
            // replies are stored as they arrive so a crash keeps them.
            let deferred = self.backend.is_deterministic();
            let slots: Vec<RemoteSlot> = pending.iter().map(|_| Mutex::new(None)).collect();
            let cursor = AtomicUsize::new(0);
            let workers = self.fan_out.max_in_flight.max(1).min(pending.len());
            thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let n = cursor.fetch_add(1, Ordering::Relaxed);
                        let Some(&idx) = pending.get(n) else { break };
                        let outcome = self.score_remote(&requests[idx], !deferred);
                        *slots[n].lock().expect("slot poisoned") = Some(outcome);
                    });
                }
            });
            for (slot, idx) in slots.into_iter().zip(&pending) {
                let outcome = slot.into_inner().expect("slot poisoned").expect("every pending request ran");
                results[*idx] = Some(match outcome {
                    Ok((raw, value)) if deferred => self.persist(&requests[*idx].key, value).map(|_| raw),
                    other => other.map(|(raw, _)| raw),
                });
            }
        }

        let mut values = Vec::with_capacity(requests.len());
        let mut failures = Vec::new();
        for r in results {
            match r.expect("every request resolved") {
                Ok(v) => values.push(v),
                Err(e) => failures.push(e),
            }
        }
        if failures.is_empty() {
            Ok(values)
        } else {
            Err(ScoreError::Batch { total: requests.len(), failures })
        }
    }
}
