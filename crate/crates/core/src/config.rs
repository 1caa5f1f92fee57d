//! JSON run configuration. Relative paths resolve against the config file's directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backtest::DEFAULT_COST_BPS;
use crate::error::{Error, Result};
use crate::market_data::Frequency;
use crate::portfolio::Weighting;
use crate::prompt::PromptVariant;
use crate::scorer::{FanOut, LiveConfig, RetryPolicy};
use crate::search::{HyperParams, SampleSplit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Mock,
    Live,
    CacheOnly,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Mock => "mock",
            BackendKind::Live => "live",
            BackendKind::CacheOnly => "cache-only",
        })
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "live" => Ok(BackendKind::Live),
            "cache-only" => Ok(BackendKind::CacheOnly),
            other => Err(Error::Invalid(format!("unknown backend {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub returns: PathBuf,
    pub risk_free: PathBuf,
    pub news: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub url: String,
    pub model: String,
    /// Name of the environment variable that holds the API token.
    pub auth_env: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub retries: u32,
    pub initial_backoff_ms: u64,
    pub requests_per_minute: Option<u32>,
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let live = LiveConfig::default();
        let retry = RetryPolicy::default();
        Self {
            kind: BackendKind::Mock,
            url: live.url,
            model: live.model,
            auth_env: live.auth_env,
            temperature: live.temperature,
            timeout_secs: live.timeout.as_secs(),
            retries: retry.retries,
            initial_backoff_ms: retry.initial_backoff.as_millis() as u64,
            requests_per_minute: None,
            max_in_flight: FanOut::default().max_in_flight,
        }
    }
}

impl BackendConfig {
    pub fn live(&self) -> LiveConfig {
        LiveConfig {
            url: self.url.clone(),
            model: self.model.clone(),
            auth_env: self.auth_env.clone(),
            temperature: self.temperature,
            timeout: Duration::from_secs(self.timeout_secs),
        }
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            retries: self.retries,
            initial_backoff: Duration::from_millis(self.initial_backoff_ms),
            ..RetryPolicy::default()
        }
    }

    pub fn fan_out(&self) -> FanOut {
        FanOut { max_in_flight: self.max_in_flight, requests_per_minute: self.requests_per_minute }
    }
}

fn default_params() -> HyperParams {
    HyperParams {
        tau: Frequency::Monthly,
        k: 5,
        m: 50,
        prompt: PromptVariant::Advanced,
        cap: true,
        weighting: Weighting::Value,
        eta: 2.5,
    }
}

fn default_cost() -> f64 {
    DEFAULT_COST_BPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataPaths,
    pub score_cache: PathBuf,
    /// Directory holding `basic.txt` and `advanced.txt`; built-in templates when absent.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub split: SampleSplit,
    #[serde(default = "default_params")]
    pub params: HyperParams,
    #[serde(default = "default_cost")]
    pub cost_bps: f64,
}

impl RunConfig {
    /// A config over `data` with every other field at its default.
    pub fn new(data: DataPaths, score_cache: PathBuf) -> Self {
        Self {
            data,
            score_cache,
            templates: None,
            output: None,
            backend: BackendConfig::default(),
            split: SampleSplit::default(),
            params: default_params(),
            cost_bps: DEFAULT_COST_BPS,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.line(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.returns);
        fix(&mut self.data.risk_free);
        fix(&mut self.data.news);
        fix(&mut self.score_cache);
        if let Some(t) = self.templates.as_mut() {
            fix(t);
        }
        if let Some(o) = self.output.as_mut() {
            fix(o);
        }
    }

    pub fn validate(&self) -> Result<()> {
        SampleSplit::new(self.split.validation, self.split.test)?;
        if !(self.cost_bps.is_finite() && self.cost_bps >= 0.0) {
            return Err(Error::Invalid(format!("cost_bps must be non-negative, got {}", self.cost_bps)));
        }
        if self.backend.max_in_flight == 0 {
            return Err(Error::Invalid("backend.max_in_flight must be at least 1".into()));
        }
        if !(self.params.eta.is_finite() && self.params.eta > 0.0) {
            return Err(Error::InvalidMultiplier(self.params.eta));
        }
        Ok(())
    }

    /// Pretty JSON with paths written as given.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
