use std::path::PathBuf;

use chrono::{NaiveDate, NaiveDateTime};
use thiserror::Error;

use crate::scorer::ScoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A row or record that failed validation. `line` is 1-based and counts the header.
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },

    #[error("date {0} is not a trading date in the panel")]
    UnknownDate(NaiveDate),

    #[error("insufficient history at {date}: need {needed} prior trading days, have {available}")]
    InsufficientHistory { date: NaiveDate, needed: usize, available: usize },

    #[error("no eligible tickers on {0}")]
    NoEligibleTickers(NaiveDate),

    #[error("decile split needs at least 10 eligible tickers, got {0}")]
    TooFewForDeciles(usize),

    #[error("missing market cap for {ticker} on {date}")]
    MissingMarketCap { ticker: String, date: NaiveDate },

    #[error("tilt multiplier must be positive, got {0}")]
    InvalidMultiplier(f64),

    #[error(
        "weight cap {cap} is infeasible for {holdings} holdings ({holdings} x {cap} < 1); \
         increase m or disable the cap"
    )]
    InfeasibleCap { holdings: usize, cap: f64 },

    #[error("published_at {published_at} is after as_of {as_of}")]
    PublishedAfterAsOf { published_at: NaiveDateTime, as_of: NaiveDateTime },

    #[error("portfolio wiped out on {0}: gross value fell to or below zero")]
    PortfolioWipedOut(NaiveDate),

    #[error("regressor has zero variance")]
    DegenerateRegressor,

    #[error("series misaligned: {0}")]
    Misaligned(String),

    #[error("not enough observations: need {needed}, have {available}")]
    TooFewObservations { needed: usize, available: usize },

    #[error("unknown parameter `{0}`; expected one of tau, k, m, prompt, cap, weighting, eta")]
    UnknownParameter(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Score(#[from] ScoreError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Malformed { path: path.into(), line, message: message.into() }
    }
}
