//! Cross-sectional momentum backtesting with news-conditioned score tilts.

pub mod analytics;
pub mod backtest;
pub mod config;
pub mod error;
pub mod market_data;
pub mod news;
pub mod plot;
pub mod portfolio;
pub mod prompt;
pub mod report;
pub mod scorer;
pub mod search;
pub mod synthetic;
pub mod workflow;

pub use error::{Error, Result};
pub use market_data::{Frequency, ReturnPanel, Ticker};
pub use portfolio::{WeightVector, Weighting};
pub use prompt::PromptVariant;
pub use scorer::{NormalizedScore, RawScore, ScoreKey};
