use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::Frequency;
use crate::portfolio::Weighting;
use crate::prompt::PromptVariant;

pub const K_OPTIONS: [u32; 2] = [1, 5];
pub const M_OPTIONS: [usize; 4] = [25, 50, 75, 100];
pub const ETA_OPTIONS: [f64; 4] = [1.25, 2.5, 3.75, 5.0];
pub const CAP_OPTIONS: [bool; 2] = [false, true];

/// One strategy configuration. The horizon `l` is not free: it follows the
/// rebalance frequency (5 days weekly, 21 days monthly).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub tau: Frequency,
    /// News lookback in business days.
    pub k: u32,
    /// Portfolio size.
    pub m: usize,
    pub prompt: PromptVariant,
    pub cap: bool,
    pub weighting: Weighting,
    pub eta: f64,
}

impl HyperParams {
    pub fn horizon(&self) -> u32 {
        self.tau.horizon_days()
    }
}

impl Eq for HyperParams {}

impl Ord for HyperParams {
    /// Lexicographic over (tau, k, m, prompt, cap, weighting, eta).
    fn cmp(&self, other: &Self) -> Ordering {
        self.tau
            .cmp(&other.tau)
            .then(self.k.cmp(&other.k))
            .then(self.m.cmp(&other.m))
            .then(self.prompt.cmp(&other.prompt))
            .then(self.cap.cmp(&other.cap))
            .then(self.weighting.cmp(&other.weighting))
            .then(self.eta.total_cmp(&other.eta))
    }
}

impl PartialOrd for HyperParams {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tau={} k={} l={} m={} prompt={} cap={} w={} eta={}",
            self.tau,
            self.k,
            self.horizon(),
            self.m,
            self.prompt,
            on_off(self.cap),
            self.weighting,
            self.eta
        )
    }
}

/// Every grid point in lexicographic order; 512 in total.
pub fn enumerate_grid() -> Vec<HyperParams> {
    let mut out = Vec::with_capacity(512);
    for tau in Frequency::ALL {
        for k in K_OPTIONS {
            for m in M_OPTIONS {
                for prompt in PromptVariant::ALL {
                    for cap in CAP_OPTIONS {
                        for weighting in Weighting::ALL {
                            for eta in ETA_OPTIONS {
                                out.push(HyperParams { tau, k, m, prompt, cap, weighting, eta });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// The seven free dimensions of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Param {
    Tau,
    K,
    M,
    Prompt,
    Cap,
    Weighting,
    Eta,
}

impl Param {
    pub const ALL: [Param; 7] =
        [Param::Tau, Param::K, Param::M, Param::Prompt, Param::Cap, Param::Weighting, Param::Eta];

    pub fn name(self) -> &'static str {
        match self {
            Param::Tau => "tau",
            Param::K => "k",
            Param::M => "m",
            Param::Prompt => "prompt",
            Param::Cap => "cap",
            Param::Weighting => "weighting",
            Param::Eta => "eta",
        }
    }

    /// `base` with this parameter set to each admissible value, in grid order.
    pub fn sweep(self, base: &HyperParams) -> Vec<HyperParams> {
        let b = *base;
        match self {
            Param::Tau => Frequency::ALL.iter().map(|&tau| HyperParams { tau, ..b }).collect(),
            Param::K => K_OPTIONS.iter().map(|&k| HyperParams { k, ..b }).collect(),
            Param::M => M_OPTIONS.iter().map(|&m| HyperParams { m, ..b }).collect(),
            Param::Prompt => PromptVariant::ALL.iter().map(|&prompt| HyperParams { prompt, ..b }).collect(),
            Param::Cap => CAP_OPTIONS.iter().map(|&cap| HyperParams { cap, ..b }).collect(),
            Param::Weighting => Weighting::ALL.iter().map(|&weighting| HyperParams { weighting, ..b }).collect(),
            Param::Eta => ETA_OPTIONS.iter().map(|&eta| HyperParams { eta, ..b }).collect(),
        }
    }

    /// The value of this parameter in `p`, formatted for tables.
    pub fn value_of(self, p: &HyperParams) -> String {
        match self {
            Param::Tau => p.tau.to_string(),
            Param::K => p.k.to_string(),
            Param::M => p.m.to_string(),
            Param::Prompt => p.prompt.to_string(),
            Param::Cap => on_off(p.cap).to_string(),
            Param::Weighting => p.weighting.to_string(),
            Param::Eta => p.eta.to_string(),
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownParameter(s.to_owned()))
    }
}

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

impl DateRange {
    pub fn new(from: NaiveDate, to: NaiveDate) -> Result<Self> {
        if from > to {
            return Err(Error::Invalid(format!("empty date range {from}..{to}")));
        }
        Ok(Self { from, to })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.from <= d && d <= self.to
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.from, self.to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSplit {
    pub validation: DateRange,
    pub test: DateRange,
}

impl Default for SampleSplit {
    fn default() -> Self {
        let d = |s: &str| s.parse::<NaiveDate>().expect("valid literal date");
        Self {
            validation: DateRange { from: d("2019-10-01"), to: d("2023-12-31") },
            test: DateRange { from: d("2024-01-01"), to: d("2025-03-31") },
        }
    }
}

impl SampleSplit {
    pub fn new(validation: DateRange, test: DateRange) -> Result<Self> {
        if validation.from > validation.to || test.from > test.to {
            return Err(Error::Invalid("split ranges must be non-empty".into()));
        }
        if validation.to >= test.from {
            return Err(Error::Invalid(format!("validation {validation} must end before test {test} starts")));
        }
        Ok(Self { validation, test })
    }

    /// Both windows together.
    pub fn full(&self) -> DateRange {
        DateRange { from: self.validation.from, to: self.test.to }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_size_and_order() {
        let g = enumerate_grid();
        assert_eq!(g.len(), 512);
        assert_eq!(
            g[0],
            HyperParams {
                tau: Frequency::Weekly,
                k: 1,
                m: 25,
                prompt: PromptVariant::Basic,
                cap: false,
                weighting: Weighting::Equal,
                eta: 1.25
            }
        );
        assert_eq!(g[0].horizon(), 5);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.iter().filter(|p| p.tau == Frequency::Monthly).count(), 256);
        assert!(g.iter().all(|p| p.horizon() == if p.tau == Frequency::Weekly { 5 } else { 21 }));
    }

    #[test]
    fn sweeps_contain_the_base() {
        let base = enumerate_grid()[300];
        for p in Param::ALL {
            let s = p.sweep(&base);
            assert_eq!(s.iter().filter(|x| **x == base).count(), 1, "{p}");
        }
        assert_eq!(Param::M.sweep(&base).len(), 4);
        assert_eq!(Param::Prompt.sweep(&base).len(), 2);
    }

    #[test]
    fn parameter_names_parse() {
        for p in Param::ALL {
            assert_eq!(p.name().parse::<Param>().unwrap(), p);
        }
        assert!(matches!("l".parse::<Param>(), Err(Error::UnknownParameter(_))));
    }

    #[test]
    fn split_validation() {
        let s = SampleSplit::default();
        assert!(SampleSplit::new(s.validation, s.test).is_ok());
        assert!(SampleSplit::new(s.test, s.validation).is_err());
    }

    #[test]
    fn params_round_trip_json() {
        let p = enumerate_grid()[77];
        let back: HyperParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
