//! Candidate selection, baseline weighting, score tilt and the per-name cap.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::Ticker;
use crate::scorer::NormalizedScore;

/// Per-stock cap used when the constraint is switched on.
pub const WEIGHT_CAP: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Equal,
    Value,
}

impl Weighting {
    pub const ALL: [Weighting; 2] = [Weighting::Equal, Weighting::Value];
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Equal => "equal",
            Weighting::Value => "value",
        })
    }
}

impl FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "equal" | "ew" => Ok(Weighting::Equal),
            "value" | "vw" => Ok(Weighting::Value),
            other => Err(format!("unknown weighting scheme `{other}`")),
        }
    }
}

/// Long-only target weights on one date, in holding order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub date: NaiveDate,
    pub weights: Vec<(Ticker, f64)>,
}

impl WeightVector {
    pub fn new(date: NaiveDate, weights: Vec<(Ticker, f64)>) -> Self {
        Self { date, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().map(|(_, w)| w).sum()
    }

    pub fn get(&self, ticker: &str) -> Option<f64> {
        self.weights.iter().find(|(t, _)| t.as_str() == ticker).map(|(_, w)| *w)
    }

    pub fn tickers(&self) -> impl Iterator<Item = &Ticker> {
        self.weights.iter().map(|(t, _)| t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub date: NaiveDate,
    /// Candidate pool in momentum-rank order.
    pub candidates: Vec<Ticker>,
    pub scores: HashMap<Ticker, NormalizedScore>,
    pub selected: Vec<Ticker>,
}

/// Picks the top `m` candidates by score, breaking ties by momentum rank
/// (position in `candidates`) and then ticker. Unscored candidates count as 0.
pub fn select(
    date: NaiveDate,
    candidates: &[Ticker],
    scores: &HashMap<Ticker, NormalizedScore>,
    m: usize,
) -> SelectionResult {
    let score_of = |t: &Ticker| scores.get(t).copied().unwrap_or_default().value();
    let mut order: Vec<(usize, &Ticker)> = candidates.iter().enumerate().collect();
    order.sort_by(|(ra, a), (rb, b)| score_of(b).total_cmp(&score_of(a)).then(ra.cmp(rb)).then_with(|| a.cmp(b)));
    let selected = order.into_iter().take(m).map(|(_, t)| t.clone()).collect();
    SelectionResult { date, candidates: candidates.to_vec(), scores: scores.clone(), selected }
}

/// Equal (1/m) or market-cap-proportional weights over `selected`.
pub fn baseline_weights(
    date: NaiveDate,
    selected: &[Ticker],
    scheme: Weighting,
    market_cap: impl Fn(&Ticker) -> Option<f64>,
) -> Result<WeightVector> {
    if selected.is_empty() {
        return Err(Error::Invalid(format!("no holdings selected on {date}")));
    }
    let weights = match scheme {
        Weighting::Equal => {
            let w = 1.0 / selected.len() as f64;
            selected.iter().map(|t| (t.clone(), w)).collect()
        }
        Weighting::Value => {
            let caps = selected
                .iter()
                .map(|t| {
                    market_cap(t)
                        .filter(|c| *c > 0.0)
                        .ok_or_else(|| Error::MissingMarketCap { ticker: t.to_string(), date })
                })
                .collect::<Result<Vec<f64>>>()?;
            let total: f64 = caps.iter().sum();
            selected.iter().zip(caps).map(|(t, c)| (t.clone(), c / total)).collect()
        }
    };
    Ok(WeightVector::new(date, weights))
}

/// Multiplies each weight by `eta^score` and renormalizes. Returns `base`
/// unchanged when every multiplier is exactly one.
pub fn tilt(base: &WeightVector, scores: &HashMap<Ticker, NormalizedScore>, eta: f64) -> Result<WeightVector> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidMultiplier(eta));
    }
    let multipliers: Vec<f64> =
        base.weights.iter().map(|(t, _)| eta.powf(scores.get(t).copied().unwrap_or_default().value())).collect();
    if multipliers.iter().all(|m| *m == 1.0) {
        return Ok(base.clone());
    }
    let raw: Vec<f64> = base.weights.iter().zip(&multipliers).map(|((_, w), m)| w * m).collect();
    let total: f64 = raw.iter().sum();
    Ok(WeightVector::new(base.date, base.weights.iter().zip(raw).map(|((t, _), w)| (t.clone(), w / total)).collect()))
}

/// Caps every weight at `cap`, handing the excess to uncapped names in
/// proportion to their weight until no name exceeds the cap.
pub fn apply_cap(w: &WeightVector, cap: f64) -> Result<WeightVector> {
    let n = w.len();
    if (n as f64) * cap < 1.0 - 1e-12 {
        return Err(Error::InfeasibleCap { holdings: n, cap });
    }
    if w.weights.iter().all(|(_, x)| *x <= cap) {
        return Ok(w.clone());
    }

    // Sum in ticker order so the result does not depend on holding order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| w.weights[*a].0.cmp(&w.weights[*b].0));

    let original: Vec<f64> = w.weights.iter().map(|(_, x)| *x).collect();
    let mut capped = vec![false; n];
    let mut out = original.clone();
    for _ in 0..=n {
        let n_capped = capped.iter().filter(|c| **c).count();
        let remaining = 1.0 - cap * n_capped as f64;
        let free_total: f64 = order.iter().filter(|i| !capped[**i]).map(|i| original[*i]).sum();
        let n_free = n - n_capped;
        for i in 0..n {
            out[i] = if capped[i] {
                cap
            } else if free_total > 0.0 {
                original[i] * remaining / free_total
            } else {
                remaining / n_free as f64
            };
        }
        let mut changed = false;
        for i in 0..n {
            if !capped[i] && out[i] > cap {
                capped[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(WeightVector::new(w.date, w.weights.iter().zip(out).map(|((t, _), x)| (t.clone(), x)).collect()))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn day() -> NaiveDate {
        "2024-01-31".parse().unwrap()
    }

    fn tickers(names: &[&str]) -> Vec<Ticker> {
        names.iter().map(|n| Ticker::from(*n)).collect()
    }

    fn scores(pairs: &[(&str, f64)]) -> HashMap<Ticker, NormalizedScore> {
        pairs.iter().map(|(t, s)| (Ticker::from(*t), NormalizedScore(*s))).collect()
    }

    fn wv(values: &[f64]) -> WeightVector {
        WeightVector::new(
            day(),
            values.iter().enumerate().map(|(i, v)| (Ticker::new(format!("T{i:02}")), *v)).collect(),
        )
    }

    #[test]
    fn select_examples() {
        let c = tickers(&["A", "B", "C"]);
        let r = select(day(), &c, &scores(&[("A", 0.9), ("B", -0.5), ("C", 0.1)]), 2);
        assert_eq!(r.selected, tickers(&["A", "C"]));

        let c = tickers(&["Z", "Y", "X", "W"]);
        let r = select(day(), &c, &scores(&[]), 3);
        assert_eq!(r.selected, tickers(&["Z", "Y", "X"]));

        let r = select(day(), &c, &scores(&[]), 10);
        assert_eq!(r.selected.len(), 4);
    }

    #[test]
    fn select_matches_sort_oracle() {
        // 100 candidates with pseudo-random scores on a coarse grid to force ties.
        let c: Vec<Ticker> = (0..100).map(|i| Ticker::new(format!("S{:03}", (i * 37) % 100))).collect();
        let sc: HashMap<Ticker, NormalizedScore> = c
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), NormalizedScore(((i * 7919) % 11) as f64 / 5.0 - 1.0)))
            .collect();
        let got = select(day(), &c, &sc, 50).selected;

        let mut oracle: Vec<(f64, usize, String)> =
            c.iter().enumerate().map(|(rank, t)| (-sc[t].0, rank, t.to_string())).collect();
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected: Vec<Ticker> = oracle.into_iter().take(50).map(|(_, _, t)| Ticker::new(t)).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn baseline_equal_and_value() {
        let sel = tickers(&["A", "B", "C", "D"]);
        let eq = baseline_weights(day(), &sel, Weighting::Equal, |_| None).unwrap();
        assert!(eq.weights.iter().all(|(_, w)| *w == 0.25));

        let sel = tickers(&["A", "B", "C"]);
        let caps: HashMap<&str, f64> = [("A", 2.0), ("B", 1.0), ("C", 1.0)].into();
        let vw = baseline_weights(day(), &sel, Weighting::Value, |t| caps.get(t.as_str()).copied()).unwrap();
        assert_eq!(vw.weights.iter().map(|(_, w)| *w).collect::<Vec<_>>(), [0.5, 0.25, 0.25]);

        assert!(matches!(
            baseline_weights(day(), &sel, Weighting::Value, |t| (t.as_str() != "B").then_some(1.0)),
            Err(Error::MissingMarketCap { .. })
        ));
    }

    #[test]
    fn value_weights_match_normalization_oracle() {
        let sel: Vec<Ticker> = (0..50).map(|i| Ticker::new(format!("V{i:02}"))).collect();
        let cap_of = |t: &Ticker| -> f64 {
            let i: f64 = t[1..].parse().unwrap();
            1.0e9 * (1.0 + (i * 0.37).sin().abs() * 40.0)
        };
        let got = baseline_weights(day(), &sel, Weighting::Value, |t| Some(cap_of(t))).unwrap();
        let total: f64 = sel.iter().map(cap_of).sum();
        for (t, w) in &got.weights {
            assert!((w - cap_of(t) / total).abs() < 1e-12);
        }
    }

    #[test]
    fn tilt_hand_computed() {
        let base = WeightVector::new(day(), tickers(&["A", "B", "C"]).into_iter().map(|t| (t, 1.0 / 3.0)).collect());
        let out = tilt(&base, &scores(&[("A", -1.0), ("B", 0.0), ("C", 1.0)]), 5.0).unwrap();
        // (0.2, 1, 5) / 6.2
        let expected = [0.032258064516129, 0.161290322580645, 0.806451612903226];
        for ((_, w), e) in out.weights.iter().zip(expected) {
            assert!((w - e).abs() < 1e-9, "{w} vs {e}");
        }
    }

    #[test]
    fn tilt_identity_cases_are_exact() {
        let base = wv(&[0.1, 0.2, 0.3, 0.4]);
        let zero = scores(&[("T00", 0.0), ("T01", 0.0)]);
        assert_eq!(tilt(&base, &zero, 3.75).unwrap(), base);
        let any = scores(&[("T00", 0.7), ("T01", -0.3), ("T02", 1.0)]);
        assert_eq!(tilt(&base, &any, 1.0).unwrap(), base);
        assert!(matches!(tilt(&base, &any, 0.0), Err(Error::InvalidMultiplier(_))));
        assert!(matches!(tilt(&base, &any, -2.0), Err(Error::InvalidMultiplier(_))));
    }

    /// Water-filling oracle: find `s` with sum(min(cap, s*w_i)) = 1 by bisection.
    fn water_fill(w: &[f64], cap: f64) -> Vec<f64> {
        let total = |s: f64| w.iter().map(|x| (s * x).min(cap)).sum::<f64>();
        let (mut lo, mut hi) = (0.0, 1.0);
        while total(hi) < 1.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        w.iter().map(|x| (hi * x).min(cap)).collect()
    }

    #[test]
    fn cap_example_matches_oracle() {
        let w = wv(&[0.40, 0.30, 0.10, 0.10, 0.05, 0.03, 0.02]);
        let out = apply_cap(&w, 0.35).unwrap();
        let got: Vec<f64> = out.weights.iter().map(|(_, x)| *x).collect();
        let oracle = water_fill(&[0.40, 0.30, 0.10, 0.10, 0.05, 0.03, 0.02], 0.35);
        for (g, o) in got.iter().zip(&oracle) {
            assert!((g - o).abs() < 1e-12, "{g} vs {o}");
        }
        assert_eq!(got[0], 0.35);
        assert!((got[1] - 0.325).abs() < 1e-12);
        assert!((out.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cap_fixed_point_and_infeasible() {
        let w = wv(&[0.1; 10]);
        assert_eq!(apply_cap(&w, WEIGHT_CAP).unwrap(), w);
        let six = wv(&[1.0 / 6.0; 6]);
        assert!(matches!(apply_cap(&six, WEIGHT_CAP), Err(Error::InfeasibleCap { holdings: 6, .. })));
    }

    #[test]
    fn cap_cascades() {
        // Capping the first name pushes the second over the cap as well.
        let w = wv(&[0.5, 0.14, 0.09, 0.09, 0.09, 0.09]);
        let out = apply_cap(&w, 0.2).unwrap();
        let got: Vec<f64> = out.weights.iter().map(|(_, x)| *x).collect();
        let oracle = water_fill(&[0.5, 0.14, 0.09, 0.09, 0.09, 0.09], 0.2);
        for (g, o) in got.iter().zip(&oracle) {
            assert!((g - o).abs() < 1e-12);
        }
        assert_eq!(got[0], 0.2);
        assert_eq!(got[1], 0.2);
    }

    fn arb_weights() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.001f64..10.0, 7..60).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn cap_is_idempotent_and_order_independent(w in arb_weights(), seed in any::<u64>()) {
            let vec = wv(&w);
            let once = apply_cap(&vec, WEIGHT_CAP).unwrap();
            let twice = apply_cap(&once, WEIGHT_CAP).unwrap();
            prop_assert_eq!(&once, &twice);

            let mut shuffled = vec.weights.clone();
            let len = shuffled.len();
            shuffled.rotate_left((seed as usize) % len);
            let rotated = apply_cap(&WeightVector::new(day(), shuffled), WEIGHT_CAP).unwrap();
            for (t, x) in &once.weights {
                prop_assert_eq!(rotated.get(t).unwrap().to_bits(), x.to_bits());
            }
        }

        #[test]
        fn selection_invariant_under_monotone_transform(raw in prop::collection::vec(-1.0f64..1.0, 1..80), m in 1usize..80) {
            let c: Vec<Ticker> = (0..raw.len()).map(|i| Ticker::new(format!("C{i:03}"))).collect();
            let s: HashMap<Ticker, NormalizedScore> = c.iter().cloned().zip(raw.iter().map(|x| NormalizedScore(*x))).collect();
            let t: HashMap<Ticker, NormalizedScore> = s.iter().map(|(k, v)| (k.clone(), NormalizedScore((3.0 * v.0).exp() - 7.0))).collect();
            prop_assert_eq!(select(day(), &c, &s, m).selected, select(day(), &c, &t, m).selected);
        }

        #[test]
        fn tilt_monotone_for_equal_base(sa in -1.0f64..1.0, sb in -1.0f64..1.0, eta in 1.01f64..6.0) {
            prop_assume!((sa - sb).abs() > 1e-6);
            let base = WeightVector::new(day(), tickers(&["A", "B", "C"]).into_iter().map(|t| (t, 1.0 / 3.0)).collect());
            let out = tilt(&base, &scores(&[("A", sa), ("B", sb), ("C", 0.0)]), eta).unwrap();
            prop_assert_eq!(sa > sb, out.get("A").unwrap() > out.get("B").unwrap());
        }
    }
}
