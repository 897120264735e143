//! Percentile bootstrap intervals and paired bootstrap tests. Each resample
//! draws from its own keyed stream, so results do not depend on thread count.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const DEFAULT_RESAMPLES: usize = 10_000;

fn resample_means(values: &[f64], b: usize, seed: u64) -> Vec<f64> {
    let n = values.len();
    (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = SplitMix64::keyed(seed, &[r as u64]);
            (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64
        })
        .collect()
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile CI of the mean of `correct`, in percent.
pub fn bootstrap_ci(correct: &[bool], b: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if correct.is_empty() {
        return Err(Error::EmptyInput("bootstrap sample"));
    }
    if b == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("bootstrap needs B >= 1 and level in (0, 1); got B={b}, level={level}")));
    }
    let values: Vec<f64> = correct.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
    let mut means = resample_means(&values, b, seed);
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((
        100.0 * quantile_sorted(&means, tail),
        100.0 * quantile_sorted(&means, 1.0 - tail),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PValue {
    Value(f64),
    /// No resample qualified; the bound is `1 / B`.
    LessThan(f64),
}

impl PValue {
    /// Numeric upper bound for comparisons.
    pub fn bound(self) -> f64 {
        match self {
            PValue::Value(p) | PValue::LessThan(p) => p,
        }
    }
}

impl fmt::Display for PValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PValue::Value(p) => write!(f, "p={p}"),
            PValue::LessThan(p) => write!(f, "p<{p}"),
        }
    }
}

impl Serialize for PValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PValue::Value(p) => s.serialize_f64(*p),
            PValue::LessThan(_) => s.serialize_str(&self.to_string()),
        }
    }
}

/// Fraction of resamples whose mean difference is `<= 0`.
pub fn paired_bootstrap_p(diffs: &[f64], b: usize, seed: u64) -> Result<PValue> {
    if diffs.is_empty() {
        return Err(Error::EmptyInput("paired differences"));
    }
    if b == 0 {
        return Err(Error::Config("bootstrap needs B >= 1".into()));
    }
    let hits = resample_means(diffs, b, seed)
        .into_iter()
        .filter(|&m| m <= 0.0)
        .count();
    Ok(if hits == 0 {
        PValue::LessThan(1.0 / b as f64)
    } else {
        PValue::Value(hits as f64 / b as f64)
    })
}
