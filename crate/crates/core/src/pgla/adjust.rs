//! The confidence-gated rejection-logit boost.
//!
//! With `g = p_mis^p` and `Δ = max(L_A..L_D) - max(L_E, L_F)`:
//!
//! ```text
//! boost = sigmoid(gamma * (g - alpha_thresh)) * (s * Δ + delta)
//! L'_E  = L_E + boost - beta / 2
//! L'_F  = L_F + boost + beta / 2
//! ```
//!
//! Content logits A-D pass through untouched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logistic::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PglaConfig {
    pub gamma: f64,
    pub p: f64,
    pub alpha_thresh: f64,
    pub s: f64,
    pub delta: f64,
    pub beta: f64,
}

impl PglaConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [("gamma", self.gamma), ("p", self.p), ("s", self.s), ("delta", self.delta)];
        if let Some((name, v)) = pos.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
        if !(self.alpha_thresh > 0.0 && self.alpha_thresh <= 1.0) {
            return Err(Error::Config(format!(
                "alpha_thresh must lie in (0, 1], got {}",
                self.alpha_thresh
            )));
        }
        if !self.beta.is_finite() {
            return Err(Error::Config("beta must be finite".into()));
        }
        Ok(())
    }

    pub fn gate(&self, p_mis: f64) -> f64 {
        sigmoid(self.gamma * (p_mis.powf(self.p) - self.alpha_thresh))
    }
}

/// Content-minus-rejection gap `max(A..D) - max(E, F)`.
pub fn logit_gap(logits: &[f64; 6]) -> f64 {
    let content = logits[..4].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    content - logits[4].max(logits[5])
}

pub fn apply_pgla(logits: &[f64; 6], p_mis: f64, cfg: &PglaConfig) -> [f64; 6] {
    let boost = cfg.gate(p_mis) * (cfg.s * logit_gap(logits) + cfg.delta);
    let mut out = *logits;
    out[4] = logits[4] + boost - cfg.beta / 2.0;
    out[5] = logits[5] + boost + cfg.beta / 2.0;
    out
}

/// Index of the largest logit, ties to the lowest index.
pub fn argmax6(logits: &[f64; 6]) -> usize {
    crate::probe::argmax_first(logits)
}

/// Mean `L_E - L_F` over standard training samples.
pub fn estimate_beta(standard_logits: &[[f64; 6]]) -> Result<f64> {
    if standard_logits.is_empty() {
        return Err(Error::EmptyInput("standard training logits"));
    }
    Ok(standard_logits.iter().map(|l| l[4] - l[5]).sum::<f64>() / standard_logits.len() as f64)
}

/// One grid point; `beta` is estimated per tuning set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub gamma: f64,
    pub p: f64,
    pub alpha_thresh: f64,
    pub s: f64,
    pub delta: f64,
}

impl GridPoint {
    pub fn with_beta(self, beta: f64) -> PglaConfig {
        PglaConfig {
            gamma: self.gamma,
            p: self.p,
            alpha_thresh: self.alpha_thresh,
            s: self.s,
            delta: self.delta,
            beta,
        }
    }
}

pub const GAMMAS: [f64; 3] = [0.5, 1.0, 2.0];
pub const POWERS: [f64; 2] = [1.0, 2.0];
pub const THRESHOLDS: [f64; 3] = [0.3, 0.5, 1.0];
pub const GAP_SCALES: [f64; 3] = [0.75, 1.0, 1.5];
pub const BOOSTS: [f64; 3] = [5.0, 8.0, 12.0];

/// The 162-point search grid, in nested gamma, p, alpha, s, delta order.
pub fn default_grid() -> Vec<GridPoint> {
    let mut grid = Vec::with_capacity(162);
    for gamma in GAMMAS {
        for p in POWERS {
            for alpha_thresh in THRESHOLDS {
                for s in GAP_SCALES {
                    for delta in BOOSTS {
                        grid.push(GridPoint {
                            gamma,
                            p,
                            alpha_thresh,
                            s,
                            delta,
                        });
                    }
                }
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(gamma: f64, alpha: f64) -> PglaConfig {
        PglaConfig {
            gamma,
            p: 1.0,
            alpha_thresh: alpha,
            s: 1.0,
            delta: 5.0,
            beta: 0.0,
        }
    }

    #[test]
    fn gate_anchor_values() {
        assert!((cfg(2.0, 1.0).gate(0.0) - 0.1192).abs() < 1e-4);
        assert!((cfg(0.5, 0.3).gate(0.0) - 0.4626).abs() < 1e-4);
        assert_eq!(default_grid().len(), 162);
    }

    #[test]
    fn hand_evaluated_boost() {
        let out = apply_pgla(&[2.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1.0, &cfg(1.0, 0.5));
        let expected = 7.0 / (1.0 + (-0.5f64).exp());
        assert!((out[4] - 4.3572).abs() < 1e-4);
        assert!((out[4] - expected).abs() < 1e-12);
        assert_eq!(out[4], out[5]);
        assert_eq!(out[..4], [2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_boost_and_beta_is_identity() {
        // s * gap + delta = 0 with gap = -2, s = 1, delta = 2.
        let l = [0.0, 0.0, 0.0, 0.0, 2.0, 1.0];
        let c = PglaConfig { delta: 2.0, ..cfg(1.0, 0.5) };
        assert_eq!(apply_pgla(&l, 0.7, &c), l);
    }

    #[test]
    fn beta_estimate() {
        let l = |e: f64, f: f64| [0.0, 0.0, 0.0, 0.0, e, f];
        assert_eq!(estimate_beta(&[l(1.0, 0.0), l(0.5, 0.0), l(1.5, 0.0)]).unwrap(), 1.0);
        assert_eq!(estimate_beta(&[l(1.0, 1.0)]).unwrap(), 0.0);
        assert_eq!(estimate_beta(&[l(2.0, -1.0)]).unwrap(), 3.0);
        assert!(matches!(estimate_beta(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1.0, 1.0).validate().is_ok());
        assert!(cfg(0.0, 1.0).validate().is_err());
        assert!(cfg(1.0, 0.0).validate().is_err());
        assert!(cfg(1.0, 1.5).validate().is_err());
    }
}
