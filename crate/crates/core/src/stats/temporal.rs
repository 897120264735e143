//! Accuracy by video duration and answer position, and a logistic diagnostic
//! of which sample properties predict correctness.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folds::make_folds;
use crate::probe::{cross_validate, train_linear_probe};
use crate::store::{Modality, SampleMeta, SplitLabel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bin {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
}

/// Left-closed, right-open; the last bin is closed. Values outside the range
/// fall into the nearest end bin.
pub const DURATION_BINS: [Bin; 3] = [
    Bin { name: "short", lo: 60.0, hi: 100.0 },
    Bin { name: "medium", lo: 100.0, hi: 180.0 },
    Bin { name: "long", lo: 180.0, hi: 300.0 },
];

pub const POSITION_BINS: [Bin; 3] = [
    Bin { name: "early", lo: 0.0, hi: 0.33 },
    Bin { name: "middle", lo: 0.33, hi: 0.66 },
    Bin { name: "late", lo: 0.66, hi: 1.0 },
];

pub fn bin_index(bins: &[Bin], x: f64) -> usize {
    bins.iter()
        .position(|b| x < b.hi)
        .unwrap_or(bins.len() - 1)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub correct: usize,
    /// Percent; `None` for an empty cell.
    pub acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratReport {
    pub n: usize,
    pub duration_bins: Vec<Bin>,
    pub position_bins: Vec<Bin>,
    /// `split -> per-bin cells`.
    pub by_duration: BTreeMap<String, Vec<Cell>>,
    pub by_position: BTreeMap<String, Vec<Cell>>,
}

fn lookup(meta: &[SampleMeta]) -> BTreeMap<&str, &SampleMeta> {
    meta.iter().map(|m| (m.sample_id.as_str(), m)).collect()
}

fn joined<'a>(results: &BTreeMap<String, bool>, meta: &'a [SampleMeta]) -> Result<Vec<(&'a SampleMeta, bool)>> {
    let by_id = lookup(meta);
    results
        .iter()
        .map(|(id, &c)| {
            by_id
                .get(id.as_str())
                .map(|m| (*m, c))
                .ok_or_else(|| Error::MissingMeta(id.clone()))
        })
        .collect()
}

/// Per-split accuracy in each duration and position bin.
pub fn temporal_stratify(results: &BTreeMap<String, bool>, meta: &[SampleMeta]) -> Result<StratReport> {
    let rows = joined(results, meta)?;
    let empty = || {
        SplitLabel::ALL
            .iter()
            .map(|s| (s.as_str().to_string(), vec![Cell::default(); 3]))
            .collect::<BTreeMap<_, _>>()
    };
    let mut by_duration = empty();
    let mut by_position = empty();
    for (m, c) in &rows {
        let key = m.split.as_str();
        for (table, bins, x) in [
            (&mut by_duration, &DURATION_BINS, m.duration_s),
            (&mut by_position, &POSITION_BINS, m.position_ratio()),
        ] {
            let cell = &mut table.get_mut(key).unwrap()[bin_index(bins, x)];
            cell.n += 1;
            cell.correct += usize::from(*c);
        }
    }
    for cell in by_duration.values_mut().chain(by_position.values_mut()).flatten() {
        cell.acc = (cell.n > 0).then(|| 100.0 * cell.correct as f64 / cell.n as f64);
    }
    Ok(StratReport {
        n: rows.len(),
        duration_bins: DURATION_BINS.to_vec(),
        position_bins: POSITION_BINS.to_vec(),
        by_duration,
        by_position,
    })
}

pub const DIAGNOSTIC_FEATURES: [&str; 4] = ["is_misleading", "is_audio", "duration_z", "position_ratio"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub features: Vec<String>,
    /// Percent.
    pub cv_accuracy: f64,
    pub cv_std: f64,
    pub fold_accuracies: Vec<f64>,
    pub majority_rate: f64,
    /// Coefficients on z-scored features, fitted on all samples.
    pub coefficients: BTreeMap<String, f64>,
}

fn design(rows: &[(&SampleMeta, bool)], idx: &[usize], dur_mean: f64, dur_std: f64) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), 4, |r, c| {
        let m = rows[idx[r]].0;
        match c {
            0 => f64::from(u8::from(m.split.is_misleading())),
            1 => f64::from(u8::from(m.split.modality == Modality::Audio)),
            2 => (m.duration_s - dur_mean) / dur_std,
            _ => m.position_ratio(),
        }
    })
}

/// Logistic regression of per-sample correctness on sample properties, with
/// video-grouped k-fold CV accuracy and standardized coefficients.
pub fn temporal_logit_diagnostic(
    results: &BTreeMap<String, bool>,
    meta: &[SampleMeta],
    k: usize,
    seed: u64,
) -> Result<DiagnosticReport> {
    let rows = joined(results, meta)?;
    let y: Vec<bool> = rows.iter().map(|r| r.1).collect();
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::DegenerateLabels("correctness is constant".into()));
    }
    let n = rows.len() as f64;
    let dur_mean = rows.iter().map(|r| r.0.duration_s).sum::<f64>() / n;
    let dur_var = rows.iter().map(|r| (r.0.duration_s - dur_mean).powi(2)).sum::<f64>() / n;
    let dur_std = if dur_var > 0.0 { dur_var.sqrt() } else { 1.0 };

    let metas: Vec<SampleMeta> = rows.iter().map(|r| r.0.clone()).collect();
    let folds = make_folds(&metas, k, seed)?;
    let all: Vec<usize> = (0..rows.len()).collect();
    let cv = cross_validate(&metas, &all, &y, &folds, 1.0, |tr, te| {
        Ok((design(&rows, tr, dur_mean, dur_std), design(&rows, te, dur_mean, dur_std)))
    })?;
    let full = train_linear_probe(&design(&rows, &all, dur_mean, dur_std), &y, 1.0)?;

    let folds_pct: Vec<f64> = cv.fold_accuracies.iter().map(|a| 100.0 * a).collect();
    let mean = folds_pct.iter().sum::<f64>() / folds_pct.len() as f64;
    let var = if folds_pct.len() > 1 {
        folds_pct.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (folds_pct.len() - 1) as f64
    } else {
        0.0
    };
    let pos = y.iter().filter(|&&v| v).count() as f64;
    Ok(DiagnosticReport {
        n: rows.len(),
        k,
        seed,
        features: DIAGNOSTIC_FEATURES.iter().map(|s| s.to_string()).collect(),
        cv_accuracy: mean,
        cv_std: var.sqrt(),
        fold_accuracies: folds_pct,
        majority_rate: 100.0 * pos.max(n - pos) / n,
        coefficients: DIAGNOSTIC_FEATURES
            .iter()
            .zip(&full.w)
            .map(|(f, w)| (f.to_string(), *w))
            .collect(),
    })
}
