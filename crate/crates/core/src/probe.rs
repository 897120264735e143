//! Linear probes on hidden states: per-layer sweeps and modality probes under
//! grouped cross-validation. Accuracies here are fractions in [0, 1].

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folds::FoldAssignment;
use crate::logistic::{fit_logistic, LogisticOptions, Scaler};
use crate::store::{Condition, Dataset, Modality, SampleMeta, SplitLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativePolicy {
    /// Every standard sample is a negative (1:2 positives to negatives).
    #[serde(rename = "all_standard_1to2")]
    AllStandard1to2,
    /// Only standard samples of the probed modality (1:1).
    WithinModality,
}

impl FromStr for NegativePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_standard_1to2" | "all-standard" => Ok(Self::AllStandard1to2),
            "within_modality" | "within-modality" => Ok(Self::WithinModality),
            _ => Err(Error::Usage(format!("unknown negatives policy {s:?}"))),
        }
    }
}

/// Which samples enter a probe and how they are labeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeTask {
    /// All samples; positive = misleading.
    Binary,
    /// Positive = misleading samples of `modality`; negatives per policy.
    Modality {
        modality: Modality,
        negatives: NegativePolicy,
    },
}

impl ProbeTask {
    pub fn vision(negatives: NegativePolicy) -> Self {
        Self::Modality {
            modality: Modality::Vision,
            negatives,
        }
    }

    pub fn audio(negatives: NegativePolicy) -> Self {
        Self::Modality {
            modality: Modality::Audio,
            negatives,
        }
    }

    /// `None` when the split does not take part in the task.
    pub fn label(self, split: SplitLabel) -> Option<bool> {
        match self {
            Self::Binary => Some(split.is_misleading()),
            Self::Modality {
                modality,
                negatives,
            } => match (split.condition, negatives) {
                (Condition::Misleading, _) => (split.modality == modality).then_some(true),
                (Condition::Standard, NegativePolicy::AllStandard1to2) => Some(false),
                (Condition::Standard, NegativePolicy::WithinModality) => {
                    (split.modality == modality).then_some(false)
                }
            },
        }
    }

    /// Indices of participating samples and their labels; errors with
    /// `MissingSplit` when either class is absent.
    pub fn select(self, samples: &[SampleMeta]) -> Result<(Vec<usize>, Vec<bool>)> {
        let (idx, y): (Vec<usize>, Vec<bool>) = samples
            .iter()
            .enumerate()
            .filter_map(|(i, s)| self.label(s.split).map(|y| (i, y)))
            .unzip();
        if !y.iter().any(|&v| v) {
            return Err(Error::MissingSplit(format!("{self}: no positive samples")));
        }
        if !y.iter().any(|&v| !v) {
            return Err(Error::MissingSplit(format!("{self}: no negative samples")));
        }
        Ok((idx, y))
    }
}

impl fmt::Display for ProbeTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Binary => f.write_str("binary"),
            Self::Modality {
                modality,
                negatives,
            } => {
                let m = match modality {
                    Modality::Vision => "vision",
                    Modality::Audio => "audio",
                };
                let n = match negatives {
                    NegativePolicy::AllStandard1to2 => "all_standard_1to2",
                    NegativePolicy::WithinModality => "within_modality",
                };
                write!(f, "{m}/{n}")
            }
        }
    }
}

/// Z-scoring plus logistic regression, fitted on one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    pub scaler: Scaler,
    /// Weights in z-scored coordinates.
    pub w: Vec<f64>,
    pub b: f64,
    pub reg_c: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LinearProbe {
    pub fn decision(&self, row: &[f64]) -> f64 {
        let z = self.scaler.transform_row(row);
        z.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>() + self.b
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        crate::logistic::sigmoid(self.decision(row))
    }

    pub fn predict(&self, row: &[f64]) -> bool {
        self.decision(row) > 0.0
    }

    /// Weight vector expressed in the original (unscaled) coordinates.
    pub fn raw_direction(&self) -> Vec<f64> {
        self.w.iter().zip(&self.scaler.std).map(|(w, s)| w / s).collect()
    }
}

pub fn train_linear_probe(x: &DMatrix<f64>, y: &[bool], reg_c: f64) -> Result<LinearProbe> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    let scaler = Scaler::fit(x);
    let z = scaler.transform(x);
    let model = fit_logistic(
        &z,
        y,
        LogisticOptions {
            c: reg_c,
            ..Default::default()
        },
    )?;
    Ok(LinearProbe {
        scaler,
        w: model.w,
        b: model.b,
        reg_c,
        iterations: model.iterations,
        converged: model.converged,
    })
}

/// Held-out results of one cross-validated probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    /// Mean of the per-fold held-out accuracies.
    pub accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    /// Per participating sample, in dataset order.
    pub sample_ids: Vec<String>,
    pub labels: Vec<bool>,
    pub probabilities: Vec<f64>,
    pub correct: Vec<bool>,
}

/// Runs k-fold CV over `subset` (indices into `samples`, labels aligned).
/// `features(train, test)` builds the two design matrices for a fold, which
/// lets callers fit per-fold transforms on training rows only.
pub fn cross_validate<F>(
    samples: &[SampleMeta],
    subset: &[usize],
    labels: &[bool],
    folds: &FoldAssignment,
    reg_c: f64,
    features: F,
) -> Result<CvOutcome>
where
    F: Fn(&[usize], &[usize]) -> Result<(DMatrix<f64>, DMatrix<f64>)> + Sync,
{
    let mut label_of = vec![None; samples.len()];
    for (&i, &y) in subset.iter().zip(labels) {
        label_of[i] = Some(y);
    }
    let per_fold: Vec<Result<Vec<(usize, f64)>>> = (0..folds.k)
        .into_par_iter()
        .map(|fold| {
            let (train, test) = folds.split(samples, subset, fold);
            if test.is_empty() {
                return Ok(Vec::new());
            }
            let (xtr, xte) = features(&train, &test)?;
            let ytr: Vec<bool> = train.iter().map(|&i| label_of[i].unwrap()).collect();
            let probe = train_linear_probe(&xtr, &ytr, reg_c)?;
            Ok(test
                .iter()
                .enumerate()
                .map(|(r, &i)| {
                    let row: Vec<f64> = xte.row(r).iter().copied().collect();
                    (i, probe.predict_proba(&row))
                })
                .collect())
        })
        .collect();

    let mut prob_of = vec![None; samples.len()];
    let mut fold_accuracies = Vec::new();
    for fold in per_fold {
        let fold = fold?;
        if fold.is_empty() {
            continue;
        }
        let hits = fold
            .iter()
            .filter(|&&(i, p)| (p > 0.5) == label_of[i].unwrap())
            .count();
        fold_accuracies.push(hits as f64 / fold.len() as f64);
        for (i, p) in fold {
            prob_of[i] = Some(p);
        }
    }
    if fold_accuracies.is_empty() {
        return Err(Error::EmptyInput("cross-validation test folds"));
    }
    let mut out = CvOutcome {
        accuracy: fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64,
        fold_accuracies,
        sample_ids: Vec::new(),
        labels: Vec::new(),
        probabilities: Vec::new(),
        correct: Vec::new(),
    };
    for (&i, &y) in subset.iter().zip(labels) {
        if let Some(p) = prob_of[i] {
            out.sample_ids.push(samples[i].sample_id.clone());
            out.labels.push(y);
            out.probabilities.push(p);
            out.correct.push((p > 0.5) == y);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub task: ProbeTask,
    pub layer: usize,
    pub reg_c: f64,
    pub n_positive: usize,
    pub n_negative: usize,
    pub cv: CvOutcome,
}

impl ProbeResult {
    pub fn accuracy(&self) -> f64 {
        self.cv.accuracy
    }
}

/// Cross-validated probe on one layer.
pub fn probe_layer(
    dataset: &Dataset,
    task: ProbeTask,
    layer: usize,
    folds: &FoldAssignment,
    reg_c: f64,
) -> Result<ProbeResult> {
    if layer >= dataset.n_layers() {
        return Err(Error::Config(format!(
            "layer {layer} outside [0, {})",
            dataset.n_layers()
        )));
    }
    let (idx, y) = task.select(dataset.samples())?;
    let cv = cross_validate(dataset.samples(), &idx, &y, folds, reg_c, |tr, te| {
        Ok((dataset.layer_matrix(layer, tr), dataset.layer_matrix(layer, te)))
    })?;
    let n_positive = y.iter().filter(|&&v| v).count();
    Ok(ProbeResult {
        task,
        layer,
        reg_c,
        n_positive,
        n_negative: y.len() - n_positive,
        cv,
    })
}

pub fn modality_probe(
    dataset: &Dataset,
    modality: Modality,
    negatives: NegativePolicy,
    layer: usize,
    folds: &FoldAssignment,
    reg_c: f64,
) -> Result<ProbeResult> {
    let task = ProbeTask::Modality {
        modality,
        negatives,
    };
    probe_layer(dataset, task, layer, folds, reg_c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSweepResult {
    pub task: ProbeTask,
    pub k: usize,
    pub reg_c: f64,
    pub per_layer_cv_acc: Vec<f64>,
    pub per_layer_fold_acc: Vec<Vec<f64>>,
    pub peak_layer: usize,
    pub peak_acc: f64,
    pub final_layer_acc: f64,
}

impl LayerSweepResult {
    /// Final-layer minus peak accuracy (never positive).
    pub fn decay(&self) -> f64 {
        self.final_layer_acc - self.peak_acc
    }
}

/// Index of the maximum, ties to the lowest index.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Probes every layer; layers run in parallel, results are kept in layer order.
pub fn layer_sweep(
    dataset: &Dataset,
    task: ProbeTask,
    folds: &FoldAssignment,
    reg_c: f64,
) -> Result<LayerSweepResult> {
    let n_layers = dataset.n_layers();
    if n_layers == 0 {
        return Err(Error::EmptyInput("dataset"));
    }
    let results: Vec<ProbeResult> = (0..n_layers)
        .into_par_iter()
        .map(|l| probe_layer(dataset, task, l, folds, reg_c))
        .collect::<Result<_>>()?;
    let per_layer_cv_acc: Vec<f64> = results.iter().map(ProbeResult::accuracy).collect();
    let peak_layer = argmax_first(&per_layer_cv_acc);
    Ok(LayerSweepResult {
        task,
        k: folds.k,
        reg_c,
        peak_layer,
        peak_acc: per_layer_cv_acc[peak_layer],
        final_layer_acc: per_layer_cv_acc[n_layers - 1],
        per_layer_fold_acc: results.into_iter().map(|r| r.cv.fold_accuracies).collect(),
        per_layer_cv_acc,
    })
}
