//! Stacked misleading-input probe: a single-layer logistic probe, a logistic
//! probe and a deep MLP on PCA-reduced states from a window of layers, and
//! behavioral features of the choice logits, combined by a logistic stacker
//! trained on out-of-fold predictions.
//!
//! Behavioral features, from the six choice logits:
//!
//! * gap: `max(A..D) - max(E, F)`
//! * entropy: Shannon entropy (nats) of the softmax over all six logits
//! * EF strength: `(E + F) / 2 - mean(A..D)`

use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::adjust::logit_gap;
use super::mlp::{Mlp, MlpOptions};
use super::{indices_of_videos, misleading_labels, DEFAULT_TRAIN_FRACTION};
use crate::error::{Error, Result};
use crate::folds::{holdout_videos, make_folds};
use crate::lens::softmax;
use crate::logistic::Scaler;
use crate::probe::{train_linear_probe, LinearProbe};
use crate::rng::derive_seed;
use crate::store::{Dataset, SampleMeta};

pub const WINDOW_RADIUS: usize = 2;
pub const PCA_RETAIN: f64 = 0.999;
pub const INNER_FOLDS: usize = 5;
pub const STACKER_FEATURES: [&str; 6] = [
    "single_layer_prob",
    "multi_layer_prob",
    "deep_prob",
    "logit_gap",
    "choice_entropy",
    "ef_strength",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `D x r`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
    pub retained_fraction: f64,
}

impl Pca {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        c * &self.basis
    }
}

/// Principal components covering `retain` of the total variance. Uses the
/// `n x n` Gram matrix when there are fewer rows than columns.
pub fn fit_pca(x: &DMatrix<f64>, retain: f64) -> Result<Pca> {
    let (n, d) = x.shape();
    if n < 2 || d == 0 {
        return Err(Error::EmptyInput("PCA input"));
    }
    let mean: Vec<f64> = x.column_iter().map(|c| c.sum() / n as f64).collect();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let gram_side = n < d;
    let g = if gram_side { &c * c.transpose() } else { c.transpose() * &c };
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lam: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = lam.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateLabels("PCA input has zero variance".into()));
    }
    let floor = 1e-12 * lam[0];
    let mut r = 0;
    let mut acc = 0.0;
    while r < lam.len() && lam[r] > floor && acc < retain * total {
        acc += lam[r];
        r += 1;
    }
    let mut basis = DMatrix::zeros(d, r);
    for (j, &i) in order.iter().take(r).enumerate() {
        let v = eig.eigenvectors.column(i);
        if gram_side {
            let dir = c.transpose() * v;
            let norm = dir.norm();
            basis.set_column(j, &(dir / norm));
        } else {
            basis.set_column(j, &v);
        }
    }
    Ok(Pca {
        mean,
        basis,
        explained_variance: lam[..r].iter().map(|l| l / (n - 1) as f64).collect(),
        retained_fraction: acc / total,
    })
}

pub fn behavioral_features(logits: &[f64; 6]) -> [f64; 3] {
    let p = softmax(logits);
    let entropy = -p.iter().filter(|&&q| q > 0.0).map(|q| q * q.ln()).sum::<f64>();
    let content = logits[..4].iter().sum::<f64>() / 4.0;
    [logit_gap(logits), entropy, (logits[4] + logits[5]) / 2.0 - content]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseModels {
    pub single: LinearProbe,
    pub window_scaler: Scaler,
    pub pca: Pca,
    pub multi: LinearProbe,
    pub deep_scaler: Scaler,
    pub deep: Mlp,
}

impl BaseModels {
    fn fit(single_x: &DMatrix<f64>, window_x: &DMatrix<f64>, y: &[bool], deep: &MlpOptions, seed: u64) -> Result<Self> {
        let single = train_linear_probe(single_x, y, 1.0)?;
        let window_scaler = Scaler::fit(window_x);
        let pca = fit_pca(&window_scaler.transform(window_x), PCA_RETAIN)?;
        let reduced = pca.transform(&window_scaler.transform(window_x));
        let multi = train_linear_probe(&reduced, y, 1.0)?;
        let deep_scaler = Scaler::fit(&reduced);
        let mut net = Mlp::init(reduced.ncols(), deep.clone(), seed);
        net.fit(&deep_scaler.transform(&reduced), y)?;
        Ok(Self {
            single,
            window_scaler,
            pca,
            multi,
            deep_scaler,
            deep: net,
        })
    }

    fn probs(&self, single_x: &DMatrix<f64>, window_x: &DMatrix<f64>) -> [Vec<f64>; 3] {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
        let single = rows(single_x).iter().map(|r| self.single.predict_proba(r)).collect();
        let reduced = self.pca.transform(&self.window_scaler.transform(window_x));
        let multi = rows(&reduced).iter().map(|r| self.multi.predict_proba(r)).collect();
        let deep = self.deep.predict_proba(&self.deep_scaler.transform(&reduced));
        [single, multi, deep]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancedProbe {
    pub layer: usize,
    pub window: Vec<usize>,
    pub bases: BaseModels,
    pub stacker: LinearProbe,
    pub stacker_features: Vec<String>,
    pub seed: u64,
    pub train_videos: BTreeSet<String>,
    pub eval_videos: BTreeSet<String>,
}

fn stack_matrix(probs: &[Vec<f64>; 3], logits: &[[f64; 6]]) -> DMatrix<f64> {
    DMatrix::from_fn(logits.len(), STACKER_FEATURES.len(), |r, c| match c {
        0..=2 => probs[c][r],
        _ => behavioral_features(&logits[r])[c - 3],
    })
}

fn logits_of(dataset: &Dataset, idx: &[usize]) -> Vec<[f64; 6]> {
    idx.iter().map(|&i| dataset.bundles[i].logits_f64()).collect()
}

impl EnhancedProbe {
    pub fn p_mis(&self, dataset: &Dataset, indices: &[usize]) -> Vec<f64> {
        let probs = self.bases.probs(
            &dataset.layer_matrix(self.layer, indices),
            &dataset.window_matrix(&self.window, indices),
        );
        let m = stack_matrix(&probs, &logits_of(dataset, indices));
        m.row_iter()
            .map(|r| self.stacker.predict_proba(&r.iter().copied().collect::<Vec<_>>()))
            .collect()
    }

    pub fn eval_indices(&self, dataset: &Dataset) -> Vec<usize> {
        indices_of_videos(dataset, &self.eval_videos)
    }
}

/// Layers `layer - 2 ..= layer + 2`.
pub fn layer_window(layer: usize, n_layers: usize) -> Result<Vec<usize>> {
    if layer < WINDOW_RADIUS || layer + WINDOW_RADIUS >= n_layers {
        return Err(Error::Config(format!(
            "window of +-{WINDOW_RADIUS} around layer {layer} leaves [0, {n_layers})"
        )));
    }
    Ok((layer - WINDOW_RADIUS..=layer + WINDOW_RADIUS).collect())
}

/// Trains on the same video-grouped holdout as the MLP probe (same seed gives
/// the same split).
pub fn train_enhanced_probe(dataset: &Dataset, layer: usize, seed: u64) -> Result<EnhancedProbe> {
    train_enhanced_with(dataset, layer, seed, &MlpOptions::deep())
}

pub(crate) fn train_enhanced_with(
    dataset: &Dataset,
    layer: usize,
    seed: u64,
    deep: &MlpOptions,
) -> Result<EnhancedProbe> {
    let window = layer_window(layer, dataset.n_layers())?;
    let (train_videos, eval_videos) = holdout_videos(dataset.samples(), DEFAULT_TRAIN_FRACTION, seed)?;
    let train = indices_of_videos(dataset, &train_videos);
    let y = misleading_labels(dataset, &train);

    let metas: Vec<SampleMeta> = train.iter().map(|&i| dataset.samples()[i].clone()).collect();
    let inner = make_folds(&metas, INNER_FOLDS, derive_seed(seed, &[0xe1]))?;
    let local: Vec<usize> = (0..train.len()).collect();
    let mut oof: [Vec<f64>; 3] = [vec![0.0; train.len()], vec![0.0; train.len()], vec![0.0; train.len()]];
    for fold in 0..INNER_FOLDS {
        let (tr, te) = inner.split(&metas, &local, fold);
        let g = |ix: &[usize]| ix.iter().map(|&j| train[j]).collect::<Vec<_>>();
        let (gtr, gte) = (g(&tr), g(&te));
        let ytr: Vec<bool> = tr.iter().map(|&j| y[j]).collect();
        let bases = BaseModels::fit(
            &dataset.layer_matrix(layer, &gtr),
            &dataset.window_matrix(&window, &gtr),
            &ytr,
            deep,
            derive_seed(seed, &[0xe2, fold as u64]),
        )?;
        let p = bases.probs(&dataset.layer_matrix(layer, &gte), &dataset.window_matrix(&window, &gte));
        for (m, col) in p.iter().enumerate() {
            for (&j, v) in te.iter().zip(col) {
                oof[m][j] = *v;
            }
        }
    }
    let stacker = train_linear_probe(&stack_matrix(&oof, &logits_of(dataset, &train)), &y, 1.0)?;
    let bases = BaseModels::fit(
        &dataset.layer_matrix(layer, &train),
        &dataset.window_matrix(&window, &train),
        &y,
        deep,
        derive_seed(seed, &[0xe3]),
    )?;
    Ok(EnhancedProbe {
        layer,
        window,
        bases,
        stacker,
        stacker_features: STACKER_FEATURES.iter().map(|s| s.to_string()).collect(),
        seed,
        train_videos,
        eval_videos,
    })
}
