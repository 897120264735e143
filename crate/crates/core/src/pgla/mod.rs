//! Probe-guided logit adjustment: a hidden-state probe for misleading inputs,
//! a gated boost of the rejection options, cross-validated grid tuning and
//! budget-constrained selection.

pub mod adjust;
pub mod enhanced;
pub mod mlp;
pub mod sweep;

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folds::holdout_videos;
use crate::logistic::Scaler;
use crate::rng::derive_seed;
use crate::store::Dataset;

pub use adjust::{apply_pgla, default_grid, estimate_beta, GridPoint, PglaConfig};
pub use enhanced::{train_enhanced_probe, EnhancedProbe};
pub use mlp::{Mlp, MlpOptions};
pub use sweep::{grid_sweep_cv, grid_sweep_scores, pareto_curve, Budget, ParetoPoint, SweepResult};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.25;

/// Binary misleading-input probe on one layer, trained on a video-grouped
/// holdout and fixed thereafter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpProbe {
    pub layer: usize,
    pub scaler: Scaler,
    pub mlp: Mlp,
    pub seed: u64,
    pub train_fraction: f64,
    pub train_videos: BTreeSet<String>,
    pub eval_videos: BTreeSet<String>,
}

impl MlpProbe {
    pub fn p_mis_matrix(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.mlp.predict_proba(&self.scaler.transform(x))
    }

    /// P(misleading) for `indices` of `dataset`.
    pub fn p_mis(&self, dataset: &Dataset, indices: &[usize]) -> Vec<f64> {
        self.p_mis_matrix(&dataset.layer_matrix(self.layer, indices))
    }

    /// Dataset indices whose video is outside the probe's training set.
    pub fn eval_indices(&self, dataset: &Dataset) -> Vec<usize> {
        indices_of_videos(dataset, &self.eval_videos)
    }

    pub fn train_indices(&self, dataset: &Dataset) -> Vec<usize> {
        indices_of_videos(dataset, &self.train_videos)
    }
}

pub(crate) fn indices_of_videos(dataset: &Dataset, videos: &BTreeSet<String>) -> Vec<usize> {
    dataset
        .samples()
        .iter()
        .enumerate()
        .filter(|(_, s)| videos.contains(&s.video_id))
        .map(|(i, _)| i)
        .collect()
}

pub(crate) fn misleading_labels(dataset: &Dataset, indices: &[usize]) -> Vec<bool> {
    indices
        .iter()
        .map(|&i| dataset.samples()[i].split.is_misleading())
        .collect()
}

/// Trains the `d -> 256 -> 2` probe on `train_fraction` of the videos.
pub fn train_mlp_probe(dataset: &Dataset, layer: usize, train_fraction: f64, seed: u64) -> Result<MlpProbe> {
    if layer >= dataset.n_layers() {
        return Err(Error::Config(format!(
            "layer {layer} outside [0, {})",
            dataset.n_layers()
        )));
    }
    let (train_videos, eval_videos) = holdout_videos(dataset.samples(), train_fraction, seed)?;
    let idx = indices_of_videos(dataset, &train_videos);
    let y = misleading_labels(dataset, &idx);
    let x = dataset.layer_matrix(layer, &idx);
    let scaler = Scaler::fit(&x);
    let mut mlp = Mlp::init(x.ncols(), MlpOptions::probe(), derive_seed(seed, &[0x31b]));
    mlp.fit(&scaler.transform(&x), &y)?;
    Ok(MlpProbe {
        layer,
        scaler,
        mlp,
        seed,
        train_fraction,
        train_videos,
        eval_videos,
    })
}

/// Area under the ROC curve (Mann-Whitney, ties count one half).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            if labels[o] {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    Ok((rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos * neg) as f64)
}
