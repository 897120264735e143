//! Logit lens: intermediate hidden states pushed through the final RMSNorm
//! and unembedding, read as probabilities of the correct option token.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{Dataset, ModelAssets, SplitLabel};

/// Mid-stack standard-split peak above this marks a translation bottleneck.
pub const BOTTLENECK_PEAK: f64 = 0.6;
/// Every layer/split mean below this marks a misaligned unembedding.
pub const MISALIGNED_CEILING: f64 = 0.05;

/// `h / sqrt(mean(h^2) + eps) * g`; an all-zero input with `eps = 0` maps to zero.
pub fn rmsnorm(h: &[f64], g: &[f64], eps: f64) -> Result<Vec<f64>> {
    if h.len() != g.len() {
        return Err(Error::Shape(format!(
            "rmsnorm: input length {} != weight length {}",
            h.len(),
            g.len()
        )));
    }
    let ms = h.iter().map(|v| v * v).sum::<f64>() / h.len().max(1) as f64;
    let denom = (ms + eps).sqrt();
    if denom == 0.0 {
        return Ok(vec![0.0; h.len()]);
    }
    Ok(h.iter().zip(g).map(|(v, w)| v / denom * w).collect())
}

/// Vocabulary logits `U rmsnorm(h)`.
pub fn lens_project(h: &[f64], assets: &ModelAssets) -> Result<Vec<f64>> {
    if h.len() != assets.d_hidden {
        return Err(Error::Shape(format!(
            "hidden state length {} != assets d_hidden {}",
            h.len(),
            assets.d_hidden
        )));
    }
    let g: Vec<f64> = assets.norm_weights.iter().map(|&v| f64::from(v)).collect();
    let y = rmsnorm(h, &g, assets.norm_eps)?;
    Ok((0..assets.vocab_size)
        .map(|t| {
            assets
                .unembed_row(t)
                .iter()
                .zip(&y)
                .map(|(&u, v)| f64::from(u) * v)
                .sum()
        })
        .collect())
}

/// Max-subtracted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPeak {
    pub layer: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LensRegime {
    TranslationBottleneck,
    UnembeddingMisaligned,
    Unclassified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensTrajectory {
    pub sample_ids: Vec<String>,
    pub splits: Vec<SplitLabel>,
    /// `[layer][sample]` probability of the correct token.
    pub per_layer_prob: Vec<Vec<f64>>,
    /// `split -> [layer]` mean probability.
    pub mean_by_split: BTreeMap<String, Vec<f64>>,
    pub per_split_peak: BTreeMap<String, SplitPeak>,
    /// Largest `|sum(softmax) - 1|` seen over every projected vector.
    pub max_normalization_error: f64,
    pub regime: LensRegime,
    pub bottleneck_threshold: f64,
    pub misaligned_threshold: f64,
}

fn classify(mean_by_split: &BTreeMap<String, Vec<f64>>, n_layers: usize) -> LensRegime {
    let all_low = mean_by_split
        .values()
        .flatten()
        .all(|&p| p < MISALIGNED_CEILING);
    if all_low {
        return LensRegime::UnembeddingMisaligned;
    }
    let mid = n_layers / 4..(3 * n_layers).div_ceil(4);
    let bottleneck = [SplitLabel::STD_V, SplitLabel::STD_A].iter().any(|s| {
        mean_by_split
            .get(s.as_str())
            .is_some_and(|v| v[mid.clone()].iter().any(|&p| p > BOTTLENECK_PEAK))
    });
    if bottleneck {
        LensRegime::TranslationBottleneck
    } else {
        LensRegime::Unclassified
    }
}

/// Per-layer correct-token probabilities for every sample. Uses the dataset's
/// assets unless `assets` is given.
pub fn lens_trajectory(dataset: &Dataset, assets: Option<&ModelAssets>) -> Result<LensTrajectory> {
    let assets = assets.or(dataset.assets.as_ref()).ok_or(Error::MissingAssets)?;
    assets.validate()?;
    if assets.d_hidden != dataset.d_hidden() {
        return Err(Error::Shape(format!(
            "assets d_hidden {} != bundle d_hidden {}",
            assets.d_hidden,
            dataset.d_hidden()
        )));
    }
    let samples = dataset.samples();
    let n_layers = dataset.n_layers();
    let tokens: Vec<usize> = samples
        .iter()
        .map(|s| {
            assets
                .correct_token_ids
                .get(&s.sample_id)
                .map(|&t| t as usize)
                .ok_or_else(|| Error::MissingMeta(format!("{}: no correct token id", s.sample_id)))
        })
        .collect::<Result<_>>()?;

    let per_sample: Vec<(Vec<f64>, f64)> = (0..samples.len())
        .into_par_iter()
        .map(|i| {
            let mut probs = Vec::with_capacity(n_layers);
            let mut worst = 0.0f64;
            for l in 0..n_layers {
                let h: Vec<f64> = dataset.bundles[i].layer(l).iter().map(|&v| f64::from(v)).collect();
                let p = softmax(&lens_project(&h, assets)?);
                worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
                probs.push(p[tokens[i]]);
            }
            Ok((probs, worst))
        })
        .collect::<Result<_>>()?;

    let mut per_layer_prob = vec![Vec::with_capacity(samples.len()); n_layers];
    let mut max_normalization_error = 0.0f64;
    for (probs, worst) in &per_sample {
        max_normalization_error = max_normalization_error.max(*worst);
        for (l, p) in probs.iter().enumerate() {
            per_layer_prob[l].push(*p);
        }
    }
    let mut mean_by_split = BTreeMap::new();
    let mut per_split_peak = BTreeMap::new();
    for split in SplitLabel::ALL {
        let members: Vec<usize> = (0..samples.len())
            .filter(|&i| samples[i].split == split)
            .collect();
        if members.is_empty() {
            continue;
        }
        let means: Vec<f64> = per_layer_prob
            .iter()
            .map(|row| members.iter().map(|&i| row[i]).sum::<f64>() / members.len() as f64)
            .collect();
        let layer = crate::probe::argmax_first(&means);
        per_split_peak.insert(
            split.as_str().to_string(),
            SplitPeak {
                layer,
                prob: means[layer],
            },
        );
        mean_by_split.insert(split.as_str().to_string(), means);
    }
    Ok(LensTrajectory {
        sample_ids: samples.iter().map(|s| s.sample_id.clone()).collect(),
        splits: samples.iter().map(|s| s.split).collect(),
        regime: classify(&mean_by_split, n_layers),
        per_layer_prob,
        mean_by_split,
        per_split_peak,
        max_normalization_error,
        bottleneck_threshold: BOTTLENECK_PEAK,
        misaligned_threshold: MISALIGNED_CEILING,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, SynthConfig};

    fn assets(d: usize, vocab: usize, unembed: Vec<f32>, eps: f64) -> ModelAssets {
        ModelAssets {
            d_hidden: d,
            vocab_size: vocab,
            norm_weights: vec![1.0; d],
            unembed,
            norm_eps: eps,
            correct_token_ids: BTreeMap::new(),
        }
    }

    #[test]
    fn rmsnorm_examples() {
        assert_eq!(rmsnorm(&[3.0, 3.0, 3.0], &[1.0; 3], 0.0).unwrap(), vec![1.0; 3]);
        assert_eq!(rmsnorm(&[0.0; 4], &[1.0; 4], 1e-6).unwrap(), vec![0.0; 4]);
        assert_eq!(rmsnorm(&[1.0, -1.0], &[2.0, 2.0], 0.0).unwrap(), vec![2.0, -2.0]);
        assert!(matches!(rmsnorm(&[1.0], &[1.0, 1.0], 0.0), Err(Error::Shape(_))));
    }

    #[test]
    fn rmsnorm_scale_covariance() {
        let h = [0.3, -1.2, 2.5, 0.7];
        let g = [1.0, 0.5, 2.0, 1.5];
        let a = rmsnorm(&h, &g, 0.0).unwrap();
        let b = rmsnorm(&h.map(|v| v * 37.0), &g, 0.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn identity_unembed_returns_normalized_state() {
        let h = [1.0, -1.0, 1.0];
        let eye = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let z = lens_project(&h, &assets(3, 3, eye, 0.0)).unwrap();
        assert_eq!(z, vec![1.0, -1.0, 1.0]);
    }

    #[test]
    fn three_token_toy_by_hand() {
        // h = (2, 0): rms = sqrt(2), normed = (sqrt 2, 0).
        let u = vec![1.0, 0.0, 0.0, 1.0, 2.0, 3.0];
        let z = lens_project(&[2.0, 0.0], &assets(2, 3, u, 0.0)).unwrap();
        let r2 = 2f64.sqrt();
        for (a, b) in z.iter().zip([r2, 0.0, 2.0 * r2]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_normalized_and_stable() {
        for z in [vec![1000.0, 1001.0, 999.0], vec![-1e4, 0.0], vec![0.0; 7]] {
            let p = softmax(&z);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn zero_unembed_gives_uniform_probs() {
        let mut s = generate_synthetic(&SynthConfig {
            n_videos: 3,
            n_layers: 2,
            d_hidden: 10,
            d_text: 2,
            signal_layers: vec![],
            ..Default::default()
        })
        .unwrap();
        let a = s.dataset.assets.as_mut().unwrap();
        a.unembed.iter_mut().for_each(|v| *v = 0.0);
        let vocab = a.vocab_size as f64;
        let t = lens_trajectory(&s.dataset, None).unwrap();
        for row in &t.per_layer_prob {
            assert!(row.iter().all(|&p| (p - 1.0 / vocab).abs() < 1e-12));
        }
        assert_eq!(t.regime, LensRegime::UnembeddingMisaligned);
        s.dataset.assets = None;
        assert!(matches!(lens_trajectory(&s.dataset, None), Err(Error::MissingAssets)));
    }
}
