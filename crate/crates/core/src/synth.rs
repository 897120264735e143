//! Synthetic datasets with planted, fully recorded structure.
//!
//! Construction, per sample and layer:
//!
//! * Hidden noise is isotropic N(0, I). Its component inside the text-leak
//!   subspace `range(W_leak)` (orthonormal columns) is `W_leak xi`, where `xi`
//!   is the sample's own text-embedding noise; the complement gets
//!   independent noise. The marginal is still unit-sigma isotropic.
//! * Misleading samples of modality m get `(1 - leak) s_m u_m + leak s_m
//!   W_leak e_m` added at every signal layer, where `u_m` is a fixed unit
//!   direction orthogonal to `range(W_leak)` and `e_m` is text coordinate 0
//!   (vision) or 1 (audio).
//! * The text embedding is `xi + leak s_m e_m` for misleading samples and `xi`
//!   otherwise, so at signal layers `t = W_leak^T h` exactly and the leaked
//!   fraction of the signal is linear in the text.
//! * Choice logits: non-gold letters N(0, 0.5^2); a standard sample's gold
//!   letter gets 2.0. A misleading sample whose behavioral coupling fires
//!   gets 2.0 on its gold E/F; otherwise a random content letter gets 2.0 and
//!   the gold E/F gets 2.0 - 2.0 (under-rejection).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{shuffle, SplitMix64};
use crate::store::{
    Condition, Dataset, HiddenStateBundle, Letter, Manifest, MisleadingSubcategory, Modality,
    ModelAssets, QuestionType, SampleMeta, SplitLabel, TextEmbeddingTable,
};

const KEY_BASIS: u64 = 1;
const KEY_VIDEO: u64 = 2;
const KEY_SAMPLE: u64 = 3;
const KEY_TEXT: u64 = 4;
const KEY_NOISE: u64 = 5;
const KEY_ASSETS: u64 = 6;
const KEY_SHUFFLE: u64 = 7;

pub const GOLD_LOGIT: f64 = 2.0;
pub const UNDER_REJECTION_SHIFT: f64 = 2.0;
pub const DISTRACTOR_LOGIT_SD: f64 = 0.5;
/// Vocabulary ids of the option letters A..F in synthetic model assets.
pub const LETTER_TOKEN_IDS: [u32; 6] = [1, 2, 3, 4, 5, 6];

const WORDS: [&str; 12] = [
    "red", "blue", "green", "door", "window", "drum", "violin", "shout", "whisper", "car",
    "dog", "rain",
];

fn default_vocab() -> usize {
    32
}

fn default_model_name() -> String {
    "synthetic".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_videos: usize,
    pub n_layers: usize,
    pub d_hidden: usize,
    pub d_text: usize,
    pub signal_layers: Vec<usize>,
    pub vision_signal_strength: f64,
    pub audio_signal_strength: f64,
    pub text_leak_strength: f64,
    pub behavioral_coupling: f64,
    pub seed: u64,
    #[serde(default = "default_vocab")]
    pub vocab_size: usize,
    #[serde(default = "default_model_name")]
    pub model_name: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_videos: 200,
            n_layers: 8,
            d_hidden: 32,
            d_text: 8,
            signal_layers: vec![4],
            vision_signal_strength: 5.0,
            audio_signal_strength: 5.0,
            text_leak_strength: 0.0,
            behavioral_coupling: 0.0,
            seed: 0,
            vocab_size: default_vocab(),
            model_name: default_model_name(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_videos == 0 || self.n_layers == 0 {
            return bad("n_videos and n_layers must be positive".into());
        }
        if self.d_text < 2 || self.d_hidden < self.d_text + 2 {
            return bad(format!(
                "need d_text >= 2 and d_hidden >= d_text + 2 (got {}, {})",
                self.d_text, self.d_hidden
            ));
        }
        if let Some(l) = self.signal_layers.iter().find(|&&l| l >= self.n_layers) {
            return bad(format!("signal layer {l} outside [0, {})", self.n_layers));
        }
        for (name, v) in [
            ("vision_signal_strength", self.vision_signal_strength),
            ("audio_signal_strength", self.audio_signal_strength),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [
            ("text_leak_strength", self.text_leak_strength),
            ("behavioral_coupling", self.behavioral_coupling),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.vocab_size <= LETTER_TOKEN_IDS[5] as usize {
            return bad(format!("vocab_size must exceed {}", LETTER_TOKEN_IDS[5]));
        }
        Ok(())
    }

    fn strength(&self, m: Modality) -> f64 {
        match m {
            Modality::Vision => self.vision_signal_strength,
            Modality::Audio => self.audio_signal_strength,
        }
    }
}

/// Per-sample record of the behavioral draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDraw {
    pub sample_id: String,
    /// Misleading only: whether behavioral coupling fired.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupled: Option<bool>,
    /// Misleading, uncoupled only: the content letter the logits favor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distractor: Option<Letter>,
    pub choice_logits: [f32; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub u_vision: Vec<f64>,
    pub u_audio: Vec<f64>,
    /// `d_hidden x d_text`, row-major; columns orthonormal.
    pub w_leak: Vec<Vec<f64>>,
    pub text_code_index: BTreeMap<String, usize>,
    pub letter_token_ids: [u32; 6],
    pub samples: Vec<SampleDraw>,
}

impl GroundTruth {
    pub fn direction(&self, m: Modality) -> &[f64] {
        match m {
            Modality::Vision => &self.u_vision,
            Modality::Audio => &self.u_audio,
        }
    }

    pub fn w_leak_matrix(&self) -> DMatrix<f64> {
        let d = self.w_leak.len();
        let t = self.w_leak.first().map_or(0, Vec::len);
        DMatrix::from_fn(d, t, |r, c| self.w_leak[r][c])
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    pub ground_truth: GroundTruth,
}

impl SyntheticDataset {
    /// Writes the dataset files plus `ground_truth.json`; returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let manifest = self.dataset.write(dir)?;
        let gt = dir.join("ground_truth.json");
        let mut json = serde_json::to_string_pretty(&self.ground_truth)
            .map_err(|e| Error::Parse(e.to_string()))?;
        json.push('\n');
        fs::write(&gt, json).map_err(|e| Error::io(&gt, e))?;
        Ok(manifest)
    }
}

fn normal(rng: &mut SplitMix64) -> f64 {
    rng.sample(StandardNormal)
}

fn pick<T: Copy>(rng: &mut SplitMix64, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

/// Orthonormal `d x (d_text + 2)` basis: leak columns, then u_vision, u_audio.
fn planted_basis(cfg: &SynthConfig) -> DMatrix<f64> {
    let mut rng = SplitMix64::keyed(cfg.seed, &[KEY_BASIS]);
    let g = DMatrix::from_fn(cfg.d_hidden, cfg.d_text + 2, |_, _| normal(&mut rng));
    let mut q = g.qr().q();
    // Fix column signs so the basis does not depend on QR sign conventions.
    for mut col in q.column_iter_mut() {
        let pivot = col.iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    q
}

struct VideoDraw {
    duration_s: f64,
    question_word: &'static str,
}

fn draw_video(cfg: &SynthConfig, v: usize) -> VideoDraw {
    let mut rng = SplitMix64::keyed(cfg.seed, &[KEY_VIDEO, v as u64]);
    VideoDraw {
        duration_s: 60.0 + 10.0 * rng.random_range(0..25u32) as f64,
        question_word: pick(&mut rng, &WORDS),
    }
}

struct Generated {
    meta: SampleMeta,
    bundle: HiddenStateBundle,
    text: Vec<f32>,
    draw: SampleDraw,
}

fn generate_sample(
    cfg: &SynthConfig,
    basis: &DMatrix<f64>,
    video: usize,
    split: SplitLabel,
) -> Generated {
    let key = (video * 4 + split.index()) as u64;
    let vd = draw_video(cfg, video);
    let video_id = format!("v{video:04}");
    let sample_id = format!("{video_id}_{split}");
    let m_idx = match split.modality {
        Modality::Vision => 0,
        Modality::Audio => 1,
    };
    let strength = cfg.strength(split.modality);
    let leak = cfg.text_leak_strength;
    let misleading = split.is_misleading();
    let q = basis.columns(0, cfg.d_text);
    let u = basis.column(cfg.d_text + m_idx);

    let mut srng = SplitMix64::keyed(cfg.seed, &[KEY_SAMPLE, key]);
    let question_type = pick(&mut srng, &QuestionType::ALL);
    let subcategory = misleading.then(|| match split.modality {
        Modality::Vision => pick(&mut srng, &MisleadingSubcategory::VISION),
        Modality::Audio => pick(&mut srng, &MisleadingSubcategory::AUDIO),
    });
    let slots = (vd.duration_s / 10.0) as u32;
    let start = 10.0 * srng.random_range(0..slots) as f64;

    let mut logits = [0f64; 6];
    for l in logits.iter_mut() {
        *l = DISTRACTOR_LOGIT_SD * normal(&mut srng);
    }
    let (correct_letter, coupled, distractor) = match (split.condition, split.modality) {
        (Condition::Standard, _) => {
            let gold = pick(&mut srng, &Letter::ALL[..4]);
            logits[gold.index()] = GOLD_LOGIT;
            (gold, None, None)
        }
        (Condition::Misleading, m) => {
            let gold = if m == Modality::Vision { Letter::E } else { Letter::F };
            let fired = srng.random::<f64>() < cfg.behavioral_coupling;
            if fired {
                logits[gold.index()] = GOLD_LOGIT;
                (gold, Some(true), None)
            } else {
                let c = pick(&mut srng, &Letter::ALL[..4]);
                logits[c.index()] = GOLD_LOGIT;
                logits[gold.index()] = GOLD_LOGIT - UNDER_REJECTION_SHIFT;
                (gold, Some(false), Some(c))
            }
        }
    };
    let swap_word = misleading.then(|| {
        let mut w = pick(&mut srng, &WORDS);
        while w == vd.question_word {
            w = pick(&mut srng, &WORDS);
        }
        w
    });

    let mut trng = SplitMix64::keyed(cfg.seed, &[KEY_TEXT, key]);
    let xi = DVector::from_fn(cfg.d_text, |_, _| normal(&mut trng));
    let mut text = xi.clone();
    if misleading {
        text[m_idx] += leak * strength;
    }
    let leak_noise = q * &xi;
    let signal: DVector<f64> = if misleading {
        u * ((1.0 - leak) * strength) + q.column(m_idx) * (leak * strength)
    } else {
        DVector::zeros(cfg.d_hidden)
    };

    let mut states = Vec::with_capacity(cfg.n_layers * cfg.d_hidden);
    for layer in 0..cfg.n_layers {
        let mut nrng = SplitMix64::keyed(cfg.seed, &[KEY_NOISE, key, layer as u64]);
        let z = DVector::from_fn(cfg.d_hidden, |_, _| normal(&mut nrng));
        let mut h = &z - q * (q.transpose() * &z) + &leak_noise;
        if cfg.signal_layers.contains(&layer) {
            h += &signal;
        }
        states.extend(h.iter().map(|&v| v as f32));
    }

    let choice_logits = logits.map(|v| v as f32);
    let bundle = HiddenStateBundle {
        n_layers: cfg.n_layers,
        d_hidden: cfg.d_hidden,
        states,
        choice_logits,
    };
    let modality_word = match split.modality {
        Modality::Vision => "visible",
        Modality::Audio => "audible",
    };
    let word = swap_word.unwrap_or(vd.question_word);
    let question_text = format!(
        "in clip {video_id} right after the {word} moment what {modality_word} detail comes next"
    );
    let meta = SampleMeta {
        sample_id: sample_id.clone(),
        video_id,
        split,
        question_type,
        misleading_subcategory: subcategory,
        duration_s: vd.duration_s,
        answer_ts_start_s: start,
        answer_ts_end_s: start + 10.0,
        correct_letter,
        bundle_path: format!("bundles/{sample_id}.bin"),
        question_text: Some(question_text),
    };
    Generated {
        meta,
        bundle,
        text: text.iter().map(|&v| v as f32).collect(),
        draw: SampleDraw {
            sample_id,
            coupled,
            distractor,
            choice_logits,
        },
    }
}

fn synth_assets(cfg: &SynthConfig, samples: &[SampleMeta]) -> ModelAssets {
    let mut rng = SplitMix64::keyed(cfg.seed, &[KEY_ASSETS]);
    let scale = 1.0 / (cfg.d_hidden as f64).sqrt();
    let norm_weights = (0..cfg.d_hidden)
        .map(|_| (1.0 + 0.1 * normal(&mut rng)) as f32)
        .collect();
    let unembed = (0..cfg.vocab_size * cfg.d_hidden)
        .map(|_| (scale * normal(&mut rng)) as f32)
        .collect();
    let correct_token_ids = samples
        .iter()
        .map(|s| (s.sample_id.clone(), LETTER_TOKEN_IDS[s.correct_letter.index()]))
        .collect();
    ModelAssets {
        d_hidden: cfg.d_hidden,
        vocab_size: cfg.vocab_size,
        norm_weights,
        unembed,
        norm_eps: crate::store::assets::DEFAULT_NORM_EPS,
        correct_token_ids,
    }
}

/// Generates a dataset. Output depends only on `cfg`, never on thread count.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let basis = planted_basis(cfg);
    let generated: Vec<Generated> = (0..cfg.n_videos * 4)
        .into_par_iter()
        .map(|i| generate_sample(cfg, &basis, i / 4, SplitLabel::ALL[i % 4]))
        .collect();

    let mut samples = Vec::with_capacity(generated.len());
    let mut bundles = Vec::with_capacity(generated.len());
    let mut rows = BTreeMap::new();
    let mut draws = Vec::with_capacity(generated.len());
    for g in generated {
        rows.insert(g.meta.sample_id.clone(), g.text);
        samples.push(g.meta);
        bundles.push(g.bundle);
        draws.push(g.draw);
    }
    draws.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let assets = synth_assets(cfg, &samples);
    let embeddings = TextEmbeddingTable::new(cfg.d_text, rows)?;
    let manifest = Manifest {
        format_version: crate::store::types::FORMAT_VERSION,
        model_name: cfg.model_name.clone(),
        samples,
        assets_path: Some("assets.bin".into()),
        embeddings_path: Some("embeddings.bin".into()),
        base_dir: PathBuf::new(),
    };
    let dataset = Dataset::new(manifest, bundles, Some(assets), Some(embeddings))?;

    let col = |j: usize| basis.column(j).iter().copied().collect::<Vec<f64>>();
    let ground_truth = GroundTruth {
        config: cfg.clone(),
        u_vision: col(cfg.d_text),
        u_audio: col(cfg.d_text + 1),
        w_leak: (0..cfg.d_hidden)
            .map(|r| (0..cfg.d_text).map(|c| basis[(r, c)]).collect())
            .collect(),
        text_code_index: [("vision".to_string(), 0), ("audio".to_string(), 1)]
            .into_iter()
            .collect(),
        letter_token_ids: LETTER_TOKEN_IDS,
        samples: draws,
    };
    Ok(SyntheticDataset {
        dataset,
        ground_truth,
    })
}

/// Negative control: within each modality, hidden states are reassigned to
/// samples by a random non-identity permutation (for more than three
/// samples), which severs any dependence between condition label and
/// features. Metadata and choice logits stay with their samples.
pub fn generate_label_shuffled(dataset: &Dataset, seed: u64) -> Dataset {
    let mut out = dataset.clone();
    for (mi, modality) in [Modality::Vision, Modality::Audio].into_iter().enumerate() {
        let idx: Vec<usize> = dataset
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split.modality == modality)
            .map(|(i, _)| i)
            .collect();
        let mut perm: Vec<usize> = (0..idx.len()).collect();
        let mut attempt = 0u64;
        loop {
            perm.sort_unstable();
            let mut rng = SplitMix64::keyed(seed, &[KEY_SHUFFLE, mi as u64, attempt]);
            shuffle(&mut perm, &mut rng);
            let identity = perm.iter().enumerate().all(|(i, &p)| i == p);
            if !(identity && idx.len() > 3) {
                break;
            }
            attempt += 1;
        }
        for (dst, &src) in idx.iter().zip(&perm) {
            out.bundles[*dst].states = dataset.bundles[idx[src]].states.clone();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::validate_dataset;

    fn small() -> SynthConfig {
        SynthConfig {
            n_videos: 6,
            n_layers: 3,
            d_hidden: 12,
            d_text: 4,
            signal_layers: vec![1],
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn config_errors() {
        let mut c = small();
        c.signal_layers = vec![3];
        assert!(matches!(generate_synthetic(&c), Err(Error::Config(_))));
        let mut c = small();
        c.d_hidden = 5;
        assert!(matches!(generate_synthetic(&c), Err(Error::Config(_))));
        let mut c = small();
        c.vision_signal_strength = -1.0;
        assert!(matches!(generate_synthetic(&c), Err(Error::Config(_))));
    }

    #[test]
    fn written_dataset_validates_and_reloads() {
        let s = generate_synthetic(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = s.write(dir.path()).unwrap();
        let m = crate::store::load_manifest(&path).unwrap();
        let report = validate_dataset(&m);
        assert!(report.is_ok(), "{:?}", report.violations);
        let back = Dataset::load(&path).unwrap();
        assert_eq!(back.bundles, s.dataset.bundles);
        assert_eq!(back.embeddings, s.dataset.embeddings);
    }

    #[test]
    fn basis_is_orthonormal() {
        let s = generate_synthetic(&small()).unwrap();
        let gt = &s.ground_truth;
        let q = gt.w_leak_matrix();
        let qtq = q.transpose() * &q;
        assert!((qtq - DMatrix::identity(4, 4)).norm() < 1e-12);
        let u = DVector::from_column_slice(&gt.u_vision);
        assert!((u.norm() - 1.0).abs() < 1e-12);
        assert!((q.transpose() * u).norm() < 1e-12);
    }

    #[test]
    fn text_is_linear_readout_at_signal_layer() {
        let mut c = small();
        c.text_leak_strength = 1.0;
        let s = generate_synthetic(&c).unwrap();
        let q = s.ground_truth.w_leak_matrix();
        for (meta, b) in s.dataset.samples().iter().zip(&s.dataset.bundles) {
            let h = DVector::from_iterator(12, b.layer(1).iter().map(|&v| f64::from(v)));
            let t = DVector::from_iterator(4, s.dataset.embeddings.as_ref().unwrap().get(&meta.sample_id).unwrap().iter().map(|&v| f64::from(v)));
            assert!((q.transpose() * h - t).norm() < 1e-4);
        }
    }

    #[test]
    fn label_shuffle_is_deterministic_and_not_identity() {
        let s = generate_synthetic(&small()).unwrap();
        let a = generate_label_shuffled(&s.dataset, 1);
        let b = generate_label_shuffled(&s.dataset, 1);
        assert_eq!(a.bundles, b.bundles);
        assert_ne!(a.bundles, s.dataset.bundles);
        // Same multiset of tensors within each modality.
        for m in [Modality::Vision, Modality::Audio] {
            let collect = |d: &Dataset| {
                let mut v: Vec<Vec<u32>> = d
                    .samples()
                    .iter()
                    .zip(&d.bundles)
                    .filter(|(s, _)| s.split.modality == m)
                    .map(|(_, b)| b.states.iter().map(|x| x.to_bits()).collect())
                    .collect();
                v.sort();
                v
            };
            assert_eq!(collect(&a), collect(&s.dataset));
        }
    }
}
