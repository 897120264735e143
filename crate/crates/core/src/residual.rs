//! Removal of text-predictable variance from hidden states: a ridge map from
//! hidden states to text embeddings, then projection onto the null space of
//! that map, all fitted inside each training fold.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folds::FoldAssignment;
use crate::probe::{cross_validate, CvOutcome, ProbeTask};
use crate::store::{Dataset, SampleMeta, TextEmbeddingTable};
use crate::tfidf::TfidfVectorizer;

pub const DEFAULT_RIDGE_ALPHA: f64 = 1.0;
pub const DEFAULT_REL_TOL: f64 = 1e-5;

/// `W` is `d_text x d_hidden`; predictions are `W h`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeMap {
    pub w: DMatrix<f64>,
    pub alpha: f64,
}

/// Solves `W = T^T H (H^T H + alpha I)^-1` without an explicit inverse.
pub fn fit_ridge_map(h: &DMatrix<f64>, t: &DMatrix<f64>, alpha: f64) -> Result<RidgeMap> {
    if h.nrows() != t.nrows() {
        return Err(Error::Shape(format!(
            "hidden states have {} rows, text embeddings {}",
            h.nrows(),
            t.nrows()
        )));
    }
    if h.nrows() < 2 {
        return Err(Error::Shape(format!("ridge fit needs >= 2 rows, got {}", h.nrows())));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("ridge alpha must be positive, got {alpha}")));
    }
    let d = h.ncols();
    let mut gram = h.transpose() * h;
    for i in 0..d {
        gram[(i, i)] += alpha;
    }
    let rhs = h.transpose() * t;
    let x = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Shape("ridge normal equations are singular".into()))?,
    };
    let w = x.transpose();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge map".into()));
    }
    Ok(RidgeMap { w, alpha })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualProjector {
    /// `d_hidden x r`, orthonormal columns.
    pub vk: DMatrix<f64>,
    pub rel_tol: f64,
    pub singular_values: Vec<f64>,
}

impl ResidualProjector {
    pub fn rank(&self) -> usize {
        self.vk.ncols()
    }

    /// `h - Vk Vk^T h`.
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        let hv = nalgebra::DVector::from_column_slice(h);
        let coef = self.vk.transpose() * &hv;
        (hv - &self.vk * coef).iter().copied().collect()
    }

    /// Row-wise projection of an `n x d_hidden` matrix.
    pub fn apply_rows(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        if self.rank() == 0 {
            return h.clone();
        }
        h - (h * &self.vk) * self.vk.transpose()
    }
}

pub fn null_space_projector(map: &RidgeMap, rel_tol: f64) -> Result<ResidualProjector> {
    let (t, d) = map.w.shape();
    if map.w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge map".into()));
    }
    if t == 0 || d == 0 {
        return Ok(ResidualProjector {
            vk: DMatrix::zeros(d, 0),
            rel_tol,
            singular_values: Vec::new(),
        });
    }
    let svd = nalgebra::linalg::SVD::try_new(map.w.clone(), false, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::SvdFailure("did not converge".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::SvdFailure("right singular vectors missing".into()))?;
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    let s_max = s.iter().copied().fold(0.0f64, f64::max);
    let keep: Vec<usize> = (0..s.len())
        .filter(|&i| s_max > 0.0 && s[i] > rel_tol * s_max)
        .collect();
    let vk = DMatrix::from_fn(d, keep.len(), |r, c| v_t[(keep[c], r)]);
    Ok(ResidualProjector {
        vk,
        rel_tol,
        singular_values: s,
    })
}

/// Embedding rows for `indices`, erroring on any uncovered sample.
pub fn embedding_rows(
    table: &TextEmbeddingTable,
    samples: &[SampleMeta],
    indices: &[usize],
) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(indices.len(), table.d_text);
    for (r, &i) in indices.iter().enumerate() {
        let id = &samples[i].sample_id;
        let row = table
            .get(id)
            .ok_or_else(|| Error::Schema(format!("no text embedding for sample {id}")))?;
        for (c, v) in row.iter().enumerate() {
            m[(r, c)] = f64::from(*v);
        }
    }
    Ok(m)
}

/// Ridge map plus projector fitted on `train` rows only.
pub fn fit_fold_projector(
    dataset: &Dataset,
    embeddings: &TextEmbeddingTable,
    layer: usize,
    train: &[usize],
    alpha: f64,
    rel_tol: f64,
) -> Result<(RidgeMap, ResidualProjector)> {
    let h = dataset.layer_matrix(layer, train);
    let t = embedding_rows(embeddings, dataset.samples(), train)?;
    let map = fit_ridge_map(&h, &t, alpha)?;
    let proj = null_space_projector(&map, rel_tol)?;
    Ok((map, proj))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualOptions {
    pub alpha: f64,
    pub rel_tol: f64,
    pub reg_c: f64,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_RIDGE_ALPHA,
            rel_tol: DEFAULT_REL_TOL,
            reg_c: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualizedResult {
    pub task: ProbeTask,
    pub layer: usize,
    pub options: ResidualOptions,
    pub original: CvOutcome,
    pub residualized: CvOutcome,
}

/// Original and residualized probes on identical folds.
pub fn residualized_probe_cv(
    dataset: &Dataset,
    embeddings: &TextEmbeddingTable,
    task: ProbeTask,
    layer: usize,
    folds: &FoldAssignment,
    opts: ResidualOptions,
) -> Result<ResidualizedResult> {
    if layer >= dataset.n_layers() {
        return Err(Error::Config(format!(
            "layer {layer} outside [0, {})",
            dataset.n_layers()
        )));
    }
    let samples = dataset.samples();
    let (idx, y) = task.select(samples)?;
    embedding_rows(embeddings, samples, &idx)?;
    let original = cross_validate(samples, &idx, &y, folds, opts.reg_c, |tr, te| {
        Ok((dataset.layer_matrix(layer, tr), dataset.layer_matrix(layer, te)))
    })?;
    let residualized = cross_validate(samples, &idx, &y, folds, opts.reg_c, |tr, te| {
        let (_, proj) = fit_fold_projector(dataset, embeddings, layer, tr, opts.alpha, opts.rel_tol)?;
        Ok((
            proj.apply_rows(&dataset.layer_matrix(layer, tr)),
            proj.apply_rows(&dataset.layer_matrix(layer, te)),
        ))
    })?;
    Ok(ResidualizedResult {
        task,
        layer,
        options: opts,
        original,
        residualized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextFeatures {
    Tfidf,
    ExternalEmbeddings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub features: TextFeatures,
    pub task: ProbeTask,
    pub cv: CvOutcome,
}

fn question_texts<'a>(samples: &'a [SampleMeta], idx: &[usize]) -> Result<Vec<&'a str>> {
    idx.iter()
        .map(|&i| {
            samples[i]
                .question_text
                .as_deref()
                .ok_or_else(|| Error::MissingText(samples[i].sample_id.clone()))
        })
        .collect()
}

/// Probe over text features alone, same folds and probe as the hidden-state runs.
pub fn text_baseline_probe(
    features: TextFeatures,
    dataset: &Dataset,
    task: ProbeTask,
    folds: &FoldAssignment,
    reg_c: f64,
) -> Result<BaselineResult> {
    let samples = dataset.samples();
    let (idx, y) = task.select(samples)?;
    let cv = match features {
        TextFeatures::Tfidf => {
            question_texts(samples, &idx)?;
            cross_validate(samples, &idx, &y, folds, reg_c, |tr, te| {
                let train_docs = question_texts(samples, tr)?;
                let v = TfidfVectorizer::fit(&train_docs);
                Ok((v.transform(&train_docs), v.transform(&question_texts(samples, te)?)))
            })?
        }
        TextFeatures::ExternalEmbeddings => {
            let table = dataset
                .embeddings
                .as_ref()
                .ok_or_else(|| Error::Schema("dataset has no text embeddings".into()))?;
            embedding_rows(table, samples, &idx)?;
            cross_validate(samples, &idx, &y, folds, reg_c, |tr, te| {
                Ok((
                    embedding_rows(table, samples, tr)?,
                    embedding_rows(table, samples, te)?,
                ))
            })?
        }
    };
    Ok(BaselineResult { features, task, cv })
}
