use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::assets::{read_assets, write_assets, ModelAssets};
use super::bundle::{read_bundle, write_bundle, HiddenStateBundle};
use super::embeddings::{read_embeddings, write_embeddings, TextEmbeddingTable};
use super::manifest::{check_structure, load_manifest, write_manifest};
use super::types::{Manifest, SampleMeta};
use crate::error::{Error, Result};

/// A fully loaded dataset. Samples are held in `sample_id` order regardless
/// of manifest order, so no result depends on how the manifest was written.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub bundles: Vec<HiddenStateBundle>,
    pub assets: Option<ModelAssets>,
    pub embeddings: Option<TextEmbeddingTable>,
}

impl Dataset {
    pub fn new(
        mut manifest: Manifest,
        bundles: Vec<HiddenStateBundle>,
        assets: Option<ModelAssets>,
        embeddings: Option<TextEmbeddingTable>,
    ) -> Result<Self> {
        if manifest.samples.len() != bundles.len() {
            return Err(Error::Shape(format!(
                "{} samples but {} bundles",
                manifest.samples.len(),
                bundles.len()
            )));
        }
        let mut pairs: Vec<(SampleMeta, HiddenStateBundle)> =
            manifest.samples.drain(..).zip(bundles).collect();
        pairs.sort_by(|a, b| a.0.sample_id.cmp(&b.0.sample_id));
        let (samples, bundles): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        manifest.samples = samples;
        if let Some(first) = bundles.first() {
            if let Some((i, b)) = bundles
                .iter()
                .enumerate()
                .find(|(_, b)| b.shape() != first.shape())
            {
                return Err(Error::Shape(format!(
                    "sample {}: bundle shape {:?} differs from {:?}",
                    manifest.samples[i].sample_id,
                    b.shape(),
                    first.shape()
                )));
            }
        }
        Ok(Self {
            manifest,
            bundles,
            assets,
            embeddings,
        })
    }

    /// Loads the manifest and every file it references.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = load_manifest(manifest_path)?;
        let mut expected = None;
        let mut bundles = Vec::with_capacity(manifest.samples.len());
        for s in &manifest.samples {
            let b = read_bundle(&manifest.resolve(&s.bundle_path), expected).map_err(|e| match e {
                Error::Shape(m) => Error::Shape(format!("sample {}: {m}", s.sample_id)),
                other => other,
            })?;
            expected = Some(b.shape());
            bundles.push(b);
        }
        let assets = manifest
            .assets_path
            .as_deref()
            .map(|p| read_assets(&manifest.resolve(p)))
            .transpose()?;
        let embeddings = manifest
            .embeddings_path
            .as_deref()
            .map(|p| read_embeddings(&manifest.resolve(p)))
            .transpose()?;
        Self::new(manifest, bundles, assets, embeddings)
    }

    /// Writes manifest, bundles, assets and embeddings under `dir`, returning
    /// the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        check_structure(&self.manifest)?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (s, b) in self.manifest.samples.iter().zip(&self.bundles) {
            let path = dir.join(&s.bundle_path);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_bundle(&path, b)?;
        }
        if let (Some(a), Some(p)) = (&self.assets, &self.manifest.assets_path) {
            write_assets(&dir.join(p), a)?;
        }
        if let (Some(e), Some(p)) = (&self.embeddings, &self.manifest.embeddings_path) {
            write_embeddings(&dir.join(p), e)?;
        }
        let path = dir.join("manifest.json");
        write_manifest(&path, &self.manifest)?;
        Ok(path)
    }

    pub fn samples(&self) -> &[SampleMeta] {
        &self.manifest.samples
    }

    pub fn len(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundles.is_empty()
    }

    pub fn n_layers(&self) -> usize {
        self.bundles.first().map_or(0, |b| b.n_layers)
    }

    pub fn d_hidden(&self) -> usize {
        self.bundles.first().map_or(0, |b| b.d_hidden)
    }

    pub fn index_of(&self, sample_id: &str) -> Option<usize> {
        self.manifest
            .samples
            .binary_search_by(|s| s.sample_id.as_str().cmp(sample_id))
            .ok()
    }

    /// Hidden states of `indices` at `layer` as an `n x d_hidden` matrix.
    pub fn layer_matrix(&self, layer: usize, indices: &[usize]) -> DMatrix<f64> {
        let d = self.d_hidden();
        DMatrix::from_fn(indices.len(), d, |r, c| {
            f64::from(self.bundles[indices[r]].layer(layer)[c])
        })
    }

    /// Concatenated hidden states over `layers` (window features).
    pub fn window_matrix(&self, layers: &[usize], indices: &[usize]) -> DMatrix<f64> {
        let d = self.d_hidden();
        DMatrix::from_fn(indices.len(), d * layers.len(), |r, c| {
            f64::from(self.bundles[indices[r]].layer(layers[c / d])[c % d])
        })
    }

    /// Text embeddings of `indices` as an `n x d_text` matrix.
    pub fn embedding_matrix(&self, indices: &[usize]) -> Result<DMatrix<f64>> {
        let table = self
            .embeddings
            .as_ref()
            .ok_or_else(|| Error::Schema("dataset has no text embeddings".into()))?;
        let mut rows = Vec::with_capacity(indices.len());
        for &i in indices {
            let id = &self.manifest.samples[i].sample_id;
            rows.push(
                table
                    .get(id)
                    .ok_or_else(|| Error::Schema(format!("no embedding for sample {id}")))?,
            );
        }
        Ok(DMatrix::from_fn(indices.len(), table.d_text, |r, c| {
            f64::from(rows[r][c])
        }))
    }
}
