//! `IMVA` model assets: final norm weights, unembedding, correct token ids.
//!
//! ```text
//! b"IMVA" | u32 version (=1) | u32 d_hidden | u32 vocab_size | f64 norm_eps
//! | d_hidden f32 norm weights | vocab_size * d_hidden f32 unembed, row-major
//! | u32 n_ids | n_ids * (u32 len, utf-8 sample_id, u32 token_id)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::bundle::{put_string, read_header, ByteReader, BUNDLE_VERSION};
use crate::error::{Error, Result};

pub const ASSETS_MAGIC: &[u8; 4] = b"IMVA";
pub const DEFAULT_NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelAssets {
    pub d_hidden: usize,
    pub vocab_size: usize,
    pub norm_weights: Vec<f32>,
    /// Row-major `vocab_size x d_hidden`.
    pub unembed: Vec<f32>,
    pub norm_eps: f64,
    pub correct_token_ids: BTreeMap<String, u32>,
}

impl ModelAssets {
    pub fn validate(&self) -> Result<()> {
        if self.d_hidden == 0 || self.vocab_size == 0 {
            return Err(Error::Shape("assets: degenerate shape".into()));
        }
        if self.norm_weights.len() != self.d_hidden {
            return Err(Error::Shape(format!(
                "assets: norm weights length {} != d_hidden {}",
                self.norm_weights.len(),
                self.d_hidden
            )));
        }
        if self.unembed.len() != self.vocab_size * self.d_hidden {
            return Err(Error::Shape(format!(
                "assets: unembed has {} values, expected {}",
                self.unembed.len(),
                self.vocab_size * self.d_hidden
            )));
        }
        if !(self.norm_eps >= 0.0 && self.norm_eps.is_finite()) {
            return Err(Error::Format(format!("assets: bad norm_eps {}", self.norm_eps)));
        }
        if self
            .norm_weights
            .iter()
            .chain(self.unembed.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("assets contain NaN/Inf".into()));
        }
        if let Some((id, tok)) = self
            .correct_token_ids
            .iter()
            .find(|(_, &t)| t as usize >= self.vocab_size)
        {
            return Err(Error::Shape(format!(
                "assets: token id {tok} for {id} >= vocab_size {}",
                self.vocab_size
            )));
        }
        Ok(())
    }

    pub fn unembed_row(&self, token: usize) -> &[f32] {
        &self.unembed[token * self.d_hidden..(token + 1) * self.d_hidden]
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ASSETS_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.d_hidden as u32).to_le_bytes());
        out.extend_from_slice(&(self.vocab_size as u32).to_le_bytes());
        out.extend_from_slice(&self.norm_eps.to_le_bytes());
        for v in self.norm_weights.iter().chain(self.unembed.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.correct_token_ids.len() as u32).to_le_bytes());
        for (id, tok) in &self.correct_token_ids {
            put_string(&mut out, id);
            out.extend_from_slice(&tok.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let (d_hidden, vocab_size) = read_header(&mut r, ASSETS_MAGIC, "assets")?;
        let norm_eps = r.f64()?;
        let norm_weights = r.f32s(d_hidden)?;
        let unembed = r.f32s(vocab_size * d_hidden)?;
        let n_ids = r.u32()? as usize;
        let mut correct_token_ids = BTreeMap::new();
        for _ in 0..n_ids {
            let id = r.string()?;
            let tok = r.u32()?;
            if correct_token_ids.insert(id.clone(), tok).is_some() {
                return Err(Error::Format(format!("assets: duplicate sample id {id}")));
            }
        }
        if r.remaining() != 0 {
            return Err(Error::Format(format!("assets: {} trailing bytes", r.remaining())));
        }
        let assets = Self {
            d_hidden,
            vocab_size,
            norm_weights,
            unembed,
            norm_eps,
            correct_token_ids,
        };
        assets.validate()?;
        Ok(assets)
    }
}

pub fn read_assets(path: &Path) -> Result<ModelAssets> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelAssets::decode(&bytes)
}

pub fn write_assets(path: &Path, assets: &ModelAssets) -> Result<()> {
    fs::write(path, assets.encode()).map_err(|e| Error::io(path, e))
}
