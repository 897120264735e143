//! `IMVE` text-embedding tables (one row per sample, e.g. sentence embeddings
//! of the question text computed elsewhere).
//!
//! ```text
//! b"IMVE" | u32 version (=1) | u32 d_text | u32 n_rows
//! | n_rows * (u32 len, utf-8 sample_id, d_text f32)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::bundle::{put_string, read_header, ByteReader, BUNDLE_VERSION};
use crate::error::{Error, Result};

pub const EMBEDDINGS_MAGIC: &[u8; 4] = b"IMVE";

#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbeddingTable {
    pub d_text: usize,
    pub rows: BTreeMap<String, Vec<f32>>,
}

impl TextEmbeddingTable {
    pub fn new(d_text: usize, rows: BTreeMap<String, Vec<f32>>) -> Result<Self> {
        if d_text == 0 {
            return Err(Error::Shape("embeddings: d_text = 0".into()));
        }
        if let Some((id, row)) = rows.iter().find(|(_, r)| r.len() != d_text) {
            return Err(Error::Shape(format!(
                "embeddings: row {id} has length {}, expected {d_text}",
                row.len()
            )));
        }
        if rows.values().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embeddings contain NaN/Inf".into()));
        }
        Ok(Self { d_text, rows })
    }

    pub fn get(&self, sample_id: &str) -> Option<&[f32]> {
        self.rows.get(sample_id).map(Vec::as_slice)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(EMBEDDINGS_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.d_text as u32).to_le_bytes());
        out.extend_from_slice(&(self.rows.len() as u32).to_le_bytes());
        for (id, row) in &self.rows {
            put_string(&mut out, id);
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let (d_text, n_rows) = read_header(&mut r, EMBEDDINGS_MAGIC, "embeddings")?;
        let mut rows = BTreeMap::new();
        for _ in 0..n_rows {
            let id = r.string()?;
            let row = r.f32s(d_text)?;
            if rows.insert(id.clone(), row).is_some() {
                return Err(Error::Format(format!("embeddings: duplicate sample id {id}")));
            }
        }
        if r.remaining() != 0 {
            return Err(Error::Format(format!(
                "embeddings: {} trailing bytes",
                r.remaining()
            )));
        }
        Self::new(d_text, rows)
    }
}

pub fn read_embeddings(path: &Path) -> Result<TextEmbeddingTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    TextEmbeddingTable::decode(&bytes)
}

pub fn write_embeddings(path: &Path, table: &TextEmbeddingTable) -> Result<()> {
    fs::write(path, table.encode()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_ragged_rows() {
        let rows: BTreeMap<_, _> = [("a".to_string(), vec![1.0f32, 2.0]), ("b".into(), vec![0.0, -1.0])]
            .into_iter()
            .collect();
        let t = TextEmbeddingTable::new(2, rows).unwrap();
        assert_eq!(TextEmbeddingTable::decode(&t.encode()).unwrap(), t);

        let ragged: BTreeMap<_, _> = [("a".to_string(), vec![1.0f32])].into_iter().collect();
        assert!(matches!(TextEmbeddingTable::new(2, ragged), Err(Error::Shape(_))));
    }
}
