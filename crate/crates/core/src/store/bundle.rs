//! `IMVB` hidden-state bundles.
//!
//! Layout, all little-endian:
//!
//! ```text
//! b"IMVB" | u32 version (=1) | u32 n_layers | u32 d_hidden
//! | n_layers * d_hidden f32, layer-major | 6 f32 choice logits A..F
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const BUNDLE_MAGIC: &[u8; 4] = b"IMVB";
pub const BUNDLE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Last-token hidden states at every decoder layer plus the six choice logits.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStateBundle {
    pub n_layers: usize,
    pub d_hidden: usize,
    /// Row-major `n_layers x d_hidden`.
    pub states: Vec<f32>,
    pub choice_logits: [f32; 6],
}

impl HiddenStateBundle {
    pub fn new(
        n_layers: usize,
        d_hidden: usize,
        states: Vec<f32>,
        choice_logits: [f32; 6],
    ) -> Result<Self> {
        if n_layers == 0 || d_hidden == 0 {
            return Err(Error::Shape(format!(
                "degenerate bundle shape ({n_layers}, {d_hidden})"
            )));
        }
        if states.len() != n_layers * d_hidden {
            return Err(Error::Shape(format!(
                "expected {} state values, got {}",
                n_layers * d_hidden,
                states.len()
            )));
        }
        let bundle = Self {
            n_layers,
            d_hidden,
            states,
            choice_logits,
        };
        bundle.check_finite()?;
        Ok(bundle)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_layers, self.d_hidden)
    }

    /// Hidden state at `layer` (0-indexed).
    pub fn layer(&self, layer: usize) -> &[f32] {
        let start = layer * self.d_hidden;
        &self.states[start..start + self.d_hidden]
    }

    pub fn logits_f64(&self) -> [f64; 6] {
        self.choice_logits.map(f64::from)
    }

    fn check_finite(&self) -> Result<()> {
        if let Some(i) = self.states.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "state value at layer {} dim {}",
                i / self.d_hidden,
                i % self.d_hidden
            )));
        }
        if let Some(i) = self.choice_logits.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("choice logit {i}")));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * (self.states.len() + 6));
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_layers as u32).to_le_bytes());
        out.extend_from_slice(&(self.d_hidden as u32).to_le_bytes());
        for v in self.states.iter().chain(self.choice_logits.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses and validates a bundle. `expected` pins `(n_layers, d_hidden)`.
    pub fn decode(bytes: &[u8], expected: Option<(usize, usize)>) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let (n_layers, d_hidden) = read_header(&mut r, BUNDLE_MAGIC, "bundle")?;
        if let Some((el, ed)) = expected {
            if (el, ed) != (n_layers, d_hidden) {
                return Err(Error::Shape(format!(
                    "bundle shape ({n_layers}, {d_hidden}) != expected ({el}, {ed})"
                )));
            }
        }
        let n = n_layers * d_hidden;
        let want = HEADER_LEN + 4 * (n + 6);
        if bytes.len() != want {
            return Err(Error::Format(format!(
                "bundle length {} != {want} implied by header",
                bytes.len()
            )));
        }
        let states = r.f32s(n)?;
        let logits = r.f32s(6)?;
        let choice_logits = [logits[0], logits[1], logits[2], logits[3], logits[4], logits[5]];
        let bundle = Self {
            n_layers,
            d_hidden,
            states,
            choice_logits,
        };
        bundle.check_finite()?;
        Ok(bundle)
    }
}

/// Reads magic, version and a `(u32, u32)` pair that must both be positive.
pub(crate) fn read_header(
    r: &mut ByteReader<'_>,
    magic: &[u8; 4],
    what: &str,
) -> Result<(usize, usize)> {
    let got = r.take(4).map_err(|_| Error::Format(format!("{what}: truncated header")))?;
    if got != magic {
        return Err(Error::Format(format!(
            "{what}: bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(got),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.u32().map_err(|_| Error::Format(format!("{what}: truncated header")))?;
    if version != BUNDLE_VERSION {
        return Err(Error::Format(format!("{what}: unsupported version {version}")));
    }
    let a = r.u32().map_err(|_| Error::Format(format!("{what}: truncated header")))? as usize;
    let b = r.u32().map_err(|_| Error::Format(format!("{what}: truncated header")))? as usize;
    if a == 0 || b == 0 {
        return Err(Error::Format(format!("{what}: degenerate shape ({a}, {b})")));
    }
    Ok((a, b))
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format(format!(
                "truncated: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(f64::from_le_bytes(a))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let b = self.take(4 * n)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let b = self.take(len)?;
        String::from_utf8(b.to_vec()).map_err(|e| Error::Format(format!("invalid utf-8: {e}")))
    }
}

pub(crate) fn put_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn read_bundle(path: &Path, expected: Option<(usize, usize)>) -> Result<HiddenStateBundle> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    HiddenStateBundle::decode(&bytes, expected)
}

pub fn write_bundle(path: &Path, bundle: &HiddenStateBundle) -> Result<()> {
    fs::write(path, bundle.encode()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> HiddenStateBundle {
        HiddenStateBundle::new(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.25], [2.0, 0.0, 0.0, 0.0, 0.0, 0.0])
            .unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = toy().encode();
        assert_eq!(&bytes[..4], b"IMVB");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 16 + 4 * (6 + 6));
        assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1.0);
    }

    #[test]
    fn full_scale_header() {
        let b = HiddenStateBundle::new(29, 3584, vec![0.0; 29 * 3584], [0.0; 6]).unwrap();
        let back = HiddenStateBundle::decode(&b.encode(), Some((29, 3584))).unwrap();
        assert_eq!(back.shape(), (29, 3584));
    }

    #[test]
    fn zero_layers_is_format_error() {
        let mut bytes = toy().encode();
        bytes[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(HiddenStateBundle::decode(&bytes, None), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = toy().encode();
        bytes[0] = b'X';
        assert!(matches!(HiddenStateBundle::decode(&bytes, None), Err(Error::Format(_))));
        let mut bytes = toy().encode();
        bytes[4] = 2;
        assert!(matches!(HiddenStateBundle::decode(&bytes, None), Err(Error::Format(_))));
    }

    #[test]
    fn nan_is_rejected() {
        let mut bytes = toy().encode();
        bytes[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(HiddenStateBundle::decode(&bytes, None), Err(Error::NonFinite(_))));
        let mut bytes = toy().encode();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(HiddenStateBundle::decode(&bytes, None), Err(Error::NonFinite(_))));
    }

    #[test]
    fn shape_mismatch() {
        let bytes = toy().encode();
        assert!(matches!(
            HiddenStateBundle::decode(&bytes, Some((2, 4))),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn truncated() {
        let bytes = toy().encode();
        assert!(matches!(
            HiddenStateBundle::decode(&bytes[..bytes.len() - 1], None),
            Err(Error::Format(_))
        ));
    }
}
