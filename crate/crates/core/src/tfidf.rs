//! TF-IDF features for question-text baselines.
//!
//! Lowercased, split on unicode whitespace, unigrams plus bigrams, smoothed
//! idf `ln((1 + n) / (1 + df)) + 1`, raw term counts, L2-normalized rows.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
}

pub fn terms(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower.split_whitespace().collect();
    let mut out: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
    out.extend(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    out
}

impl TfidfVectorizer {
    pub fn fit<S: AsRef<str>>(docs: &[S]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for d in docs {
            let unique: BTreeSet<String> = terms(d.as_ref()).into_iter().collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        let mut vocabulary = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (i, (term, count)) in df.into_iter().enumerate() {
            vocabulary.insert(term, i);
            idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
        }
        Self { vocabulary, idf }
    }

    pub fn len(&self) -> usize {
        self.idf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }

    /// Out-of-vocabulary terms are ignored. An empty vocabulary yields one
    /// all-zero column so downstream matrices are never zero-width.
    pub fn transform<S: AsRef<str>>(&self, docs: &[S]) -> DMatrix<f64> {
        let width = self.len().max(1);
        let mut m = DMatrix::zeros(docs.len(), width);
        for (r, d) in docs.iter().enumerate() {
            for t in terms(d.as_ref()) {
                if let Some(&c) = self.vocabulary.get(&t) {
                    m[(r, c)] += self.idf[c];
                }
            }
            let norm = m.row(r).norm();
            if norm > 0.0 {
                m.row_mut(r).unscale_mut(norm);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terms_include_bigrams() {
        assert_eq!(terms("The  Red\tDoor"), ["the", "red", "door", "the red", "red door"]);
    }

    #[test]
    fn idf_and_normalization() {
        let docs = ["a b", "a c"];
        let v = TfidfVectorizer::fit(&docs);
        let ia = v.vocabulary["a"];
        let ib = v.vocabulary["b"];
        assert!((v.idf[ia] - 1.0).abs() < 1e-12);
        assert!((v.idf[ib] - ((3.0f64 / 2.0).ln() + 1.0)).abs() < 1e-12);
        let m = v.transform(&docs);
        for r in 0..2 {
            assert!((m.row(r).norm() - 1.0).abs() < 1e-12);
        }
        let unseen = v.transform(&["zzz"]);
        assert_eq!(unseen.row(0).norm(), 0.0);
    }
}
