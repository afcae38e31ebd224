//! Smoothed TF-IDF over unigrams.
//!
//! `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, raw counts for tf, rows
//! L2-normalized.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::tokenize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TfidfError {
    #[error("no input texts")]
    NoTexts,
    #[error("vocabulary is empty after filtering")]
    EmptyVocabulary,
}

/// Sparse row with strictly increasing column indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
}

impl SparseVector {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// True when the text shared no token with the vocabulary.
    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    /// Terms in column order (lexicographic).
    terms: Vec<String>,
    #[serde(skip)]
    vocabulary: HashMap<String, u32>,
    idf: Vec<f64>,
    doc_count: usize,
}

impl TfidfModel {
    pub fn fit<S: AsRef<str>>(texts: &[S]) -> Result<Self, TfidfError> {
        if texts.iter().all(|t| t.as_ref().trim().is_empty()) {
            return Err(TfidfError::NoTexts);
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            let mut toks: Vec<String> = tokenize(text.as_ref()).collect();
            toks.sort_unstable();
            toks.dedup();
            for t in toks {
                *df.entry(t).or_default() += 1;
            }
        }
        Self::from_document_frequencies(df, texts.len())
    }

    /// Builds the model from per-term document frequencies over `n` texts.
    pub fn from_document_frequencies(
        df: BTreeMap<String, usize>,
        n: usize,
    ) -> Result<Self, TfidfError> {
        if df.is_empty() {
            return Err(TfidfError::EmptyVocabulary);
        }
        let mut terms = Vec::with_capacity(df.len());
        let mut idf = Vec::with_capacity(df.len());
        for (term, d) in df {
            idf.push(smoothed_idf(n, d));
            terms.push(term);
        }
        let vocabulary = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Self {
            terms,
            vocabulary,
            idf,
            doc_count: n,
        })
    }

    pub fn vocab_len(&self) -> usize {
        self.terms.len()
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn term(&self, column: u32) -> &str {
        &self.terms[column as usize]
    }

    pub fn column(&self, term: &str) -> Option<u32> {
        self.vocabulary.get(term).copied()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.column(term).map(|c| self.idf[c as usize])
    }

    /// Unnormalized `tf * idf` weights.
    pub fn weights(&self, text: &str) -> SparseVector {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for tok in tokenize(text) {
            if let Some(c) = self.column(&tok) {
                *counts.entry(c).or_default() += 1;
            }
        }
        self.weigh_counts(counts)
    }

    pub(crate) fn weigh_counts(&self, counts: BTreeMap<u32, u32>) -> SparseVector {
        let mut out = SparseVector::default();
        for (c, tf) in counts {
            out.indices.push(c);
            out.values.push((tf as f64 * self.idf[c as usize]) as f32);
        }
        out
    }

    /// L2-normalized TF-IDF row. Zero (and flagged by
    /// [`SparseVector::is_zero`]) when no token is in the vocabulary.
    pub fn transform(&self, text: &str) -> SparseVector {
        let mut v = self.weights(text);
        let norm = v.norm();
        if norm > 0.0 {
            for x in &mut v.values {
                *x = (*x as f64 / norm) as f32;
            }
        }
        v
    }

    pub fn transform_all<S: AsRef<str>>(&self, texts: &[S]) -> Vec<SparseVector> {
        texts.iter().map(|t| self.transform(t.as_ref())).collect()
    }

    fn rebuild_vocabulary(&mut self) {
        self.vocabulary = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        let mut m: Self = serde_json::from_str(s)?;
        m.rebuild_vocabulary();
        Ok(m)
    }
}

pub fn smoothed_idf(n: usize, df: usize) -> f64 {
    ((1.0 + n as f64) / (1.0 + df as f64)).ln() + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idf_of_ubiquitous_token_is_one() {
        let m = TfidfModel::fit(&["cat dog", "dog fish", "dog bird"]).unwrap();
        assert_eq!(m.idf("dog"), Some(1.0));
    }

    #[test]
    fn idf_hand_evaluated() {
        // ln(3/2) + 1
        let m = TfidfModel::fit(&["cat dog", "dog fish"]).unwrap();
        let idf = m.idf("cat").unwrap();
        assert!((idf - 1.405_465_108_108_164_4).abs() < 1e-12);
        assert_eq!(m.doc_count(), 2);
        assert_eq!(m.vocab_len(), 3);
        assert_eq!(m.column("cat"), Some(0));
        assert_eq!(m.column("fish"), Some(2));
    }

    #[test]
    fn disjoint_text_is_zero_vector() {
        let m = TfidfModel::fit(&["cat dog"]).unwrap();
        let v = m.transform("unrelated words entirely");
        assert!(v.is_zero());
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn rows_are_unit_and_sorted() {
        let m = TfidfModel::fit(&["alloy steel alloy", "polymer film", "steel film"]).unwrap();
        let v = m.transform("alloy alloy steel film");
        assert!((v.norm() - 1.0).abs() < 1e-6);
        assert!(v.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn weights_scale_linearly_with_counts() {
        let m = TfidfModel::fit(&["alloy steel", "polymer film"]).unwrap();
        let once = m.weights("alloy film");
        let thrice = m.weights("alloy film alloy film alloy film");
        for (a, b) in once.values.iter().zip(&thrice.values) {
            assert!((3.0 * a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        assert_eq!(TfidfModel::fit(&["a the of"]), Err(TfidfError::EmptyVocabulary));
        assert_eq!(TfidfModel::fit::<&str>(&[]), Err(TfidfError::NoTexts));
        assert_eq!(TfidfModel::fit(&["  "]), Err(TfidfError::NoTexts));
    }

    #[test]
    fn json_round_trip_restores_vocabulary() {
        let m = TfidfModel::fit(&["alloy steel", "polymer film"]).unwrap();
        let back = TfidfModel::from_json(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.column("steel"), m.column("steel"));
    }
}
