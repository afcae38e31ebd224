#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xdomain::ann::IndexParams;
use xdomain::corpus::{Corpus, Document};
use xdomain::embedding::{fallback_encode, EmbedError, EmbeddingKind, EmbeddingProvider, FallbackEncoder, Vector};
use xdomain::snapshot::{BuildConfig, Built, Snapshot};
use xdomain::synth::{domain_corpus, to_corpus, DomainCorpusConfig};

/// Looks texts up in a table; anything else gets a fallback vector.
pub struct TableProvider {
    pub kind: EmbeddingKind,
    pub dim: usize,
    pub table: HashMap<String, Vector>,
}

impl TableProvider {
    pub fn new(kind: EmbeddingKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            table: HashMap::new(),
        }
    }

    pub fn insert(&mut self, text: &str, raw: &[f64]) {
        assert_eq!(raw.len(), self.dim);
        self.table.insert(text.to_string(), Vector::normalized(raw).unwrap());
    }
}

impl EmbeddingProvider for TableProvider {
    fn name(&self) -> &str {
        "table"
    }
    fn dimension(&self) -> usize {
        self.dim
    }
    fn kind(&self) -> EmbeddingKind {
        self.kind
    }
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        texts
            .iter()
            .map(|t| match self.table.get(*t) {
                Some(v) => Ok(v.clone()),
                None => fallback_encode(t, self.dim.max(16)).map(|v| {
                    Vector::normalized_f32(&v.as_slice()[..self.dim]).unwrap()
                }),
            })
            .collect()
    }
}

/// A document with explicit document and sentence vectors.
pub struct FixtureDoc {
    pub id: String,
    pub doc_vec: Vec<f64>,
    pub sentences: Vec<(String, Vec<f64>)>,
}

pub struct Fixture {
    pub docs: Vec<FixtureDoc>,
    pub dim: usize,
}

impl Fixture {
    pub fn providers(&self) -> (TableProvider, TableProvider) {
        let mut dp = TableProvider::new(EmbeddingKind::Document, self.dim);
        let mut sp = TableProvider::new(EmbeddingKind::Sentence, self.dim);
        for d in &self.docs {
            dp.insert(&self.document(d).encoder_text(), &d.doc_vec);
            for (text, v) in &d.sentences {
                sp.insert(text, v);
            }
        }
        (dp, sp)
    }

    fn document(&self, d: &FixtureDoc) -> Document {
        let abs: Vec<&str> = d.sentences.iter().map(|(t, _)| t.as_str()).collect();
        let doc = Document::new(&d.id, &format!("Title of {}", d.id), &abs.join(" "), vec![]).unwrap();
        assert_eq!(doc.sentences.len(), d.sentences.len(), "fixture sentences must split cleanly");
        doc
    }

    pub fn corpus(&self) -> Corpus {
        Corpus::from_documents(self.docs.iter().map(|d| self.document(d)), "fixture").0
    }

    pub fn build(&self, k: usize, params: IndexParams) -> (Built, TableProvider) {
        let (dp, sp) = self.providers();
        let cfg = BuildConfig {
            k,
            index: params,
            ..BuildConfig::default()
        };
        let built = Snapshot::build(self.corpus(), &dp, &sp, &cfg, None).unwrap();
        (built, sp)
    }
}

/// Sentence text that the splitter keeps whole: `"Doc <d> part <i> words."`.
pub fn sentence_text(doc: usize, i: usize) -> String {
    format!("Doc {doc} part {i} words.")
}

pub fn unit(dim: usize, axis: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[axis] = 1.0;
    v
}

pub fn jitter(rng: &mut ChaCha8Rng, v: &[f64], scale: f64) -> Vec<f64> {
    v.iter().map(|x| x + scale * (rng.random::<f64>() * 2.0 - 1.0)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Synthetic topical corpus built with the fallback encoder.
pub fn domain_snapshot(docs: usize, domains: usize, k: usize, dim: usize, params: IndexParams) -> (Built, FallbackEncoder) {
    let recs = domain_corpus(&DomainCorpusConfig {
        docs,
        domains,
        ..Default::default()
    });
    let dp = FallbackEncoder::new(dim, EmbeddingKind::Document).unwrap();
    let sp = FallbackEncoder::new(dim, EmbeddingKind::Sentence).unwrap();
    let cfg = BuildConfig {
        k,
        index: params,
        ..BuildConfig::default()
    };
    (Snapshot::build(to_corpus(&recs), &dp, &sp, &cfg, None).unwrap(), sp)
}
