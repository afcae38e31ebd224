//! Deterministic synthetic corpora built from pseudo-words.
//!
//! Used by tests, benchmarks and the `synth` CLI command when no real
//! corpus is at hand. Output is a pure function of the config and seed.

use std::collections::HashSet;
use std::io::{self, Write};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{Corpus, Document};
use crate::text::tokenize;

/// One raw input record, as accepted by `corpus::ingest`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawRecord {
    pub paper_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub keywords: Vec<String>,
}

impl RawRecord {
    pub fn to_document(&self) -> Document {
        Document::new(&self.paper_id, &self.title, &self.abstract_text, self.keywords.clone())
            .expect("synthetic records are valid")
    }
}

pub fn write_jsonl(records: &[RawRecord], mut w: impl Write) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_corpus(records: &[RawRecord]) -> Corpus {
    let docs: Vec<Document> = records.iter().map(RawRecord::to_document).collect();
    Corpus::from_documents(docs, "synthetic").0
}

const CONSONANTS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "gl", "kr", "pl", "st", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "eo", "ou"];

/// `n` distinct pseudo-words that avoid `reserved` and previously issued
/// words.
pub struct WordFactory {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl WordFactory {
    pub fn new(seed: u64, reserved: &[&str]) -> Self {
        let used = reserved
            .iter()
            .flat_map(|k| tokenize(k).collect::<Vec<_>>())
            .collect();
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            used,
        }
    }

    pub fn word(&mut self) -> String {
        loop {
            let syllables = self.rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(CONSONANTS.choose(&mut self.rng).expect("non-empty"));
                w.push_str(VOWELS.choose(&mut self.rng).expect("non-empty"));
            }
            if crate::text::is_stopword(&w) || !self.used.insert(w.clone()) {
                continue;
            }
            return w;
        }
    }

    pub fn words(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word()).collect()
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn sentence(words: &[String]) -> String {
    format!("{}.", capitalize(&words.join(" ")))
}

/// Topical corpus: every document belongs to one domain whose private
/// vocabulary dominates its text.
#[derive(Debug, Clone)]
pub struct DomainCorpusConfig {
    pub docs: usize,
    pub domains: usize,
    pub domain_vocab: usize,
    pub shared_vocab: usize,
    /// Inclusive range of sentences per abstract.
    pub sentences: (usize, usize),
    /// Inclusive range of words per sentence.
    pub words: (usize, usize),
    /// Probability that a word is drawn from the domain vocabulary.
    pub domain_ratio: f64,
    pub seed: u64,
}

impl Default for DomainCorpusConfig {
    fn default() -> Self {
        Self {
            docs: 2000,
            domains: 20,
            domain_vocab: 40,
            shared_vocab: 200,
            sentences: (3, 6),
            words: (8, 14),
            domain_ratio: 0.6,
            seed: 7,
        }
    }
}

/// Documents cycle through domains, so domain `d` holds ids `p{i}` with
/// `i % domains == d`. The single keyword is `"domain {d}"`.
pub fn domain_corpus(cfg: &DomainCorpusConfig) -> Vec<RawRecord> {
    let mut factory = WordFactory::new(cfg.seed, &[]);
    let shared = factory.words(cfg.shared_vocab);
    let vocab: Vec<Vec<String>> = (0..cfg.domains).map(|_| factory.words(cfg.domain_vocab)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xD0C5);
    let draw = |rng: &mut ChaCha8Rng, d: usize, n: usize| -> Vec<String> {
        (0..n)
            .map(|_| {
                let pool = if rng.random_bool(cfg.domain_ratio) { &vocab[d] } else { &shared };
                pool.choose(rng).expect("non-empty vocabulary").clone()
            })
            .collect()
    };
    (0..cfg.docs)
        .map(|i| {
            let d = i % cfg.domains;
            let title = capitalize(&draw(&mut rng, d, 5).join(" "));
            let n = rng.random_range(cfg.sentences.0..=cfg.sentences.1);
            let sentences: Vec<String> = (0..n)
                .map(|_| {
                    let w = rng.random_range(cfg.words.0..=cfg.words.1);
                    sentence(&draw(&mut rng, d, w))
                })
                .collect();
            RawRecord {
                paper_id: format!("p{i:05}"),
                title,
                abstract_text: sentences.join(" "),
                keywords: vec![format!("domain {d}")],
            }
        })
        .collect()
}

/// Labeled corpus whose only class signal is the class keyword itself:
/// all other words come from one class-independent vocabulary.
#[derive(Debug, Clone)]
pub struct PlantedConfig {
    pub classes: Vec<String>,
    pub docs_per_class: usize,
    pub noise_vocab: usize,
    pub sentences: usize,
    pub words: usize,
    pub seed: u64,
}

impl PlantedConfig {
    pub fn new(classes: &[&str], docs_per_class: usize, seed: u64) -> Self {
        Self {
            classes: classes.iter().map(|s| s.to_string()).collect(),
            docs_per_class,
            noise_vocab: 1000,
            sentences: 4,
            words: 10,
            seed,
        }
    }
}

/// The class keyword appears in the title and in every sentence; documents
/// are interleaved by class.
pub fn planted_corpus(cfg: &PlantedConfig) -> Vec<RawRecord> {
    let reserved: Vec<&str> = cfg.classes.iter().map(String::as_str).collect();
    let noise = WordFactory::new(cfg.seed, &reserved).words(cfg.noise_vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9A47);
    let mut out = Vec::with_capacity(cfg.classes.len() * cfg.docs_per_class);
    for i in 0..cfg.docs_per_class {
        for (c, class) in cfg.classes.iter().enumerate() {
            let mut pick = |n: usize| -> Vec<String> {
                (0..n).map(|_| noise.choose(&mut rng).expect("non-empty").clone()).collect()
            };
            let mut title = pick(3);
            title.insert(1, class.clone());
            let sentences: Vec<String> = (0..cfg.sentences)
                .map(|_| {
                    let mut w = pick(cfg.words);
                    let at = w.len() / 2;
                    w.insert(at, class.clone());
                    sentence(&w)
                })
                .collect();
            out.push(RawRecord {
                paper_id: format!("e{c}-{i:05}"),
                title: capitalize(&title.join(" ")),
                abstract_text: sentences.join(" "),
                keywords: vec![class.clone()],
            });
        }
    }
    out
}
