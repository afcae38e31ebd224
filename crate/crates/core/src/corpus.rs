//! Paper corpus: ingestion of line-delimited records, sentence splitting and
//! the persisted corpus file.
//!
//! Input records are one JSON object per line:
//!
//! ```text
//! {"paper_id": "p1", "title": "...", "abstract": "...", "keywords": ["alloys"]}
//! ```
//!
//! The persisted form prepends a header line carrying the format version and
//! stores the sentence split alongside each record. [`ingest`] accepts both.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::has_alphabetic;

pub const CORPUS_FORMAT: &str = "xdomain-corpus";
pub const CORPUS_FORMAT_VERSION: u32 = 1;

/// Minimum trimmed character count of an indexed sentence.
pub const MIN_SENTENCE_CHARS: usize = 3;

/// Tokens ending in '.' that never terminate a sentence (compared lowercase).
const ABBREVIATIONS: &[&str] = &[
    "al.", "approx.", "ca.", "cf.", "ch.", "dr.", "e.g.", "eq.", "eqs.", "fig.", "figs.", "i.e.",
    "mr.", "mrs.", "ms.", "no.", "nos.", "prof.", "ref.", "refs.", "resp.", "sec.", "st.",
    "tab.", "vol.", "vs.",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no valid documents in {path} ({skipped} records skipped)")]
    Empty { path: String, skipped: usize },
    #[error("unsupported corpus format version {0}")]
    Version(u32),
    #[error("malformed corpus file at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("abstract is empty")]
    Empty,
    #[error("abstract has no alphabetic content")]
    NoAlphabetic,
    #[error("abstract shorter than {MIN_SENTENCE_CHARS} characters")]
    TooShort,
}

/// Address of one sentence: paper id plus 0-based position in its abstract.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SentenceRef {
    pub doc_id: String,
    pub position: u32,
}

impl SentenceRef {
    pub fn new(doc_id: impl Into<String>, position: u32) -> Self {
        Self {
            doc_id: doc_id.into(),
            position,
        }
    }

    /// Stable string key, `"<doc_id>#<position>"`.
    pub fn key(&self) -> String {
        format!("{}#{}", self.doc_id, self.position)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub position: u32,
    pub text: String,
}

impl Sentence {
    pub fn reference(&self) -> SentenceRef {
        SentenceRef::new(self.doc_id.clone(), self.position)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub paper_id: String,
    pub title: String,
    pub abstract_text: String,
    pub sentences: Vec<Sentence>,
    pub keywords: Vec<String>,
}

impl Document {
    /// Validates the record and splits its abstract.
    pub fn new(
        paper_id: &str,
        title: &str,
        abstract_text: &str,
        keywords: Vec<String>,
    ) -> Result<Self, String> {
        let paper_id = paper_id.trim();
        let title = title.trim();
        let abstract_text = abstract_text.trim();
        if paper_id.is_empty() {
            return Err("empty paper_id".into());
        }
        if title.is_empty() {
            return Err("empty title".into());
        }
        if abstract_text.is_empty() {
            return Err("empty abstract".into());
        }
        let texts = split_sentences(abstract_text).map_err(|e| e.to_string())?;
        let doc = Self::from_parts(
            paper_id.to_string(),
            title.to_string(),
            abstract_text.to_string(),
            texts,
            keywords,
        );
        doc.validate()?;
        Ok(doc)
    }

    fn from_parts(
        paper_id: String,
        title: String,
        abstract_text: String,
        sentence_texts: Vec<String>,
        keywords: Vec<String>,
    ) -> Self {
        let sentences = sentence_texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| Sentence {
                doc_id: paper_id.clone(),
                position: i as u32,
                text,
            })
            .collect();
        let keywords = keywords
            .into_iter()
            .map(|k| k.trim().to_string())
            .filter(|k| !k.is_empty())
            .collect();
        Self {
            paper_id,
            title,
            abstract_text,
            sentences,
            keywords,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.sentences.is_empty() {
            return Err("no sentences".into());
        }
        for (i, s) in self.sentences.iter().enumerate() {
            if s.position as usize != i || s.doc_id != self.paper_id {
                return Err(format!("sentence {i} has inconsistent reference"));
            }
            if s.text.trim().chars().count() < MIN_SENTENCE_CHARS {
                return Err(format!("sentence {i} shorter than {MIN_SENTENCE_CHARS} chars"));
            }
            if !has_alphabetic(&s.text) {
                return Err(format!("sentence {i} has no alphabetic token"));
            }
        }
        let joined: String = self.sentences.iter().map(|s| s.text.as_str()).collect();
        if strip_ws(&joined) != strip_ws(&self.abstract_text) {
            return Err("sentences do not reconstruct the abstract".into());
        }
        Ok(())
    }

    /// Encoder input for document-level embeddings.
    pub fn encoder_text(&self) -> String {
        format!("{} [SEP] {}", self.title, self.abstract_text)
    }
}

fn strip_ws(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub sentences: usize,
}

/// Immutable, validated set of documents.
#[derive(Debug, Clone)]
pub struct Corpus {
    documents: Vec<Document>,
    source_path: String,
    stats: CorpusStats,
    by_id: HashMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.documents == other.documents
    }
}

impl Corpus {
    /// Builds a corpus from validated documents. Later duplicates of a
    /// paper id are dropped and returned.
    pub fn from_documents(
        documents: impl IntoIterator<Item = Document>,
        source_path: impl Into<String>,
    ) -> (Self, Vec<Document>) {
        let mut kept = Vec::new();
        let mut dups = Vec::new();
        let mut by_id = HashMap::new();
        for doc in documents {
            if by_id.contains_key(&doc.paper_id) {
                dups.push(doc);
                continue;
            }
            by_id.insert(doc.paper_id.clone(), kept.len());
            kept.push(doc);
        }
        let stats = CorpusStats {
            documents: kept.len(),
            sentences: kept.iter().map(|d| d.sentences.len()).sum(),
        };
        (
            Self {
                documents: kept,
                source_path: source_path.into(),
                stats,
                by_id,
            },
            dups,
        )
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    pub fn stats(&self) -> CorpusStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, paper_id: &str) -> Option<&Document> {
        self.by_id.get(paper_id).map(|&i| &self.documents[i])
    }

    pub fn index_of(&self, paper_id: &str) -> Option<usize> {
        self.by_id.get(paper_id).copied()
    }

    pub fn sentence(&self, r: &SentenceRef) -> Option<&Sentence> {
        self.get(&r.doc_id)?.sentences.get(r.position as usize)
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.documents.iter().flat_map(|d| d.sentences.iter())
    }

    /// Writes the versioned corpus file.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = Header {
            format: CORPUS_FORMAT.to_string(),
            version: CORPUS_FORMAT_VERSION,
            documents: self.stats.documents,
            sentences: self.stats.sentences,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for doc in &self.documents {
            let rec = StoredRecord {
                paper_id: doc.paper_id.clone(),
                title: doc.title.clone(),
                abstract_text: doc.abstract_text.clone(),
                keywords: doc.keywords.clone(),
                sentences: Some(doc.sentences.iter().map(|s| s.text.clone()).collect()),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let io_err = |source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        };
        let f = File::create(path).map_err(io_err)?;
        self.write_to(BufWriter::new(f)).map_err(io_err)
    }

    /// Reads a persisted corpus file, trusting its stored sentence split.
    /// Unlike [`ingest`] any invalid record is an error.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let io_err = |source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        };
        let reader = BufReader::new(File::open(path).map_err(io_err)?);
        let mut docs = Vec::new();
        let mut saw_header = false;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            if !saw_header {
                let header: Header =
                    serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                        line: i + 1,
                        reason: format!("bad header: {e}"),
                    })?;
                if header.format != CORPUS_FORMAT {
                    return Err(CorpusError::Malformed {
                        line: i + 1,
                        reason: format!("unknown format {:?}", header.format),
                    });
                }
                if header.version != CORPUS_FORMAT_VERSION {
                    return Err(CorpusError::Version(header.version));
                }
                saw_header = true;
                continue;
            }
            let malformed = |reason: String| CorpusError::Malformed { line: i + 1, reason };
            let rec: StoredRecord =
                serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            let doc = match rec.sentences {
                Some(texts) => {
                    let doc = Document::from_parts(
                        rec.paper_id,
                        rec.title,
                        rec.abstract_text,
                        texts,
                        rec.keywords,
                    );
                    doc.validate().map_err(malformed)?;
                    doc
                }
                None => Document::new(&rec.paper_id, &rec.title, &rec.abstract_text, rec.keywords)
                    .map_err(malformed)?,
            };
            docs.push(doc);
        }
        let (corpus, dups) = Corpus::from_documents(docs, path.display().to_string());
        if let Some(d) = dups.first() {
            return Err(CorpusError::Malformed {
                line: 0,
                reason: format!("duplicate paper_id {:?}", d.paper_id),
            });
        }
        if corpus.is_empty() {
            return Err(CorpusError::Empty {
                path: path.display().to_string(),
                skipped: 0,
            });
        }
        Ok(corpus)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    documents: usize,
    sentences: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredRecord {
    paper_id: String,
    title: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
    #[serde(default)]
    keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentences: Option<Vec<String>>,
}

/// A record that did not make it into the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    /// 1-based line number in the input file.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct Ingested {
    pub corpus: Corpus,
    pub skipped: Vec<Skipped>,
}

/// Reads line-delimited records, re-splitting every abstract. Invalid and
/// duplicate records are skipped and reported.
pub fn ingest(path: impl AsRef<Path>, max_docs: Option<usize>) -> Result<Ingested, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut ingested = ingest_reader(BufReader::new(file), max_docs).map_err(io_err)?;
    if ingested.corpus.is_empty() {
        return Err(CorpusError::Empty {
            path: path.display().to_string(),
            skipped: ingested.skipped.len(),
        });
    }
    ingested.corpus.source_path = path.display().to_string();
    Ok(ingested)
}

/// Reader-based core of [`ingest`]; an empty result is not an error here.
pub fn ingest_reader(reader: impl BufRead, max_docs: Option<usize>) -> std::io::Result<Ingested> {
    let mut docs: Vec<Document> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut skipped = Vec::new();
    let mut first = true;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if std::mem::take(&mut first) {
            if let Ok(h) = serde_json::from_str::<Header>(&line) {
                if h.format == CORPUS_FORMAT {
                    continue;
                }
            }
        }
        if max_docs.is_some_and(|m| docs.len() >= m) {
            break;
        }
        let rec: StoredRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                skipped.push(Skipped {
                    line: lineno,
                    reason: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        match Document::new(&rec.paper_id, &rec.title, &rec.abstract_text, rec.keywords) {
            Ok(doc) => {
                if let Some(first_line) = seen.get(&doc.paper_id) {
                    skipped.push(Skipped {
                        line: lineno,
                        reason: format!(
                            "duplicate paper_id {:?} (first seen on line {first_line})",
                            doc.paper_id
                        ),
                    });
                } else {
                    seen.insert(doc.paper_id.clone(), lineno);
                    docs.push(doc);
                }
            }
            Err(reason) => skipped.push(Skipped {
                line: lineno,
                reason,
            }),
        }
    }
    let (corpus, _) = Corpus::from_documents(docs, String::new());
    Ok(Ingested { corpus, skipped })
}

fn is_abbreviation(before: &str) -> bool {
    let word = before
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or(before)
        .trim_start_matches(['(', '[', '"', '\'']);
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Byte offsets at which a new sentence starts (excluding 0).
fn boundaries(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if !matches!(c, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        // closing quotes and brackets stay with the sentence they end
        let mut j = i + 1;
        while j < chars.len() && matches!(chars[j].1, '"' | '\'' | ')' | ']' | '\u{201d}') {
            j += 1;
        }
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let has_gap = k > j;
        let starts_new = k < chars.len() && (chars[k].1.is_uppercase() || chars[k].1.is_ascii_digit());
        if has_gap && starts_new && !(c == '.' && is_abbreviation(&text[..pos + 1])) {
            out.push(chars[k].0);
        }
        i = j.max(i + 1);
    }
    out
}

fn is_weak(fragment: &str) -> bool {
    let t = fragment.trim();
    t.chars().count() < MIN_SENTENCE_CHARS || !has_alphabetic(t)
}

/// Rule-based sentence splitter.
///
/// A boundary follows '.', '!' or '?' when whitespace and then an uppercase
/// letter or digit come next, unless the period closes a known abbreviation.
/// Fragments shorter than [`MIN_SENTENCE_CHARS`] or without letters are
/// merged into the preceding sentence (or the following one at the start).
pub fn split_sentences(text: &str) -> Result<Vec<String>, SplitError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(SplitError::Empty);
    }
    if !has_alphabetic(trimmed) {
        return Err(SplitError::NoAlphabetic);
    }
    if trimmed.chars().count() < MIN_SENTENCE_CHARS {
        return Err(SplitError::TooShort);
    }
    let mut cuts = vec![0];
    cuts.extend(boundaries(trimmed));
    cuts.push(trimmed.len());

    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut pending_start: Option<usize> = None;
    for w in cuts.windows(2) {
        let (start, end) = (w[0], w[1]);
        let start = pending_start.take().unwrap_or(start);
        if is_weak(&trimmed[start..end]) {
            match ranges.last_mut() {
                Some(last) => last.1 = end,
                None => pending_start = Some(start),
            }
        } else {
            ranges.push((start, end));
        }
    }
    if let Some(start) = pending_start {
        // every fragment was weak; keep the whole text as one sentence
        ranges.push((start, trimmed.len()));
    }
    Ok(ranges
        .into_iter()
        .map(|(s, e)| trimmed[s..e].trim().to_string())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splits_three_plain_sentences() {
        let s = split_sentences("We study X. We find Y. It works.").unwrap();
        assert_eq!(s, vec!["We study X.", "We find Y.", "It works."]);
    }

    #[test]
    fn no_delimiter_gives_whole_string() {
        let s = split_sentences("Single sentence without period").unwrap();
        assert_eq!(s, vec!["Single sentence without period"]);
    }

    #[test]
    fn abbreviation_is_not_a_boundary() {
        let s = split_sentences("Fig. 3 shows results. We conclude.").unwrap();
        assert_eq!(s, vec!["Fig. 3 shows results.", "We conclude."]);
        let s = split_sentences("As Smith et al. Showed before, e.g. In films. Done here.").unwrap();
        assert_eq!(s, vec!["As Smith et al. Showed before, e.g. In films.", "Done here."]);
    }

    #[test]
    fn lowercase_continuation_and_decimals_do_not_split() {
        let s = split_sentences("Values of 3.5 eV were found. the rest follows.").unwrap();
        assert_eq!(s.len(), 1);
        let s = split_sentences("Yield rose by 2.5% overall. 12 samples failed.").unwrap();
        assert_eq!(s, vec!["Yield rose by 2.5% overall.", "12 samples failed."]);
    }

    #[test]
    fn short_fragments_merge_backwards_or_forwards() {
        let s = split_sentences("We did X. A. Then Y.").unwrap();
        assert_eq!(s, vec!["We did X. A.", "Then Y."]);
        let s = split_sentences("A. Then Y happened.").unwrap();
        assert_eq!(s, vec!["A. Then Y happened."]);
        let s = split_sentences("Results hold. 42. Next part.").unwrap();
        assert_eq!(s, vec!["Results hold. 42.", "Next part."]);
    }

    #[test]
    fn question_and_exclamation_marks_split() {
        let s = split_sentences("Does it scale? Yes! It does.").unwrap();
        assert_eq!(s, vec!["Does it scale?", "Yes!", "It does."]);
    }

    #[test]
    fn error_cases() {
        assert_eq!(split_sentences("   "), Err(SplitError::Empty));
        assert_eq!(split_sentences("12. 34."), Err(SplitError::NoAlphabetic));
        assert_eq!(split_sentences("ab"), Err(SplitError::TooShort));
    }

    #[test]
    fn ingest_counts_skips_and_duplicates() {
        let input = concat!(
            r#"{"paper_id":"a","title":"T","abstract":"One thing. Two things."}"#,
            "\n",
            r#"{"paper_id":"b","title":"T","abstract":""}"#,
            "\n",
            "not json\n",
            r#"{"paper_id":"a","title":"Other","abstract":"Duplicate body."}"#,
            "\n",
            r#"{"paper_id":"c","title":"T","abstract":"Third paper.","keywords":["alloys"," "]}"#,
            "\n",
        );
        let ing = ingest_reader(input.as_bytes(), None).unwrap();
        assert_eq!(ing.corpus.len(), 2);
        assert_eq!(ing.skipped.len(), 3);
        assert_eq!(ing.skipped[0].line, 2);
        assert!(ing.skipped[2].reason.contains("duplicate"));
        assert_eq!(ing.corpus.get("a").unwrap().title, "T");
        assert_eq!(ing.corpus.get("c").unwrap().keywords, vec!["alloys"]);
        assert_eq!(ing.corpus.stats().sentences, 3);
    }

    #[test]
    fn ingest_respects_max_docs() {
        let input = (0..5)
            .map(|i| format!(r#"{{"paper_id":"p{i}","title":"T","abstract":"Body text."}}"#))
            .collect::<Vec<_>>()
            .join("\n");
        let ing = ingest_reader(input.as_bytes(), Some(3)).unwrap();
        assert_eq!(ing.corpus.len(), 3);
    }

    #[test]
    fn encoder_text_uses_sep_convention() {
        let d = Document::new("p", "Title", "Body text here.", vec![]).unwrap();
        assert_eq!(d.encoder_text(), "Title [SEP] Body text here.");
    }

    fn abstract_strategy() -> impl Strategy<Value = String> {
        let word = prop_oneof![
            "[a-z]{1,8}",
            "[A-Z][a-z]{0,6}",
            "[0-9]{1,3}",
            Just("Fig.".to_string()),
            Just("e.g.".to_string()),
            Just("et al.".to_string()),
            Just("3.5".to_string()),
        ];
        let punct = prop_oneof![Just(""), Just("."), Just("!"), Just("?"), Just(","), Just(".)")];
        let ws = prop_oneof![Just(" "), Just("  "), Just("\n"), Just(" \t")];
        proptest::collection::vec((word, punct, ws), 1..40).prop_map(|parts| {
            parts
                .into_iter()
                .map(|(w, p, s)| format!("{w}{p}{s}"))
                .collect::<String>()
        })
    }

    proptest! {
        #[test]
        fn split_reconstructs_and_is_idempotent(text in abstract_strategy()) {
            if let Ok(sents) = split_sentences(&text) {
                prop_assert!(!sents.is_empty());
                let joined: String = sents.concat();
                prop_assert_eq!(strip_ws(&joined), strip_ws(&text));
                for s in &sents {
                    prop_assert!(!s.trim().is_empty());
                    let again = split_sentences(s).unwrap();
                    prop_assert_eq!(again, vec![s.clone()]);
                }
                prop_assert_eq!(split_sentences(&text).unwrap(), sents);
            }
        }
    }
}
