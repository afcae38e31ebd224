//! Cluster-purity evaluation of document representations against
//! keyword-defined sub-domains, with and without the keywords in the text.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{kmeans, purity, ClusterError, DenseRows, KMeansConfig, Purity, SparseRows};
use crate::corpus::Corpus;
use crate::embedding::tfidf::{TfidfError, TfidfModel};
use crate::embedding::{embed_batched, EmbedError, EmbeddingKind, EmbeddingProvider};

/// The 18 materials-science sub-domain keywords.
pub const BUILTIN_KEYWORDS: [&str; 18] = [
    "magnetic materials",
    "carbon materials",
    "ceramics",
    "optical properties",
    "electrochemistry",
    "nanomaterials",
    "alloys",
    "photocatalysis",
    "semiconductors",
    "solar cells",
    "fuel cells",
    "polymers",
    "composite materials",
    "biomaterials",
    "thermodynamics",
    "lithium-ion batteries",
    "thin films",
    "microstructure",
];

/// Stands in for a title or abstract that keyword removal emptied.
pub const EMPTY_PLACEHOLDER: &str = "[EMPTY]";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("keyword list: {0}")]
    Keywords(String),
    #[error("no documents for classes: {}", .0.join(", "))]
    EmptyClasses(Vec<String>),
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Tfidf(#[from] TfidfError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// `builtin18` or a file with one keyword per line (`#` starts a comment).
pub fn load_keywords(spec: &str) -> Result<Vec<String>, EvalError> {
    if spec == "builtin18" {
        return Ok(BUILTIN_KEYWORDS.iter().map(|s| s.to_string()).collect());
    }
    let text = std::fs::read_to_string(Path::new(spec)).map_err(|source| EvalError::Io {
        path: spec.to_string(),
        source,
    })?;
    let kws: Vec<String> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    check_keywords(&kws)?;
    Ok(kws)
}

fn check_keywords(keywords: &[String]) -> Result<(), EvalError> {
    if keywords.is_empty() {
        return Err(EvalError::Keywords("empty".into()));
    }
    let mut seen = HashSet::new();
    for k in keywords {
        let norm = k.trim().to_lowercase();
        if norm.is_empty() {
            return Err(EvalError::Keywords("blank keyword".into()));
        }
        if !seen.insert(norm) {
            return Err(EvalError::Keywords(format!("duplicate keyword {k:?}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDoc {
    pub paper_id: String,
    pub title: String,
    pub abstract_text: String,
    /// Index into [`LabeledCorpus::classes`].
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    pub classes: Vec<String>,
    pub docs: Vec<LabeledDoc>,
    /// Documents per class.
    pub counts: Vec<usize>,
    /// Documents matching no class or more than one.
    pub dropped: usize,
}

/// Keeps documents whose keywords match exactly one class
/// (case-insensitive); the match is the label.
pub fn build_eval_corpus(corpus: &Corpus, keywords: &[String]) -> Result<LabeledCorpus, EvalError> {
    check_keywords(keywords)?;
    let lookup: BTreeMap<String, usize> = keywords
        .iter()
        .enumerate()
        .map(|(i, k)| (k.trim().to_lowercase(), i))
        .collect();
    let mut docs = Vec::new();
    let mut counts = vec![0; keywords.len()];
    let mut dropped = 0;
    for d in corpus.documents() {
        let matched: HashSet<usize> = d
            .keywords
            .iter()
            .filter_map(|k| lookup.get(&k.trim().to_lowercase()).copied())
            .collect();
        if matched.len() != 1 {
            dropped += 1;
            continue;
        }
        let label = *matched.iter().next().expect("one match");
        counts[label] += 1;
        docs.push(LabeledDoc {
            paper_id: d.paper_id.clone(),
            title: d.title.clone(),
            abstract_text: d.abstract_text.clone(),
            label,
        });
    }
    let empty: Vec<String> = keywords
        .iter()
        .zip(&counts)
        .filter(|(_, &n)| n == 0)
        .map(|(k, _)| k.clone())
        .collect();
    if !empty.is_empty() {
        return Err(EvalError::EmptyClasses(empty));
    }
    Ok(LabeledCorpus {
        classes: keywords.to_vec(),
        docs,
        counts,
        dropped,
    })
}

/// Removes keywords as whole-token phrases, case-insensitively. Whitespace
/// inside a keyword matches any whitespace run.
#[derive(Debug, Clone)]
pub struct KeywordStripper {
    pattern: Regex,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripped {
    pub text: String,
    /// Removal left nothing; `text` is [`EMPTY_PLACEHOLDER`].
    pub emptied: bool,
}

impl KeywordStripper {
    pub fn new<S: AsRef<str>>(keywords: &[S]) -> Result<Self, EvalError> {
        let mut kws: Vec<&str> = keywords.iter().map(|k| k.as_ref().trim()).filter(|k| !k.is_empty()).collect();
        if kws.is_empty() {
            return Err(EvalError::Keywords("empty".into()));
        }
        // longest first so a phrase wins over a keyword it contains
        kws.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        let word = |c: char| c.is_alphanumeric() || c == '_';
        let alternatives: Vec<String> = kws
            .iter()
            .map(|k| {
                let body = k.split_whitespace().map(regex::escape).collect::<Vec<_>>().join(r"\s+");
                let lead = if k.starts_with(word) { r"\b" } else { "" };
                let trail = if k.ends_with(word) { r"\b" } else { "" };
                format!("{lead}{body}{trail}")
            })
            .collect();
        let pattern = Regex::new(&format!("(?i)(?:{})", alternatives.join("|")))
            .map_err(|e| EvalError::Keywords(e.to_string()))?;
        Ok(Self { pattern })
    }

    pub fn strip(&self, text: &str) -> Stripped {
        let mut cur = text.to_string();
        loop {
            let next = self.pattern.replace_all(&cur, " ").into_owned();
            if next == cur {
                break;
            }
            cur = next;
        }
        let collapsed = cur.split_whitespace().collect::<Vec<_>>().join(" ");
        if collapsed.is_empty() {
            Stripped {
                text: EMPTY_PLACEHOLDER.to_string(),
                emptied: true,
            }
        } else {
            Stripped {
                text: collapsed,
                emptied: false,
            }
        }
    }
}

pub fn strip_keywords<S: AsRef<str>>(text: &str, keywords: &[S]) -> String {
    match KeywordStripper::new(keywords) {
        Ok(s) => s.strip(text).text,
        Err(_) => text.split_whitespace().collect::<Vec<_>>().join(" "),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Random,
    Tfidf,
    Doc,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Random => "random",
            Representation::Tfidf => "tfidf",
            Representation::Doc => "doc",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Representation {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "random" => Ok(Self::Random),
            "tfidf" => Ok(Self::Tfidf),
            "doc" | "embedding-doc" => Ok(Self::Doc),
            other => Err(EvalError::Config(format!("unknown representation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Present,
    Removed,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Present => "present",
            Condition::Removed => "removed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub keywords: Vec<String>,
    pub k: usize,
    pub runs: usize,
    pub representations: Vec<Representation>,
    /// Also evaluate with keywords stripped from titles and abstracts.
    pub remove_keywords: bool,
    /// Run `i` uses seed `base_seed + i`.
    pub base_seed: u64,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            keywords: BUILTIN_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            k: 18,
            runs: 3,
            representations: vec![Representation::Random, Representation::Tfidf, Representation::Doc],
            remove_keywords: true,
            base_seed: 0,
            batch_size: 64,
        }
    }
}

impl EvalConfig {
    pub fn conditions(&self) -> Vec<Condition> {
        if self.remove_keywords {
            vec![Condition::Present, Condition::Removed]
        } else {
            vec![Condition::Present]
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|i| self.base_seed.wrapping_add(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub purity: Purity,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub representation: Representation,
    pub condition: Condition,
    pub runs: Vec<RunResult>,
    /// Mean of the per-run percentages; absent if the row failed.
    pub mean_percent: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub class_counts: Vec<usize>,
    pub retained: usize,
    pub dropped: usize,
    /// Titles or abstracts that keyword removal emptied.
    pub emptied_fields: usize,
    pub k: usize,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn row(&self, r: Representation, c: Condition) -> Option<&ReportRow> {
        self.rows.iter().find(|x| x.representation == r && x.condition == c)
    }

    pub fn mean(&self, r: Representation, c: Condition) -> Option<f64> {
        self.row(r, c).and_then(|x| x.mean_percent)
    }

    /// Representations down, keyword conditions across.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} documents, {} classes, K = {}",
            self.retained,
            self.classes.len(),
            self.k
        );
        let _ = writeln!(out, "{:<14}{:>18}{:>18}", "Representation", "Keywords Present", "Keywords Removed");
        let mut reps: Vec<Representation> = self.rows.iter().map(|r| r.representation).collect();
        reps.dedup();
        for rep in reps {
            let cell = |c| match self.row(rep, c) {
                None => "-".to_string(),
                Some(ReportRow { mean_percent: Some(m), .. }) => format!("{m:.2}"),
                Some(_) => "failed".to_string(),
            };
            let _ = writeln!(
                out,
                "{:<14}{:>18}{:>18}",
                rep.as_str(),
                cell(Condition::Present),
                cell(Condition::Removed)
            );
        }
        for row in self.rows.iter().filter(|r| r.error.is_some()) {
            let _ = writeln!(
                out,
                "{} ({}): {}",
                row.representation,
                row.condition.as_str(),
                row.error.as_deref().unwrap_or("")
            );
        }
        out
    }

    /// One line per run plus a `mean` line per row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = ["representation", "condition", "run", "seed", "purity_percent", "matched", "total", "error"];
        w.write_record(header).expect("in-memory write");
        for row in &self.rows {
            let rep = row.representation.as_str();
            let cond = row.condition.as_str();
            for (i, r) in row.runs.iter().enumerate() {
                w.write_record([
                    rep,
                    cond,
                    &i.to_string(),
                    &r.seed.to_string(),
                    &format!("{:.4}", r.percent),
                    &r.purity.matched.to_string(),
                    &r.purity.total.to_string(),
                    "",
                ])
                .expect("in-memory write");
            }
            let mean = row.mean_percent.map(|m| format!("{m:.4}")).unwrap_or_default();
            w.write_record([rep, cond, "mean", "", &mean, "", "", row.error.as_deref().unwrap_or("")])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Uniform random assignment of `n` points to `k` clusters.
pub fn random_assignment(n: usize, k: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..k as u32)).collect()
}

struct ConditionTexts {
    /// `title abstract`, for term-based representations.
    plain: Vec<String>,
    /// `title [SEP] abstract`, for document encoders.
    encoder: Vec<String>,
}

fn condition_texts(labeled: &LabeledCorpus, stripper: Option<&KeywordStripper>, emptied: &mut usize) -> ConditionTexts {
    let mut plain = Vec::with_capacity(labeled.docs.len());
    let mut encoder = Vec::with_capacity(labeled.docs.len());
    for d in &labeled.docs {
        let (title, abs) = match stripper {
            None => (d.title.clone(), d.abstract_text.clone()),
            Some(s) => {
                let t = s.strip(&d.title);
                let a = s.strip(&d.abstract_text);
                *emptied += t.emptied as usize + a.emptied as usize;
                (t.text, a.text)
            }
        };
        plain.push(format!("{title} {abs}"));
        encoder.push(format!("{title} [SEP] {abs}"));
    }
    ConditionTexts { plain, encoder }
}

fn run_rows(
    rep: Representation,
    texts: &ConditionTexts,
    labels: &[usize],
    cfg: &EvalConfig,
    doc_provider: Option<&dyn EmbeddingProvider>,
) -> Result<Vec<RunResult>, EvalError> {
    let seeds = cfg.seeds();
    let n = labels.len();
    let score = |assignments: &[u32], seed: u64| -> Result<RunResult, EvalError> {
        let p = purity(assignments, labels)?;
        Ok(RunResult {
            seed,
            purity: p,
            percent: p.percent(),
        })
    };
    match rep {
        Representation::Random => seeds
            .iter()
            .map(|&s| score(&random_assignment(n, cfg.k, s), s))
            .collect(),
        Representation::Tfidf => {
            let model = TfidfModel::fit(&texts.plain)?;
            let rows = model.transform_all(&texts.plain);
            let points = SparseRows::new(&rows, model.vocab_len())?;
            seeds
                .par_iter()
                .map(|&s| score(&kmeans(&points, &KMeansConfig::new(cfg.k, s))?.assignments, s))
                .collect()
        }
        Representation::Doc => {
            let provider =
                doc_provider.ok_or_else(|| EvalError::Config("no document provider configured".into()))?;
            if provider.kind() != EmbeddingKind::Document {
                return Err(EvalError::Config(format!("{} is not a document provider", provider.name())));
            }
            let refs: Vec<&str> = texts.encoder.iter().map(String::as_str).collect();
            let vectors = embed_batched(provider, &refs, cfg.batch_size)?;
            let dim = provider.dimension();
            let data: Vec<f32> = vectors.iter().flat_map(|v| v.as_slice().iter().copied()).collect();
            let points = DenseRows::new(&data, dim)?;
            seeds
                .par_iter()
                .map(|&s| score(&kmeans(&points, &KMeansConfig::new(cfg.k, s))?.assignments, s))
                .collect()
        }
    }
}

/// Purity of every requested representation under each keyword condition.
/// A failing representation is reported with its error; the others still
/// run.
pub fn run_eval(
    cfg: &EvalConfig,
    labeled: &LabeledCorpus,
    doc_provider: Option<&dyn EmbeddingProvider>,
) -> Result<EvalReport, EvalError> {
    if cfg.runs < 1 {
        return Err(EvalError::Config("runs must be at least 1".into()));
    }
    if cfg.k != labeled.classes.len() {
        return Err(EvalError::Config(format!(
            "k = {} but the corpus has {} classes",
            cfg.k,
            labeled.classes.len()
        )));
    }
    if cfg.representations.is_empty() {
        return Err(EvalError::Config("no representations requested".into()));
    }
    let labels: Vec<usize> = labeled.docs.iter().map(|d| d.label).collect();
    let stripper = KeywordStripper::new(&cfg.keywords)?;
    let mut emptied = 0;
    let mut rows = Vec::new();
    for cond in cfg.conditions() {
        let texts = match cond {
            Condition::Present => condition_texts(labeled, None, &mut emptied),
            Condition::Removed => condition_texts(labeled, Some(&stripper), &mut emptied),
        };
        for &rep in &cfg.representations {
            let row = match run_rows(rep, &texts, &labels, cfg, doc_provider) {
                Ok(runs) => {
                    let mean = runs.iter().map(|r| r.percent).sum::<f64>() / runs.len() as f64;
                    ReportRow {
                        representation: rep,
                        condition: cond,
                        runs,
                        mean_percent: Some(mean),
                        error: None,
                    }
                }
                Err(e) => {
                    tracing::warn!(representation = %rep, condition = cond.as_str(), error = %e, "representation failed");
                    ReportRow {
                        representation: rep,
                        condition: cond,
                        runs: Vec::new(),
                        mean_percent: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            rows.push(row);
        }
    }
    rows.sort_by_key(|r| (r.representation, r.condition));
    Ok(EvalReport {
        classes: labeled.classes.clone(),
        class_counts: labeled.counts.clone(),
        retained: labeled.docs.len(),
        dropped: labeled.dropped,
        emptied_fields: emptied,
        k: cfg.k,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn doc(id: &str, kws: &[&str]) -> Document {
        Document::new(id, "A title", "Some abstract text here.", kws.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn builtin_keywords_are_distinct() {
        let kws = load_keywords("builtin18").unwrap();
        assert_eq!(kws.len(), 18);
        check_keywords(&kws).unwrap();
    }

    #[test]
    fn single_class_rule() {
        let corpus = Corpus::from_documents(
            vec![
                doc("a", &["Alloys"]),
                doc("b", &["alloys", "ceramics"]),
                doc("c", &["ceramics", "sintering"]),
                doc("d", &["sintering"]),
            ],
            "t",
        )
        .0;
        let kws = vec!["alloys".to_string(), "ceramics".to_string()];
        let lc = build_eval_corpus(&corpus, &kws).unwrap();
        let kept: Vec<(&str, usize)> = lc.docs.iter().map(|d| (d.paper_id.as_str(), d.label)).collect();
        assert_eq!(kept, vec![("a", 0), ("c", 1)]);
        assert_eq!(lc.counts, vec![1, 1]);
        assert_eq!(lc.dropped, 2);

        let kws = vec!["alloys".to_string(), "polymers".to_string(), "solar cells".to_string()];
        match build_eval_corpus(&corpus, &kws) {
            Err(EvalError::EmptyClasses(c)) => assert_eq!(c, vec!["polymers", "solar cells"]),
            other => panic!("{other:?}"),
        }
        let dup = vec!["Alloys".to_string(), "alloys ".to_string()];
        assert!(matches!(build_eval_corpus(&corpus, &dup), Err(EvalError::Keywords(_))));
    }

    #[test]
    fn strip_examples() {
        let kws = BUILTIN_KEYWORDS;
        assert_eq!(strip_keywords("Lithium-ion batteries degrade fast.", &kws), "degrade fast.");
        assert_eq!(strip_keywords("Nothing to see here.", &kws), "Nothing to see here.");
        assert_eq!(strip_keywords("Thin films of thin material", &kws), "of thin material");
        assert_eq!(strip_keywords("Metalloys resist; alloys do not.", &kws), "Metalloys resist; do not.");
        assert_eq!(strip_keywords("THIN\n  FILMS grown", &kws), "grown");
        let s = KeywordStripper::new(&kws).unwrap().strip("Alloys  ceramics");
        assert_eq!(s, Stripped { text: EMPTY_PLACEHOLDER.into(), emptied: true });
    }

    #[test]
    fn strip_reaches_fixed_point() {
        // removing the inner phrase exposes the outer one
        let s = KeywordStripper::new(&["ab cd", "x"]).unwrap();
        assert_eq!(s.strip("ab x cd y").text, "y");
    }

    #[test]
    fn csv_and_table_render() {
        let report = EvalReport {
            classes: vec!["a".into(), "b".into()],
            class_counts: vec![2, 2],
            retained: 4,
            dropped: 0,
            emptied_fields: 0,
            k: 2,
            rows: vec![ReportRow {
                representation: Representation::Random,
                condition: Condition::Present,
                runs: vec![RunResult {
                    seed: 3,
                    purity: Purity { matched: 3, total: 4 },
                    percent: 75.0,
                }],
                mean_percent: Some(75.0),
                error: None,
            }],
        };
        let csv = report.to_csv();
        assert_eq!(
            csv,
            "representation,condition,run,seed,purity_percent,matched,total,error\n\
             random,present,0,3,75.0000,3,4,\n\
             random,present,mean,,75.0000,,,\n"
        );
        let table = report.to_table();
        assert!(table.contains("Keywords Present"));
        assert!(table.contains("75.00"));
    }
}
