//! Faceted query-by-example: per-cluster sentence retrieval, zoom-in with
//! local re-clustering, and keyword filtering of result groups.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ann::{hit_order, ClusterIndex, Hit, IndexError};
use crate::clustering::descriptors::frequent_terms;
use crate::clustering::{descriptors, kmeans, ClusterError, DescriptorConfig, KMeansConfig, VectorRows};
use crate::corpus::{split_sentences, SplitError};
use crate::embedding::{EmbedError, EmbeddingKind, EmbeddingProvider, Vector};
use crate::snapshot::Snapshot;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("sentence_index {index} out of range: the abstract has {count} sentences")]
    SentenceIndex { index: usize, count: usize },
    #[error("cannot split abstract: {0}")]
    Split(#[from] SplitError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("no clusters selected")]
    EmptySelection,
    #[error("unknown cluster id {0}")]
    UnknownCluster(u32),
    #[error("keyword is empty")]
    EmptyKeyword,
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

impl SearchError {
    /// True for errors caused by the request rather than the system.
    pub fn is_client_error(&self) -> bool {
        matches!(
            self,
            SearchError::SentenceIndex { .. }
                | SearchError::Split(_)
                | SearchError::Config(_)
                | SearchError::EmptySelection
                | SearchError::UnknownCluster(_)
                | SearchError::EmptyKeyword
                | SearchError::Embed(EmbedError::EmptyText)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Hits per global cluster.
    pub t: usize,
    /// Zoom-in retrieval budget over the selected clusters.
    pub l: usize,
    /// Local clusters in the zoom view.
    pub m: usize,
    /// Keep only the best sentence of each paper.
    pub dedup: bool,
    /// Seed of the local k-means.
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            t: 10,
            l: 100,
            m: 5,
            dedup: true,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.t < 1 {
            return Err(SearchError::Config("t must be at least 1".into()));
        }
        if self.l <= self.t {
            return Err(SearchError::Config(format!("l ({}) must exceed t ({})", self.l, self.t)));
        }
        if self.m < 2 {
            return Err(SearchError::Config("m must be at least 2".into()));
        }
        Ok(())
    }
}

/// An abstract, the selected sentence and its vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub abstract_text: String,
    pub sentences: Vec<String>,
    pub sentence_index: usize,
    /// Corpus id of the query paper, excluded from results.
    pub paper_id: Option<String>,
    pub vector: Vector,
}

impl Query {
    pub fn new(
        abstract_text: &str,
        sentence_index: usize,
        paper_id: Option<String>,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self, SearchError> {
        if provider.kind() != EmbeddingKind::Sentence {
            return Err(EmbedError::WrongKind {
                provider: provider.name().to_string(),
                expected: EmbeddingKind::Sentence,
                actual: provider.kind(),
            }
            .into());
        }
        let sentences = split_sentences(abstract_text)?;
        let text = sentences.get(sentence_index).ok_or(SearchError::SentenceIndex {
            index: sentence_index,
            count: sentences.len(),
        })?;
        let vector = provider
            .embed_texts(&[text])?
            .pop()
            .ok_or_else(|| EmbedError::Contract("empty response".into()))?;
        Self::with_vector(abstract_text, sentences, sentence_index, paper_id, vector)
    }

    /// Query with a precomputed vector.
    pub fn with_vector(
        abstract_text: &str,
        sentences: Vec<String>,
        sentence_index: usize,
        paper_id: Option<String>,
        vector: Vector,
    ) -> Result<Self, SearchError> {
        if sentence_index >= sentences.len() {
            return Err(SearchError::SentenceIndex {
                index: sentence_index,
                count: sentences.len(),
            });
        }
        if !vector.is_unit() {
            return Err(EmbedError::Contract("query vector is not unit-normalized".into()).into());
        }
        Ok(Self {
            abstract_text: abstract_text.trim().to_string(),
            sentences,
            sentence_index,
            paper_id,
            vector,
        })
    }

    pub fn text(&self) -> &str {
        &self.sentences[self.sentence_index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Title,
    Abstract,
}

/// Keyword match, in character (Unicode scalar) offsets into the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub field: Field,
    pub start: usize,
    pub end: usize,
}

/// A paper surfaced by its best-matching sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultHit {
    pub paper_id: String,
    /// Position of the matched sentence in `sentences`.
    pub position: u32,
    pub score: f32,
    /// Global cluster the hit came from.
    pub cluster_id: u32,
    pub sentence: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub sentences: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spans: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultGroup {
    pub cluster_id: u32,
    /// Papers in the cluster.
    pub size: usize,
    pub descriptors: Vec<String>,
    pub hits: Vec<ResultHit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalGroup {
    pub local_id: u32,
    pub descriptors: Vec<String>,
    pub hits: Vec<ResultHit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub cluster_id: u32,
    pub hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoomResult {
    /// Selected global clusters, ascending.
    pub selected: Vec<u32>,
    pub l: usize,
    pub m: usize,
    /// Hits retrieved before local clustering.
    pub total_hits: usize,
    /// Hits contributed by each selected cluster.
    pub provenance: Vec<Provenance>,
    pub groups: Vec<LocalGroup>,
}

impl ZoomResult {
    pub fn hits(&self) -> impl Iterator<Item = &ResultHit> {
        self.groups.iter().flat_map(|g| &g.hits)
    }

    /// Keyword filter over the local groups; see [`keyword_filter`].
    pub fn filtered(&self, keyword: &str) -> Result<ZoomResult, SearchError> {
        let kw = check_keyword(keyword)?;
        let mut out = self.clone();
        for g in &mut out.groups {
            g.hits = filter_hits(std::mem::take(&mut g.hits), kw);
        }
        Ok(out)
    }
}

/// Top hits of one cluster after excluding papers and keeping one sentence
/// per paper. Widens the underlying query until `want` hits survive or the
/// index is exhausted.
fn retrieve(
    index: &ClusterIndex,
    v: &[f32],
    want: usize,
    dedup: bool,
    excluded: &HashSet<&str>,
) -> Result<Vec<Hit>, IndexError> {
    let mut t = want.min(index.len()).max(1);
    loop {
        let raw = index.query(v, t)?;
        let exhausted = t >= index.len();
        let mut seen: HashSet<&str> = HashSet::new();
        let hits: Vec<Hit> = raw
            .iter()
            .filter(|h| !excluded.contains(h.sentence.doc_id.as_str()))
            .filter(|h| !dedup || seen.insert(h.sentence.doc_id.as_str()))
            .take(want)
            .cloned()
            .collect();
        if hits.len() >= want || exhausted {
            return Ok(hits);
        }
        t = (t * 2).min(index.len());
    }
}

fn excluded_papers<'a>(snapshot: &'a Snapshot, query: &'a Query) -> HashSet<&'a str> {
    let mut out: HashSet<&str> = snapshot
        .papers_with_abstract(&query.abstract_text)
        .iter()
        .map(String::as_str)
        .collect();
    if let Some(id) = &query.paper_id {
        out.insert(id);
    }
    out
}

fn resolve(snapshot: &Snapshot, hit: &Hit) -> ResultHit {
    let doc = snapshot
        .corpus
        .get(&hit.sentence.doc_id)
        .expect("snapshot references resolve");
    ResultHit {
        paper_id: doc.paper_id.clone(),
        position: hit.sentence.position,
        score: hit.score,
        cluster_id: hit.cluster_id,
        sentence: doc.sentences[hit.sentence.position as usize].text.clone(),
        title: doc.title.clone(),
        abstract_text: doc.abstract_text.clone(),
        sentences: doc.sentences.iter().map(|s| s.text.clone()).collect(),
        spans: Vec::new(),
    }
}

/// One group per global cluster, each with at most `cfg.t` hits sorted by
/// score. Clusters are queried in parallel; the output does not depend on
/// scheduling.
pub fn faceted_search(snapshot: &Snapshot, query: &Query, cfg: &SearchConfig) -> Result<Vec<ResultGroup>, SearchError> {
    if cfg.t < 1 {
        return Err(SearchError::Config("t must be at least 1".into()));
    }
    let excluded = excluded_papers(snapshot, query);
    let v = query.vector.as_slice();
    snapshot
        .indices
        .par_iter()
        .map(|index| {
            let hits = retrieve(index, v, cfg.t, cfg.dedup, &excluded)?;
            let c = index.cluster_id();
            Ok(ResultGroup {
                cluster_id: c,
                size: snapshot.cluster_size(c),
                descriptors: snapshot.clusters.descriptors[c as usize].clone(),
                hits: hits.iter().map(|h| resolve(snapshot, h)).collect(),
            })
        })
        .collect()
}

/// Retrieves `cfg.l` more hits from the selected clusters (an even share
/// per cluster, then the global top `l`) and re-clusters their sentence
/// vectors into at most `cfg.m` local groups.
pub fn zoom_in(
    snapshot: &Snapshot,
    query: &Query,
    selected: &[u32],
    cfg: &SearchConfig,
) -> Result<ZoomResult, SearchError> {
    cfg.validate()?;
    let selected: Vec<u32> = selected.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if selected.is_empty() {
        return Err(SearchError::EmptySelection);
    }
    if let Some(&bad) = selected.iter().find(|&&c| c as usize >= snapshot.indices.len()) {
        return Err(SearchError::UnknownCluster(bad));
    }
    let share = cfg.l.div_ceil(selected.len());
    let excluded = excluded_papers(snapshot, query);
    let v = query.vector.as_slice();
    let per_cluster = selected
        .par_iter()
        .map(|&c| retrieve(&snapshot.indices[c as usize], v, share, cfg.dedup, &excluded))
        .collect::<Result<Vec<_>, _>>()?;
    let mut hits: Vec<Hit> = per_cluster.into_iter().flatten().collect();
    hits.sort_by(hit_order);
    hits.truncate(cfg.l);

    let mut provenance: BTreeMap<u32, usize> = selected.iter().map(|&c| (c, 0)).collect();
    for h in &hits {
        *provenance.get_mut(&h.cluster_id).expect("hit from a selected cluster") += 1;
    }
    let groups = local_groups(snapshot, &hits, cfg)?;
    Ok(ZoomResult {
        selected,
        l: cfg.l,
        m: cfg.m,
        total_hits: hits.len(),
        provenance: provenance
            .into_iter()
            .map(|(cluster_id, hits)| Provenance { cluster_id, hits })
            .collect(),
        groups,
    })
}

fn local_groups(snapshot: &Snapshot, hits: &[Hit], cfg: &SearchConfig) -> Result<Vec<LocalGroup>, SearchError> {
    if hits.is_empty() {
        return Ok(Vec::new());
    }
    let vectors: Vec<Vector> = hits
        .iter()
        .map(|h| {
            let index = &snapshot.indices[h.cluster_id as usize];
            let x = index.vector_of(&h.sentence).expect("hit is indexed");
            Vector::from_unit(x.to_vec())
        })
        .collect();
    let rows = VectorRows::new(&vectors)?;
    let k = cfg.m.min(crate::clustering::kmeans::count_distinct(&rows));
    let model = kmeans(&rows, &KMeansConfig::new(k, cfg.seed))?;

    let mut members = model.members();
    for m in &mut members {
        m.sort_by(|&a, &b| hit_order(&hits[a], &hits[b]));
    }
    // strongest group first
    members.sort_by(|a, b| hit_order(&hits[a[0]], &hits[b[0]]));

    let texts: Vec<Vec<String>> = members
        .iter()
        .map(|m| {
            m.iter()
                .map(|&i| {
                    let d = snapshot.corpus.get(&hits[i].sentence.doc_id).expect("resolves");
                    format!("{} {}", d.title, d.abstract_text)
                })
                .collect()
        })
        .collect();
    let dcfg = DescriptorConfig::default();
    let labels = if texts.len() >= 2 {
        descriptors(&texts, &dcfg)?
    } else {
        texts.iter().map(|t| frequent_terms(t, dcfg.top_n)).collect()
    };
    Ok(members
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (m, descriptors))| LocalGroup {
            local_id: i as u32,
            descriptors,
            hits: m.iter().map(|&j| resolve(snapshot, &hits[j])).collect(),
        })
        .collect())
}

fn check_keyword(keyword: &str) -> Result<&str, SearchError> {
    let kw = keyword.trim();
    if kw.is_empty() {
        return Err(SearchError::EmptyKeyword);
    }
    Ok(kw)
}

/// Case-insensitive, non-overlapping occurrences of `needle` in `haystack`,
/// in character offsets.
pub fn find_spans(haystack: &str, needle: &str) -> Vec<(usize, usize)> {
    let fold = |c: char| c.to_lowercase().collect::<String>();
    let hay: Vec<String> = haystack.chars().map(fold).collect();
    let pat: Vec<String> = needle.chars().map(fold).collect();
    let mut out = Vec::new();
    if pat.is_empty() {
        return out;
    }
    let mut i = 0;
    while i + pat.len() <= hay.len() {
        if hay[i..i + pat.len()] == pat[..] {
            out.push((i, i + pat.len()));
            i += pat.len();
        } else {
            i += 1;
        }
    }
    out
}

fn filter_hits(hits: Vec<ResultHit>, kw: &str) -> Vec<ResultHit> {
    hits.into_iter()
        .filter_map(|mut h| {
            let title = find_spans(&h.title, kw).into_iter().map(|(start, end)| Span {
                field: Field::Title,
                start,
                end,
            });
            let abs = find_spans(&h.abstract_text, kw).into_iter().map(|(start, end)| Span {
                field: Field::Abstract,
                start,
                end,
            });
            h.spans = title.chain(abs).collect();
            (!h.spans.is_empty()).then_some(h)
        })
        .collect()
}

/// Keeps hits whose title or abstract contains `keyword` (case-insensitive)
/// and attaches the match spans. Every group is kept, possibly empty.
pub fn keyword_filter(groups: &[ResultGroup], keyword: &str) -> Result<Vec<ResultGroup>, SearchError> {
    let kw = check_keyword(keyword)?;
    Ok(groups
        .iter()
        .map(|g| ResultGroup {
            hits: filter_hits(g.hits.clone(), kw),
            ..g.clone()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SearchConfig::default().validate().is_ok());
        for cfg in [
            SearchConfig { t: 0, ..Default::default() },
            SearchConfig { l: 10, ..Default::default() },
            SearchConfig { l: 5, ..Default::default() },
            SearchConfig { m: 1, ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(SearchError::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn spans_are_case_insensitive_character_offsets() {
        assert_eq!(find_spans("Cement and CEMENT", "cement"), vec![(0, 6), (11, 17)]);
        assert_eq!(find_spans("Über cement", "CEMENT"), vec![(5, 11)]);
        assert_eq!(find_spans("aaaa", "aa"), vec![(0, 2), (2, 4)]);
        assert!(find_spans("concrete", "cement").is_empty());
    }

    fn hit(id: &str, title: &str, abs: &str) -> ResultHit {
        ResultHit {
            paper_id: id.into(),
            position: 0,
            score: 0.5,
            cluster_id: 0,
            sentence: abs.into(),
            title: title.into(),
            abstract_text: abs.into(),
            sentences: vec![abs.into()],
            spans: Vec::new(),
        }
    }

    #[test]
    fn keyword_filter_keeps_structure() {
        let groups: Vec<ResultGroup> = (0..3)
            .map(|c| ResultGroup {
                cluster_id: c,
                size: 10,
                descriptors: vec![],
                hits: (0..10)
                    .map(|i| {
                        let n = c * 10 + i;
                        let abs = if n == 4 || n == 27 {
                            format!("We study Portland cement paste {n}.")
                        } else {
                            format!("We study polymer blends {n}.")
                        };
                        hit(&format!("p{n}"), "A title", &abs)
                    })
                    .collect(),
            })
            .collect();
        let out = keyword_filter(&groups, "  CEMENT ").unwrap();
        assert_eq!(out.len(), 3);
        let survivors: Vec<&ResultHit> = out.iter().flat_map(|g| &g.hits).collect();
        assert_eq!(survivors.len(), 2);
        assert!(survivors.iter().all(|h| !h.spans.is_empty()));
        assert!(out[1].hits.is_empty());
        assert!(matches!(keyword_filter(&groups, " \t"), Err(SearchError::EmptyKeyword)));
    }

    #[test]
    fn title_only_match_survives_with_title_span() {
        let g = ResultGroup {
            cluster_id: 0,
            size: 1,
            descriptors: vec![],
            hits: vec![hit("p1", "Graphene membranes", "We filter water.")],
        };
        let out = keyword_filter(&[g], "graphene").unwrap();
        assert_eq!(
            out[0].hits[0].spans,
            vec![Span {
                field: Field::Title,
                start: 0,
                end: 8
            }]
        );
    }
}
