//! The immutable bundle a server answers from: corpus, global clusters and
//! per-cluster sentence indices, plus the metadata needed to check that a
//! query-time provider matches the one used at build time.
//!
//! Directory layout:
//!
//! ```text
//! manifest.json         build metadata (no timestamps)
//! corpus.jsonl          persisted corpus
//! doc_vectors.cache     document vector cache
//! sent_vectors.cache    sentence vector cache
//! clusters.json         global cluster model and descriptors
//! index/cluster_NNN.idx one index per global cluster
//! ```

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ann::{ClusterIndex, IndexError, IndexParams};
use crate::clustering::{build_global_clusters, ClusterError, DescriptorConfig, GlobalClusterSet, KMeansConfig};
use crate::corpus::{Corpus, CorpusError, CorpusStats, SentenceRef};
use crate::embedding::{
    content_hash, ContentHash, EmbedError, EmbeddingKind, EmbeddingProvider, Vector, VectorCache, VectorCacheError,
};

pub const SNAPSHOT_FORMAT: &str = "xdomain-snapshot";
pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const CORPUS: &str = "corpus.jsonl";
const DOC_CACHE: &str = "doc_vectors.cache";
const SENT_CACHE: &str = "sent_vectors.cache";
const CLUSTERS: &str = "clusters.json";
const INDEX_DIR: &str = "index";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Cache(#[from] VectorCacheError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("inconsistent snapshot: {0}")]
    Inconsistent(String),
    #[error("provider mismatch: {0}")]
    Provider(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    pub n_init: usize,
    pub descriptors: DescriptorConfig,
    pub index: IndexParams,
    pub batch_size: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        let km = KMeansConfig::new(20, 42);
        Self {
            k: km.k,
            seed: km.seed,
            max_iters: km.max_iters,
            tol: km.tol,
            n_init: km.n_init,
            descriptors: DescriptorConfig::default(),
            index: IndexParams::default(),
            batch_size: 64,
        }
    }
}

impl BuildConfig {
    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            k: self.k,
            max_iters: self.max_iters,
            tol: self.tol,
            seed: self.seed,
            n_init: self.n_init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderInfo {
    pub name: String,
    pub kind: EmbeddingKind,
    pub dimension: usize,
}

impl ProviderInfo {
    fn of(p: &dyn EmbeddingProvider) -> Self {
        Self {
            name: p.name().to_string(),
            kind: p.kind(),
            dimension: p.dimension(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub builder: String,
    pub corpus: CorpusStats,
    pub document_provider: ProviderInfo,
    pub sentence_provider: ProviderInfo,
    pub config: BuildConfig,
    pub cluster_sizes: Vec<usize>,
    pub index_sizes: Vec<usize>,
    pub inertia: f64,
}

/// Everything needed to serve queries. Immutable once built or loaded.
#[derive(Debug)]
pub struct Snapshot {
    pub manifest: Manifest,
    pub corpus: Corpus,
    pub clusters: GlobalClusterSet,
    pub indices: Vec<ClusterIndex>,
    by_abstract: HashMap<ContentHash, Vec<String>>,
}

/// A fresh build together with the vector caches it was built from.
#[derive(Debug)]
pub struct Built {
    pub snapshot: Snapshot,
    pub doc_vectors: VectorCache,
    pub sent_vectors: VectorCache,
}

/// Hash of an abstract with whitespace runs collapsed, used to recognize a
/// query abstract that is already in the corpus.
pub fn abstract_hash(text: &str) -> ContentHash {
    content_hash(&text.split_whitespace().collect::<Vec<_>>().join(" "))
}

fn sentence_items(corpus: &Corpus) -> Vec<(String, String)> {
    corpus
        .sentences()
        .map(|s| (s.reference().key(), s.text.clone()))
        .collect()
}

impl Snapshot {
    /// embed documents → cluster → embed sentences → index. `previous`
    /// caches let unchanged texts skip the providers.
    pub fn build(
        corpus: Corpus,
        doc_provider: &dyn EmbeddingProvider,
        sent_provider: &dyn EmbeddingProvider,
        cfg: &BuildConfig,
        previous: Option<(&VectorCache, &VectorCache)>,
    ) -> Result<Built, SnapshotError> {
        check_kind(doc_provider, EmbeddingKind::Document)?;
        check_kind(sent_provider, EmbeddingKind::Sentence)?;
        let doc_items: Vec<(String, String)> = corpus
            .documents()
            .iter()
            .map(|d| (d.paper_id.clone(), d.encoder_text()))
            .collect();
        let doc_vectors = VectorCache::build(&doc_items, doc_provider, previous.map(|p| p.0), cfg.batch_size)?;
        let clusters = build_global_clusters(&corpus, &doc_vectors, &cfg.kmeans(), &cfg.descriptors)?;

        let sent_items = sentence_items(&corpus);
        let sent_vectors = VectorCache::build(&sent_items, sent_provider, previous.map(|p| p.1), cfg.batch_size)?;
        let indices = build_indices(&corpus, &clusters, &sent_vectors, cfg.index)?;

        let manifest = Manifest {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_FORMAT_VERSION,
            builder: format!("xdomain {}", env!("CARGO_PKG_VERSION")),
            corpus: corpus.stats(),
            document_provider: ProviderInfo::of(doc_provider),
            sentence_provider: ProviderInfo::of(sent_provider),
            config: cfg.clone(),
            cluster_sizes: clusters.doc_ids.iter().map(Vec::len).collect(),
            index_sizes: indices.iter().map(ClusterIndex::len).collect(),
            inertia: clusters.model.inertia,
        };
        let snapshot = Snapshot::assemble(manifest, corpus, clusters, indices)?;
        Ok(Built {
            snapshot,
            doc_vectors,
            sent_vectors,
        })
    }

    /// Cross-checks the parts and indexes abstracts for self-exclusion.
    pub fn assemble(
        manifest: Manifest,
        corpus: Corpus,
        clusters: GlobalClusterSet,
        indices: Vec<ClusterIndex>,
    ) -> Result<Self, SnapshotError> {
        let bad = |m: String| Err(SnapshotError::Inconsistent(m));
        if indices.len() != clusters.k() {
            return bad(format!("{} indices for {} clusters", indices.len(), clusters.k()));
        }
        if clusters.point_ids().len() != corpus.len() {
            return bad("cluster model does not cover the corpus".into());
        }
        for (c, index) in indices.iter().enumerate() {
            if index.cluster_id() as usize != c {
                return bad(format!("index {c} carries cluster id {}", index.cluster_id()));
            }
            if index.dimension() != manifest.sentence_provider.dimension {
                return bad(format!("index {c} has dimension {}", index.dimension()));
            }
            for r in index.refs() {
                if clusters.cluster_of(&r.doc_id) != Some(c as u32) || corpus.sentence(r).is_none() {
                    return bad(format!("index {c} entry {} does not resolve", r.key()));
                }
            }
        }
        let indexed: usize = indices.iter().map(ClusterIndex::len).sum();
        if indexed != corpus.stats().sentences {
            return bad(format!("{indexed} indexed sentences, corpus has {}", corpus.stats().sentences));
        }
        let mut by_abstract: HashMap<ContentHash, Vec<String>> = HashMap::new();
        for d in corpus.documents() {
            by_abstract
                .entry(abstract_hash(&d.abstract_text))
                .or_default()
                .push(d.paper_id.clone());
        }
        Ok(Self {
            manifest,
            corpus,
            clusters,
            indices,
            by_abstract,
        })
    }

    /// Papers whose abstract equals `text` up to whitespace.
    pub fn papers_with_abstract(&self, text: &str) -> &[String] {
        self.by_abstract
            .get(&abstract_hash(text))
            .map_or(&[], Vec::as_slice)
    }

    /// Fails unless `p` produces sentence vectors of the indexed dimension.
    /// A different provider name is allowed but logged.
    pub fn check_query_provider(&self, p: &dyn EmbeddingProvider) -> Result<(), SnapshotError> {
        let want = &self.manifest.sentence_provider;
        if p.kind() != EmbeddingKind::Sentence {
            return Err(SnapshotError::Provider(format!("{} is a {} provider", p.name(), p.kind())));
        }
        if p.dimension() != want.dimension {
            return Err(SnapshotError::Provider(format!(
                "{} has dimension {}, indices have {}",
                p.name(),
                p.dimension(),
                want.dimension
            )));
        }
        if p.name() != want.name {
            tracing::warn!(built = %want.name, serving = %p.name(), "query provider differs from build provider");
        }
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), SnapshotError> {
        let dir = dir.as_ref();
        let index_dir = dir.join(INDEX_DIR);
        fs::create_dir_all(&index_dir).map_err(io_err(&index_dir))?;
        let manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        let path = dir.join(MANIFEST);
        fs::write(&path, manifest + "\n").map_err(io_err(&path))?;
        self.corpus.save(dir.join(CORPUS))?;
        self.clusters.save(dir.join(CLUSTERS))?;
        for index in &self.indices {
            index.save(index_dir.join(index_file(index.cluster_id())))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, SnapshotError> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| SnapshotError::Manifest(e.to_string()))?;
        if manifest.format != SNAPSHOT_FORMAT || manifest.version != SNAPSHOT_FORMAT_VERSION {
            return Err(SnapshotError::Manifest(format!(
                "unsupported snapshot {} v{}",
                manifest.format, manifest.version
            )));
        }
        let corpus = Corpus::load(dir.join(CORPUS))?;
        let clusters = GlobalClusterSet::load(dir.join(CLUSTERS))?;
        let indices = (0..clusters.k() as u32)
            .into_par_iter()
            .map(|c| ClusterIndex::load(dir.join(INDEX_DIR).join(index_file(c))))
            .collect::<Result<Vec<_>, _>>()?;
        if corpus.stats() != manifest.corpus {
            return Err(SnapshotError::Inconsistent("corpus differs from manifest".into()));
        }
        Snapshot::assemble(manifest, corpus, clusters, indices)
    }

    pub fn cluster_size(&self, c: u32) -> usize {
        self.clusters.doc_ids.get(c as usize).map_or(0, Vec::len)
    }
}

impl Built {
    /// Writes the snapshot and both vector caches.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), SnapshotError> {
        let dir = dir.as_ref();
        self.snapshot.save(dir)?;
        for (name, cache) in [(DOC_CACHE, &self.doc_vectors), (SENT_CACHE, &self.sent_vectors)] {
            let path = dir.join(name);
            cache.save(&path).map_err(io_err(&path))?;
        }
        Ok(())
    }
}

/// Vector caches of an earlier build in `dir`, if both are present and
/// readable.
pub fn load_caches(dir: impl AsRef<Path>) -> Option<(VectorCache, VectorCache)> {
    let dir = dir.as_ref();
    let doc = VectorCache::load(dir.join(DOC_CACHE)).ok()?;
    let sent = VectorCache::load(dir.join(SENT_CACHE)).ok()?;
    Some((doc, sent))
}

/// File name of the index of `cluster` inside the index directory.
pub fn index_file(cluster: u32) -> String {
    format!("cluster_{cluster:03}.idx")
}

fn check_kind(p: &dyn EmbeddingProvider, kind: EmbeddingKind) -> Result<(), SnapshotError> {
    if p.kind() != kind {
        return Err(EmbedError::WrongKind {
            provider: p.name().to_string(),
            expected: kind,
            actual: p.kind(),
        }
        .into());
    }
    Ok(())
}

/// One index per global cluster over the sentences of its member papers.
pub fn build_indices(
    corpus: &Corpus,
    clusters: &GlobalClusterSet,
    sent_vectors: &VectorCache,
    params: IndexParams,
) -> Result<Vec<ClusterIndex>, SnapshotError> {
    let positions = sent_vectors.id_map();
    let mut entries: Vec<Vec<(SentenceRef, Vector)>> = vec![Vec::new(); clusters.k()];
    let mut seen = HashSet::new();
    for s in corpus.sentences() {
        let r = s.reference();
        let c = clusters
            .cluster_of(&r.doc_id)
            .ok_or_else(|| SnapshotError::Inconsistent(format!("paper {} has no cluster", r.doc_id)))?;
        let key = r.key();
        let i = *positions
            .get(key.as_str())
            .ok_or_else(|| SnapshotError::Inconsistent(format!("no sentence vector for {key}")))?;
        seen.insert(i);
        entries[c as usize].push((r, Vector::from_unit(sent_vectors.vector(i).to_vec())));
    }
    Ok(entries
        .into_par_iter()
        .enumerate()
        .map(|(c, e)| ClusterIndex::build(c as u32, e, params))
        .collect::<Result<Vec<_>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::FallbackEncoder;
    use crate::synth::{domain_corpus, to_corpus, DomainCorpusConfig};

    fn small() -> (Corpus, BuildConfig) {
        let recs = domain_corpus(&DomainCorpusConfig {
            docs: 120,
            domains: 4,
            ..Default::default()
        });
        let cfg = BuildConfig {
            k: 4,
            ..Default::default()
        };
        (to_corpus(&recs), cfg)
    }

    fn providers() -> (FallbackEncoder, FallbackEncoder) {
        (
            FallbackEncoder::new(64, EmbeddingKind::Document).unwrap(),
            FallbackEncoder::new(64, EmbeddingKind::Sentence).unwrap(),
        )
    }

    #[test]
    fn save_load_round_trip() {
        let (corpus, cfg) = small();
        let (dp, sp) = providers();
        let built = Snapshot::build(corpus, &dp, &sp, &cfg, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        built.save(dir.path()).unwrap();
        let loaded = Snapshot::load(dir.path()).unwrap();
        assert_eq!(loaded.manifest, built.snapshot.manifest);
        assert_eq!(loaded.corpus, built.snapshot.corpus);
        assert_eq!(loaded.clusters, built.snapshot.clusters);
        assert_eq!(loaded.indices, built.snapshot.indices);
        assert_eq!(loaded.manifest.cluster_sizes.iter().sum::<usize>(), 120);
        let (d, s) = load_caches(dir.path()).unwrap();
        assert_eq!(d, built.doc_vectors);
        assert_eq!(s, built.sent_vectors);
    }

    #[test]
    fn provider_checks() {
        let (corpus, cfg) = small();
        let (dp, sp) = providers();
        assert!(Snapshot::build(corpus.clone(), &sp, &sp, &cfg, None).is_err());
        let snap = Snapshot::build(corpus, &dp, &sp, &cfg, None).unwrap().snapshot;
        assert!(snap.check_query_provider(&sp).is_ok());
        assert!(snap.check_query_provider(&dp).is_err());
        let wrong_dim = FallbackEncoder::new(32, EmbeddingKind::Sentence).unwrap();
        assert!(matches!(snap.check_query_provider(&wrong_dim), Err(SnapshotError::Provider(_))));
    }

    #[test]
    fn abstract_lookup_ignores_whitespace() {
        let (corpus, cfg) = small();
        let (dp, sp) = providers();
        let snap = Snapshot::build(corpus, &dp, &sp, &cfg, None).unwrap().snapshot;
        let doc = &snap.corpus.documents()[5];
        let spaced = doc.abstract_text.replace(' ', "  \n");
        assert_eq!(snap.papers_with_abstract(&spaced), [doc.paper_id.clone()]);
        assert!(snap.papers_with_abstract("unrelated text").is_empty());
    }
}
