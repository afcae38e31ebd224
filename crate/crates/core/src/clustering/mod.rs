//! K-means clustering, cluster purity and TF-IDF descriptors, plus the
//! corpus-wide domain clusters built from document vectors.

pub mod descriptors;
pub mod kmeans;
pub mod purity;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::embedding::VectorCache;

pub use descriptors::{descriptors, DescriptorConfig};
pub use kmeans::{kmeans, ClusterModel, DenseRows, KMeansConfig, PointSet, SparseRows, VectorRows};
pub use purity::{purity, purity_by_key, Purity};

pub const CLUSTERS_FORMAT: &str = "xdomain-clusters";
pub const CLUSTERS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("no points to cluster")]
    NoPoints,
    #[error("k = {k} exceeds the number of points ({n})")]
    TooFewPoints { k: usize, n: usize },
    #[error("k = {k} exceeds the number of distinct points ({distinct})")]
    TooFewDistinct { k: usize, distinct: usize },
    #[error("points have inconsistent dimensions")]
    DimensionMismatch,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot repair an empty cluster: every point sits on its centroid")]
    Degenerate,
    #[error("labels and assignments disagree: {0}")]
    LabelMismatch(String),
    #[error("vector cache does not cover document {0:?}")]
    MissingVector(String),
    #[error("cluster model file: {0}")]
    File(String),
}

/// Corpus partition into domain clusters with their descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalClusterSet {
    pub model: ClusterModel,
    /// Member paper ids per cluster, in corpus order.
    pub doc_ids: Vec<Vec<String>>,
    pub descriptors: Vec<Vec<String>>,
    point_ids: Vec<String>,
    by_doc: HashMap<String, u32>,
}

impl GlobalClusterSet {
    /// `point_ids[i]` is the paper id of the model's point `i`.
    pub fn from_model(
        model: ClusterModel,
        point_ids: Vec<String>,
        descriptors: Vec<Vec<String>>,
    ) -> Result<Self, ClusterError> {
        if point_ids.len() != model.assignments.len() {
            return Err(ClusterError::LabelMismatch(format!(
                "{} ids for {} assignments",
                point_ids.len(),
                model.assignments.len()
            )));
        }
        let mut doc_ids = vec![Vec::new(); model.k()];
        let mut by_doc = HashMap::new();
        for (id, &c) in point_ids.iter().zip(&model.assignments) {
            if c as usize >= model.k() {
                return Err(ClusterError::File(format!("assignment {c} out of range")));
            }
            doc_ids[c as usize].push(id.clone());
            if by_doc.insert(id.clone(), c).is_some() {
                return Err(ClusterError::File(format!("duplicate point id {id:?}")));
            }
        }
        let descriptors = if descriptors.is_empty() {
            vec![Vec::new(); model.k()]
        } else {
            descriptors
        };
        if descriptors.len() != model.k() {
            return Err(ClusterError::File("descriptor count != k".into()));
        }
        Ok(Self {
            model,
            doc_ids,
            descriptors,
            point_ids,
            by_doc,
        })
    }

    pub fn k(&self) -> usize {
        self.model.k()
    }

    pub fn cluster_of(&self, paper_id: &str) -> Option<u32> {
        self.by_doc.get(paper_id).copied()
    }

    pub fn point_ids(&self) -> &[String] {
        &self.point_ids
    }

    /// Recomputes descriptors from member titles and abstracts.
    pub fn attach_descriptors(&mut self, corpus: &Corpus, cfg: &DescriptorConfig) -> Result<(), ClusterError> {
        self.descriptors = cluster_descriptors(corpus, &self.doc_ids, cfg)?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: CLUSTERS_FORMAT.into(),
            version: CLUSTERS_FORMAT_VERSION,
            dimension: self.model.centroids.first().map_or(0, Vec::len),
            point_ids: self.point_ids.clone(),
            descriptors: self.descriptors.clone(),
            model: self.model.clone(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ClusterError> {
        let file: ModelFile =
            serde_json::from_str(s).map_err(|e| ClusterError::File(e.to_string()))?;
        if file.format != CLUSTERS_FORMAT || file.version != CLUSTERS_FORMAT_VERSION {
            return Err(ClusterError::File(format!(
                "unsupported format {} v{}",
                file.format, file.version
            )));
        }
        Self::from_model(file.model, file.point_ids, file.descriptors)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClusterError> {
        fs::write(path, self.to_json()).map_err(|e| ClusterError::File(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClusterError> {
        let s = fs::read_to_string(path).map_err(|e| ClusterError::File(e.to_string()))?;
        Self::from_json(&s)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    dimension: usize,
    point_ids: Vec<String>,
    #[serde(default)]
    descriptors: Vec<Vec<String>>,
    model: ClusterModel,
}

fn cluster_descriptors(
    corpus: &Corpus,
    members: &[Vec<String>],
    cfg: &DescriptorConfig,
) -> Result<Vec<Vec<String>>, ClusterError> {
    let texts: Vec<Vec<String>> = members
        .iter()
        .map(|ids| {
            ids.iter()
                .filter_map(|id| corpus.get(id))
                .map(|d| format!("{} {}", d.title, d.abstract_text))
                .collect()
        })
        .collect();
    if texts.len() < 2 {
        return Ok(texts
            .iter()
            .map(|t| descriptors::frequent_terms(t, cfg.top_n))
            .collect());
    }
    descriptors(&texts, cfg)
}

/// Clusters the vectors of a cache (ids in cache order) without descriptors.
pub fn cluster_cache(cache: &VectorCache, cfg: &KMeansConfig) -> Result<GlobalClusterSet, ClusterError> {
    let rows = DenseRows::new(cache.data(), cache.dimension())?;
    let model = kmeans(&rows, cfg)?;
    GlobalClusterSet::from_model(model, cache.ids().to_vec(), Vec::new())
}

/// K-means over document vectors in corpus order, with descriptors.
pub fn build_global_clusters(
    corpus: &Corpus,
    doc_vectors: &VectorCache,
    kcfg: &KMeansConfig,
    dcfg: &DescriptorConfig,
) -> Result<GlobalClusterSet, ClusterError> {
    let index = doc_vectors.id_map();
    let dim = doc_vectors.dimension();
    let mut data = Vec::with_capacity(corpus.len() * dim);
    for doc in corpus.documents() {
        let i = *index
            .get(doc.paper_id.as_str())
            .ok_or_else(|| ClusterError::MissingVector(doc.paper_id.clone()))?;
        data.extend_from_slice(doc_vectors.vector(i));
    }
    let rows = DenseRows::new(&data, dim)?;
    let model = kmeans(&rows, kcfg)?;
    let ids = corpus.documents().iter().map(|d| d.paper_id.clone()).collect();
    let mut set = GlobalClusterSet::from_model(model, ids, Vec::new())?;
    set.attach_descriptors(corpus, dcfg)?;
    Ok(set)
}
