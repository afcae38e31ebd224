//! Per-cluster nearest-neighbor index over sentence vectors.
//!
//! Small clusters (below [`IndexParams::exact_threshold`] entries) are
//! answered by a full scan; larger ones by an HNSW graph. Both paths score
//! with the same inner product and order hits by score descending, then by
//! `(doc_id, position)` ascending.
//!
//! Index files (little-endian):
//!
//! ```text
//! magic "XDANNIDX" | version u32 | metric u8 (1 = inner product) | dimension u32
//! cluster_id u32 | max_degree u32 | ef_construction u32 | ef_search u32
//! exact_threshold u32 | seed u64 | count u64
//! count x (doc_id: u32 len + utf8, position u32)
//! count x dimension x f32
//! has_graph u8 [entry u32 | max_level u8 | per node: level u8, per layer: n u32, n x u32]
//! ```

mod hnsw;

use std::cmp::Ordering;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SentenceRef;
use crate::embedding::{dot, Vector, UNIT_NORM_TOL};
use hnsw::{GraphView, Hnsw};

const MAGIC: &[u8; 8] = b"XDANNIDX";
const VERSION: u32 = 1;
const METRIC_INNER_PRODUCT: u8 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("index needs at least one entry")]
    Empty,
    #[error("vector of dimension {actual} in index of dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("vector for {0} is not unit-normalized")]
    NotNormalized(String),
    #[error("sentence {0} inserted twice")]
    Duplicate(String),
    #[error("query count must be at least 1")]
    ZeroT,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt index file: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexParams {
    pub max_degree: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    /// Clusters with fewer entries are searched exactly.
    pub exact_threshold: usize,
    pub seed: u64,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            max_degree: 16,
            ef_construction: 200,
            ef_search: 384,
            exact_threshold: 1000,
            seed: 0x1D3A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub sentence: SentenceRef,
    pub score: f32,
    pub cluster_id: u32,
}

/// Score descending, then sentence ref ascending.
pub fn hit_order(a: &Hit, b: &Hit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.sentence.cmp(&b.sentence))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterIndex {
    cluster_id: u32,
    dim: usize,
    params: IndexParams,
    refs: Vec<SentenceRef>,
    data: Vec<f32>,
    graph: Option<Hnsw>,
}

impl ClusterIndex {
    /// Builds a frozen index. Entries are inserted in `(doc_id, position)`
    /// order regardless of input order.
    pub fn build(
        cluster_id: u32,
        mut entries: Vec<(SentenceRef, Vector)>,
        params: IndexParams,
    ) -> Result<Self, IndexError> {
        let dim = entries.first().ok_or(IndexError::Empty)?.1.dim();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(IndexError::Duplicate(w[0].0.key()));
            }
        }
        let mut refs = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * dim);
        for (r, v) in entries {
            if v.dim() != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    actual: v.dim(),
                });
            }
            if (v.norm() - 1.0).abs() > 10.0 * UNIT_NORM_TOL {
                return Err(IndexError::NotNormalized(r.key()));
            }
            data.extend_from_slice(v.as_slice());
            refs.push(r);
        }
        let graph = (refs.len() >= params.exact_threshold).then(|| {
            Hnsw::build(
                &GraphView { data: &data, dim },
                params.max_degree.max(2),
                params.ef_construction.max(1),
                params.seed ^ cluster_id as u64,
            )
        });
        Ok(Self {
            cluster_id,
            dim,
            params,
            refs,
            data,
            graph,
        })
    }

    pub fn cluster_id(&self) -> u32 {
        self.cluster_id
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.graph.is_none()
    }

    pub fn refs(&self) -> &[SentenceRef] {
        &self.refs
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position_of(&self, r: &SentenceRef) -> Option<usize> {
        self.refs.binary_search(r).ok()
    }

    /// Vector of an indexed sentence.
    pub fn vector_of(&self, r: &SentenceRef) -> Option<&[f32]> {
        self.position_of(r).map(|i| self.vector(i))
    }

    /// Approximately the `t` highest-scoring entries (exact on the scan
    /// path). Returns `min(t, len)` hits.
    pub fn query(&self, v: &[f32], t: usize) -> Result<Vec<Hit>, IndexError> {
        self.check_query(v, t)?;
        let Some(graph) = &self.graph else {
            return Ok(self.scan(v, t));
        };
        let view = GraphView {
            data: &self.data,
            dim: self.dim,
        };
        let ef = self.params.ef_search.max(t);
        let mut hits: Vec<Hit> = graph
            .search(&view, v, ef)
            .into_iter()
            .map(|(node, score)| Hit {
                sentence: self.refs[node as usize].clone(),
                score,
                cluster_id: self.cluster_id,
            })
            .collect();
        hits.sort_by(hit_order);
        hits.truncate(t);
        Ok(hits)
    }

    /// Full scan; exact top-`t`.
    pub fn exact_query(&self, v: &[f32], t: usize) -> Result<Vec<Hit>, IndexError> {
        self.check_query(v, t)?;
        Ok(self.scan(v, t))
    }

    fn check_query(&self, v: &[f32], t: usize) -> Result<(), IndexError> {
        if v.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        if t == 0 {
            return Err(IndexError::ZeroT);
        }
        Ok(())
    }

    fn scan(&self, v: &[f32], t: usize) -> Vec<Hit> {
        let entries = self.refs.iter().enumerate().map(|(i, r)| (r, self.vector(i)));
        scan_top(entries, v, t, self.cluster_id)
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        let p = &self.params;
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u8(METRIC_INNER_PRODUCT)?;
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        w.write_u32::<LittleEndian>(self.cluster_id)?;
        for x in [p.max_degree, p.ef_construction, p.ef_search, p.exact_threshold] {
            w.write_u32::<LittleEndian>(x as u32)?;
        }
        w.write_u64::<LittleEndian>(p.seed)?;
        w.write_u64::<LittleEndian>(self.refs.len() as u64)?;
        for r in &self.refs {
            w.write_u32::<LittleEndian>(r.doc_id.len() as u32)?;
            w.write_all(r.doc_id.as_bytes())?;
            w.write_u32::<LittleEndian>(r.position)?;
        }
        for x in &self.data {
            w.write_f32::<LittleEndian>(*x)?;
        }
        match &self.graph {
            None => w.write_u8(0)?,
            Some(g) => {
                w.write_u8(1)?;
                w.write_u32::<LittleEndian>(g.entry)?;
                w.write_u8(g.max_level as u8)?;
                for node in &g.links {
                    w.write_u8((node.len() - 1) as u8)?;
                    for layer in node {
                        w.write_u32::<LittleEndian>(layer.len() as u32)?;
                        for &n in layer {
                            w.write_u32::<LittleEndian>(n)?;
                        }
                    }
                }
            }
        }
        w.flush()
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, IndexError> {
        let corrupt = |m: &str| IndexError::Corrupt(m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic"));
        }
        if r.read_u32::<LittleEndian>()? != VERSION {
            return Err(corrupt("unsupported version"));
        }
        if r.read_u8()? != METRIC_INNER_PRODUCT {
            return Err(corrupt("unknown metric"));
        }
        let dim = r.read_u32::<LittleEndian>()? as usize;
        let cluster_id = r.read_u32::<LittleEndian>()?;
        let mut p = [0usize; 4];
        for x in &mut p {
            *x = r.read_u32::<LittleEndian>()? as usize;
        }
        let params = IndexParams {
            max_degree: p[0],
            ef_construction: p[1],
            ef_search: p[2],
            exact_threshold: p[3],
            seed: r.read_u64::<LittleEndian>()?,
        };
        let count = r.read_u64::<LittleEndian>()? as usize;
        let mut refs = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.read_u32::<LittleEndian>()? as usize;
            if len > 1 << 16 {
                return Err(corrupt("doc id too long"));
            }
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            let doc_id = String::from_utf8(buf).map_err(|_| corrupt("doc id not utf-8"))?;
            refs.push(SentenceRef::new(doc_id, r.read_u32::<LittleEndian>()?));
        }
        let mut data = vec![0f32; count * dim];
        r.read_f32_into::<LittleEndian>(&mut data)?;
        let graph = match r.read_u8()? {
            0 => None,
            1 => {
                let entry = r.read_u32::<LittleEndian>()?;
                let max_level = r.read_u8()? as usize;
                let mut links = Vec::with_capacity(count);
                for _ in 0..count {
                    let level = r.read_u8()? as usize;
                    let mut node = Vec::with_capacity(level + 1);
                    for _ in 0..=level {
                        let n = r.read_u32::<LittleEndian>()? as usize;
                        let mut layer = Vec::with_capacity(n);
                        for _ in 0..n {
                            let nb = r.read_u32::<LittleEndian>()?;
                            if nb as usize >= count {
                                return Err(corrupt("link out of range"));
                            }
                            layer.push(nb);
                        }
                        node.push(layer);
                    }
                    links.push(node);
                }
                if entry as usize >= count {
                    return Err(corrupt("entry point out of range"));
                }
                Some(Hnsw {
                    max_degree: params.max_degree,
                    entry,
                    max_level,
                    links,
                })
            }
            _ => return Err(corrupt("bad graph flag")),
        };
        Ok(Self {
            cluster_id,
            dim,
            params,
            refs,
            data,
            graph,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        Ok(self.write_to(BufWriter::new(File::create(path)?))?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn scan_top<'a>(
    entries: impl Iterator<Item = (&'a SentenceRef, &'a [f32])>,
    v: &[f32],
    t: usize,
    cluster_id: u32,
) -> Vec<Hit> {
    let mut hits: Vec<Hit> = entries
        .map(|(r, x)| Hit {
            sentence: r.clone(),
            score: dot(v, x),
            cluster_id,
        })
        .collect();
    if hits.len() > t {
        hits.select_nth_unstable_by(t - 1, hit_order);
        hits.truncate(t);
    }
    hits.sort_by(hit_order);
    hits
}

/// Brute-force top-`t` over arbitrary entries; the recall oracle.
pub fn exact_query(entries: &[(SentenceRef, Vector)], v: &[f32], t: usize) -> Result<Vec<Hit>, IndexError> {
    if entries.is_empty() {
        return Err(IndexError::Empty);
    }
    if t == 0 {
        return Err(IndexError::ZeroT);
    }
    Ok(scan_top(
        entries.iter().map(|(r, x)| (r, x.as_slice())),
        v,
        t,
        0,
    ))
}
