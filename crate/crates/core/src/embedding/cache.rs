//! Embedding cache: vectors keyed by provider name and content hash, and its
//! on-disk form.
//!
//! File layout (little-endian):
//!
//! ```text
//! magic "XDVCACHE" | version u32 | provider name (u32 len + utf8) | kind u8
//! dimension u32 | count u64
//! count x (id: u32 len + utf8, content hash: 32 bytes)
//! count x dimension x f32          -- fixed-width records, same order as ids
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use parking_lot::RwLock;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{EmbedError, EmbeddingKind, EmbeddingProvider, Vector};

const MAGIC: &[u8; 8] = b"XDVCACHE";
const VERSION: u32 = 1;

pub type ContentHash = [u8; 32];

pub fn content_hash(text: &str) -> ContentHash {
    Sha256::digest(text.as_bytes()).into()
}

#[derive(Debug, Error)]
pub enum VectorCacheError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a vector cache file")]
    BadMagic,
    #[error("unsupported vector cache version {0}")]
    Version(u32),
    #[error("corrupt vector cache: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Ordered id → vector table produced by one provider.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorCache {
    provider: String,
    kind: EmbeddingKind,
    dim: usize,
    ids: Vec<String>,
    hashes: Vec<ContentHash>,
    data: Vec<f32>,
}

impl VectorCache {
    pub fn new(provider: impl Into<String>, kind: EmbeddingKind, dim: usize) -> Self {
        Self {
            provider: provider.into(),
            kind,
            dim,
            ids: Vec::new(),
            hashes: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Embeds `(id, text)` items, reusing vectors from `previous` whose
    /// provider, kind and dimension match and whose content hash is known.
    pub fn build(
        items: &[(String, String)],
        provider: &dyn EmbeddingProvider,
        previous: Option<&VectorCache>,
        batch_size: usize,
    ) -> Result<Self, VectorCacheError> {
        let reusable = previous.filter(|p| {
            p.provider == provider.name() && p.kind == provider.kind() && p.dim == provider.dimension()
        });
        let known: HashMap<ContentHash, usize> = reusable
            .map(|p| p.hashes.iter().enumerate().map(|(i, h)| (*h, i)).collect())
            .unwrap_or_default();
        let hashes: Vec<ContentHash> = items.iter().map(|(_, t)| content_hash(t)).collect();
        let missing: Vec<usize> = (0..items.len())
            .filter(|&i| !known.contains_key(&hashes[i]))
            .collect();
        let texts: Vec<&str> = missing.iter().map(|&i| items[i].1.as_str()).collect();
        let fresh = super::embed_batched(provider, &texts, batch_size)?;
        let mut fresh_by_item: HashMap<usize, Vector> = missing.into_iter().zip(fresh).collect();

        let mut cache = VectorCache::new(provider.name(), provider.kind(), provider.dimension());
        for (i, (id, _)) in items.iter().enumerate() {
            match fresh_by_item.remove(&i) {
                Some(v) => cache.push(id.clone(), hashes[i], v.as_slice())?,
                None => {
                    let p = reusable.expect("hash hit implies previous cache");
                    cache.push(id.clone(), hashes[i], p.vector(known[&hashes[i]]))?
                }
            }
        }
        Ok(cache)
    }

    pub fn push(&mut self, id: String, hash: ContentHash, v: &[f32]) -> Result<(), EmbedError> {
        if v.len() != self.dim {
            return Err(EmbedError::Contract(format!(
                "vector of length {} in cache of dimension {}",
                v.len(),
                self.dim
            )));
        }
        self.ids.push(id);
        self.hashes.push(hash);
        self.data.extend_from_slice(v);
        Ok(())
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn hash(&self, i: usize) -> &ContentHash {
        &self.hashes[i]
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Row-major `len x dimension` block.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn id_map(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        write_str(&mut w, &self.provider)?;
        w.write_u8(match self.kind {
            EmbeddingKind::Document => 0,
            EmbeddingKind::Sentence => 1,
        })?;
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        w.write_u64::<LittleEndian>(self.ids.len() as u64)?;
        for (id, h) in self.ids.iter().zip(&self.hashes) {
            write_str(&mut w, id)?;
            w.write_all(h)?;
        }
        for x in &self.data {
            w.write_f32::<LittleEndian>(*x)?;
        }
        w.flush()
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, VectorCacheError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(VectorCacheError::BadMagic);
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(VectorCacheError::Version(version));
        }
        let provider = read_str(&mut r)?;
        let kind = match r.read_u8()? {
            0 => EmbeddingKind::Document,
            1 => EmbeddingKind::Sentence,
            k => return Err(VectorCacheError::Corrupt(format!("kind byte {k}"))),
        };
        let dim = r.read_u32::<LittleEndian>()? as usize;
        let count = r.read_u64::<LittleEndian>()? as usize;
        let mut cache = VectorCache::new(provider, kind, dim);
        for _ in 0..count {
            let id = read_str(&mut r)?;
            let mut h = [0u8; 32];
            r.read_exact(&mut h)?;
            cache.ids.push(id);
            cache.hashes.push(h);
        }
        cache.data = vec![0f32; count * dim];
        r.read_f32_into::<LittleEndian>(&mut cache.data)?;
        if cache.data.iter().any(|x| !x.is_finite()) {
            return Err(VectorCacheError::Corrupt("non-finite component".into()));
        }
        Ok(cache)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VectorCacheError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str(r: &mut impl Read) -> Result<String, VectorCacheError> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > 1 << 20 {
        return Err(VectorCacheError::Corrupt(format!("string length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| VectorCacheError::Corrupt(e.to_string()))
}

/// Memoizing wrapper: concurrent lookups, serialized inserts.
pub struct CachingProvider<P> {
    inner: P,
    memo: RwLock<HashMap<ContentHash, Vector>>,
}

impl<P: EmbeddingProvider> CachingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            memo: RwLock::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.memo.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.memo.read().is_empty()
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachingProvider<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn kind(&self) -> EmbeddingKind {
        self.inner.kind()
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        let hashes: Vec<ContentHash> = texts.iter().map(|t| content_hash(t)).collect();
        let mut out: Vec<Option<Vector>> = {
            let memo = self.memo.read();
            hashes.iter().map(|h| memo.get(h).cloned()).collect()
        };
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let batch: Vec<&str> = missing.iter().map(|&i| texts[i]).collect();
            let fresh = self.inner.embed_texts(&batch)?;
            let mut memo = self.memo.write();
            for (i, v) in missing.into_iter().zip(fresh) {
                memo.insert(hashes[i], v.clone());
                out[i] = Some(v);
            }
        }
        out.into_iter()
            .map(|v| v.ok_or_else(|| EmbedError::Contract("short response".into())))
            .collect()
    }
}
