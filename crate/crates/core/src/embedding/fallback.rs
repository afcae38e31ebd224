//! Deterministic offline encoder: hashed character n-grams (n = 3..=5)
//! projected by a seeded random sign matrix, then L2-normalized.

use super::{EmbedError, EmbeddingKind, EmbeddingProvider, Vector};

/// Seed of the sign matrix. Changing it changes every fallback vector.
pub const FALLBACK_SEED: u64 = 0x5EED_C0DE_2022_0001;

pub const FALLBACK_MIN_DIM: usize = 16;

/// Size of the hashed n-gram feature space.
pub(crate) const HASH_BUCKETS: u64 = 1 << 20;

const NGRAM_MIN: usize = 3;
const NGRAM_MAX: usize = 5;

#[derive(Debug, Clone)]
pub struct FallbackEncoder {
    dim: usize,
    kind: EmbeddingKind,
    name: String,
}

impl FallbackEncoder {
    pub fn new(dim: usize, kind: EmbeddingKind) -> Result<Self, EmbedError> {
        if dim < FALLBACK_MIN_DIM {
            return Err(EmbedError::InvalidDimension(dim));
        }
        Ok(Self {
            dim,
            kind,
            name: "fallback-ngram-v1".to_string(),
        })
    }
}

impl EmbeddingProvider for FallbackEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        texts.iter().map(|t| fallback_encode(t, self.dim)).collect()
    }
}

/// Lowercased characters with whitespace runs collapsed, padded by one
/// space on both sides.
pub(crate) fn normalized_chars(text: &str) -> Vec<char> {
    let mut out = vec![' '];
    for c in text.trim().chars() {
        if c.is_whitespace() {
            if out.last() != Some(&' ') {
                out.push(' ');
            }
        } else {
            out.extend(c.to_lowercase());
        }
    }
    out.push(' ');
    out
}

/// FNV-1a over the n-gram's UTF-8 bytes, reduced to a feature bucket.
pub(crate) fn ngram_bucket(gram: &[char]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut buf = [0u8; 4];
    for c in gram {
        for b in c.encode_utf8(&mut buf).bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h % HASH_BUCKETS
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Column `bucket` of the sign matrix, as ±1 entries for rows `0..dim`.
pub(crate) fn sign_column(bucket: u64, dim: usize) -> impl Iterator<Item = f64> {
    let mut state = FALLBACK_SEED ^ bucket.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    let mut word = 0u64;
    (0..dim).map(move |j| {
        if j % 64 == 0 {
            word = splitmix64(&mut state);
        }
        if (word >> (j % 64)) & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    })
}

/// Pure function of `(text, dim)` and [`FALLBACK_SEED`].
pub fn fallback_encode(text: &str, dim: usize) -> Result<Vector, EmbedError> {
    if dim < FALLBACK_MIN_DIM {
        return Err(EmbedError::InvalidDimension(dim));
    }
    if text.trim().is_empty() {
        return Err(EmbedError::EmptyText);
    }
    let chars = normalized_chars(text);
    let mut buckets: Vec<u64> = Vec::new();
    for n in NGRAM_MIN..=NGRAM_MAX {
        buckets.extend(chars.windows(n).map(ngram_bucket));
    }
    // sorted accumulation keeps the float sum order fixed
    buckets.sort_unstable();
    let mut out = vec![0f64; dim];
    let mut i = 0;
    while i < buckets.len() {
        let b = buckets[i];
        let mut count = 0usize;
        while i < buckets.len() && buckets[i] == b {
            count += 1;
            i += 1;
        }
        for (o, s) in out.iter_mut().zip(sign_column(b, dim)) {
            *o += count as f64 * s;
        }
    }
    Vector::normalized(&out)
}
