//! Resolved queries kept for zoom-in, keyed by a hash of the abstract and
//! the selected sentence.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use sha2::{Digest, Sha256};

use crate::search::Query;

pub const DEFAULT_QUERY_TTL: Duration = Duration::from_secs(3600);

/// A cached query and the per-cluster count it was searched with.
#[derive(Debug, Clone)]
pub struct CachedQuery {
    pub query: Arc<Query>,
    pub t: usize,
}

pub struct QueryCache {
    ttl: Duration,
    entries: Mutex<HashMap<String, (Instant, CachedQuery)>>,
}

/// Hex SHA-256 of the whitespace-normalized abstract and the sentence index.
pub fn query_id(abstract_text: &str, sentence_index: usize) -> String {
    let norm = abstract_text.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut h = Sha256::new();
    h.update(norm.as_bytes());
    h.update([0]);
    h.update((sentence_index as u64).to_le_bytes());
    hex::encode(h.finalize())
}

impl QueryCache {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            entries: Mutex::new(HashMap::new()),
        }
    }

    /// Stores `entry` and returns its id. Expired entries are purged.
    pub fn insert(&self, entry: CachedQuery) -> String {
        let id = query_id(&entry.query.abstract_text, entry.query.sentence_index);
        let now = Instant::now();
        let mut map = self.entries.lock();
        map.retain(|_, (at, _)| now.duration_since(*at) < self.ttl);
        map.insert(id.clone(), (now, entry));
        id
    }

    /// The entry for `id` unless it is unknown or older than the TTL.
    pub fn get(&self, id: &str) -> Option<CachedQuery> {
        let mut map = self.entries.lock();
        let (at, entry) = map.get(id)?;
        if at.elapsed() >= self.ttl {
            map.remove(id);
            return None;
        }
        Some(entry.clone())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Vector;

    fn entry(abs: &str, i: usize) -> CachedQuery {
        let sentences = vec!["One.".to_string(), "Two.".to_string()];
        let q = Query::with_vector(abs, sentences, i, None, Vector::normalized(&[1.0, 0.0]).unwrap()).unwrap();
        CachedQuery { query: Arc::new(q), t: 10 }
    }

    #[test]
    fn id_depends_on_abstract_and_index_only() {
        assert_eq!(query_id("One.  Two.", 1), query_id("One. Two.", 1));
        assert_ne!(query_id("One. Two.", 0), query_id("One. Two.", 1));
        assert_eq!(query_id("x", 0).len(), 64);
    }

    #[test]
    fn expiry() {
        let cache = QueryCache::new(Duration::from_millis(30));
        let id = cache.insert(entry("One. Two.", 1));
        assert!(cache.get(&id).is_some());
        assert!(cache.get("nope").is_none());
        std::thread::sleep(Duration::from_millis(60));
        assert!(cache.get(&id).is_none());
        assert!(cache.is_empty());
    }
}
