//! Study feedback: an append-only JSON-lines log folded to the latest
//! record per (session, paper).

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("novelty must be 1, 2 or 3, got {0}")]
    Novelty(i64),
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("feedback log {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("feedback log {path} line {line}: {reason}")]
    Corrupt { path: String, line: usize, reason: String },
}

/// 1 = seen this exact paper, 2 = seen similar ideas, 3 = nothing like it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub session_id: String,
    pub paper_id: String,
    pub novelty: u8,
    pub relevance: bool,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

impl Feedback {
    pub fn new(
        session_id: &str,
        paper_id: &str,
        novelty: i64,
        relevance: bool,
        timestamp: u64,
    ) -> Result<Self, FeedbackError> {
        if session_id.trim().is_empty() {
            return Err(FeedbackError::Empty("session_id"));
        }
        if paper_id.trim().is_empty() {
            return Err(FeedbackError::Empty("paper_id"));
        }
        if !(1..=3).contains(&novelty) {
            return Err(FeedbackError::Novelty(novelty));
        }
        Ok(Self {
            session_id: session_id.trim().to_string(),
            paper_id: paper_id.trim().to_string(),
            novelty: novelty as u8,
            relevance,
            timestamp,
        })
    }
}

/// Latest record per (session, paper), in log order.
pub fn fold(records: impl IntoIterator<Item = Feedback>) -> BTreeMap<(String, String), Feedback> {
    let mut out = BTreeMap::new();
    for r in records {
        out.insert((r.session_id.clone(), r.paper_id.clone()), r);
    }
    out
}

enum Sink {
    File { path: PathBuf, file: File },
    Memory(Vec<Feedback>),
}

/// Single appender; writes are serialized and flushed per record.
pub struct FeedbackLog {
    sink: Mutex<Sink>,
}

impl FeedbackLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, FeedbackError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| FeedbackError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Ok(Self {
            sink: Mutex::new(Sink::File { path, file }),
        })
    }

    pub fn in_memory() -> Self {
        Self {
            sink: Mutex::new(Sink::Memory(Vec::new())),
        }
    }

    pub fn append(&self, record: &Feedback) -> Result<(), FeedbackError> {
        let mut sink = self.sink.lock();
        match &mut *sink {
            Sink::Memory(v) => v.push(record.clone()),
            Sink::File { path, file } => {
                let mut line = serde_json::to_vec(record).expect("feedback serializes");
                line.push(b'\n');
                file.write_all(&line)
                    .and_then(|_| file.flush())
                    .map_err(|source| FeedbackError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
            }
        }
        Ok(())
    }

    /// Every record in log order.
    pub fn records(&self) -> Result<Vec<Feedback>, FeedbackError> {
        let sink = self.sink.lock();
        match &*sink {
            Sink::Memory(v) => Ok(v.clone()),
            Sink::File { path, .. } => read_log(path),
        }
    }

    pub fn folded(&self) -> Result<Vec<Feedback>, FeedbackError> {
        Ok(fold(self.records()?).into_values().collect())
    }
}

pub fn read_log(path: &Path) -> Result<Vec<Feedback>, FeedbackError> {
    let p = path.display().to_string();
    let file = File::open(path).map_err(|source| FeedbackError::Io { path: p.clone(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| FeedbackError::Io { path: p.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| FeedbackError::Corrupt {
            path: p.clone(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(Feedback::new("s", "p", 2, true, 0).is_ok());
        assert!(matches!(Feedback::new("s", "p", 5, true, 0), Err(FeedbackError::Novelty(5))));
        assert!(matches!(Feedback::new("s", "p", 0, true, 0), Err(FeedbackError::Novelty(0))));
        assert!(matches!(Feedback::new(" ", "p", 1, true, 0), Err(FeedbackError::Empty("session_id"))));
    }

    #[test]
    fn file_log_folds_latest_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fb.jsonl");
        let log = FeedbackLog::open(&path).unwrap();
        log.append(&Feedback::new("s1", "p1", 1, false, 10).unwrap()).unwrap();
        log.append(&Feedback::new("s1", "p2", 2, true, 11).unwrap()).unwrap();
        log.append(&Feedback::new("s1", "p1", 3, true, 12).unwrap()).unwrap();
        drop(log);
        // reopening appends rather than truncating
        let log = FeedbackLog::open(&path).unwrap();
        log.append(&Feedback::new("s2", "p1", 2, false, 13).unwrap()).unwrap();
        assert_eq!(log.records().unwrap().len(), 4);
        let folded = log.folded().unwrap();
        assert_eq!(folded.len(), 3);
        assert_eq!(folded[0].paper_id, "p1");
        assert_eq!(folded[0].novelty, 3);
        assert!(folded[0].relevance);
    }
}
