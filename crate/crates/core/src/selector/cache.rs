use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::SelectionDecision;

pub const DEFAULT_TTL_SECS: u64 = 7 * 24 * 3600;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cache record does not encode: {0}")]
    Encode(#[from] serde_json::Error),
}

pub trait Clock: Send + Sync {
    fn now_secs(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_secs(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
    }
}

/// Clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: u64) -> Self {
        Self(AtomicU64::new(start))
    }

    pub fn advance(&self, secs: u64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_secs(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub post_id: String,
    pub generator_version: String,
}

impl CacheKey {
    pub fn new(post_id: impl Into<String>, generator_version: impl Into<String>) -> Self {
        Self {
            post_id: post_id.into(),
            generator_version: generator_version.into(),
        }
    }
}

/// Level 1 holds the generated candidate texts, level 2 the winning decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub candidates: Vec<String>,
    #[serde(default)]
    pub decision: Option<SelectionDecision>,
    pub created_at: u64,
}

/// Candidate and decision cache keyed by `(post_id, generator_version)`.
///
/// With a backing file every write is appended as a `u32` little-endian
/// length followed by that many bytes of JSON; on open the log is replayed
/// (last record per key wins, a torn tail is ignored) and rewritten with only
/// the live entries.
pub struct SelectionCache {
    entries: Mutex<HashMap<CacheKey, CacheEntry>>,
    ttl_secs: u64,
    clock: Arc<dyn Clock>,
    log: Option<Mutex<(PathBuf, BufWriter<File>)>>,
}

impl SelectionCache {
    pub fn in_memory(ttl_secs: u64) -> Self {
        Self::with_clock(ttl_secs, Arc::new(SystemClock))
    }

    pub fn with_clock(ttl_secs: u64, clock: Arc<dyn Clock>) -> Self {
        Self {
            entries: Mutex::new(HashMap::new()),
            ttl_secs,
            clock,
            log: None,
        }
    }

    pub fn open(path: &Path, ttl_secs: u64, clock: Arc<dyn Clock>) -> Result<Self, CacheError> {
        let io = |source| CacheError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut cache = Self::with_clock(ttl_secs, clock);
        if path.exists() {
            let mut reader = BufReader::new(File::open(path).map_err(io)?);
            let now = cache.clock.now_secs();
            let entries = cache.entries.get_mut().unwrap();
            while let Some(entry) = read_record(&mut reader).map_err(io)? {
                if now.saturating_sub(entry.created_at) < ttl_secs {
                    entries.insert(entry.key.clone(), entry);
                } else {
                    entries.remove(&entry.key);
                }
            }
        }
        // Compact: rewrite live entries, then swap the file in.
        let tmp = path.with_extension("compact");
        {
            let mut w = BufWriter::new(File::create(&tmp).map_err(io)?);
            let mut live: Vec<_> = cache.entries.get_mut().unwrap().values().collect();
            live.sort_by(|a, b| {
                (&a.key.post_id, &a.key.generator_version).cmp(&(&b.key.post_id, &b.key.generator_version))
            });
            for entry in live {
                write_record(&mut w, entry)?;
            }
            w.flush().map_err(io)?;
        }
        std::fs::rename(&tmp, path).map_err(io)?;
        let file = OpenOptions::new().append(true).open(path).map_err(io)?;
        cache.log = Some(Mutex::new((path.to_path_buf(), BufWriter::new(file))));
        Ok(cache)
    }

    pub fn ttl_secs(&self) -> u64 {
        self.ttl_secs
    }

    pub fn now_secs(&self) -> u64 {
        self.clock.now_secs()
    }

    fn live(&self, entries: &mut HashMap<CacheKey, CacheEntry>, key: &CacheKey) -> Option<CacheEntry> {
        let now = self.clock.now_secs();
        match entries.get(key) {
            Some(e) if now.saturating_sub(e.created_at) < self.ttl_secs => Some(e.clone()),
            Some(_) => {
                entries.remove(key);
                None
            }
            None => None,
        }
    }

    pub fn get(&self, key: &CacheKey) -> Option<CacheEntry> {
        let mut entries = self.entries.lock().unwrap();
        self.live(&mut entries, key)
    }

    pub fn decision(&self, key: &CacheKey) -> Option<SelectionDecision> {
        self.get(key).and_then(|e| e.decision)
    }

    /// Stores level-1 candidates; any decision for the key is kept only if
    /// the candidates are unchanged.
    pub fn put_candidates(&self, key: &CacheKey, candidates: Vec<String>) -> Result<(), CacheError> {
        let entry = {
            let mut entries = self.entries.lock().unwrap();
            let now = self.clock.now_secs();
            let previous = self.live(&mut entries, key);
            let (decision, created_at) = match previous {
                Some(p) if p.candidates == candidates => (p.decision, p.created_at),
                _ => (None, now),
            };
            let entry = CacheEntry {
                key: key.clone(),
                candidates,
                decision,
                created_at,
            };
            entries.insert(key.clone(), entry.clone());
            entry
        };
        self.persist(&entry)
    }

    /// Stores both levels at once.
    pub fn put_decision(
        &self,
        key: &CacheKey,
        candidates: Vec<String>,
        decision: SelectionDecision,
    ) -> Result<(), CacheError> {
        let entry = {
            let mut entries = self.entries.lock().unwrap();
            let created_at = match self.live(&mut entries, key) {
                Some(p) if p.candidates == candidates => p.created_at,
                _ => self.clock.now_secs(),
            };
            let entry = CacheEntry {
                key: key.clone(),
                candidates,
                decision: Some(decision),
                created_at,
            };
            entries.insert(key.clone(), entry.clone());
            entry
        };
        self.persist(&entry)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn persist(&self, entry: &CacheEntry) -> Result<(), CacheError> {
        let Some(log) = &self.log else { return Ok(()) };
        let mut guard = log.lock().unwrap();
        let (path, writer) = &mut *guard;
        let io = |source| CacheError::Io {
            path: path.display().to_string(),
            source,
        };
        write_record(writer, entry)?;
        writer.flush().map_err(io)
    }
}

fn write_record(w: &mut impl Write, entry: &CacheEntry) -> Result<(), CacheError> {
    let json = serde_json::to_vec(entry)?;
    let len = u32::try_from(json.len()).expect("cache record under 4 GiB");
    let io = |source| CacheError::Io {
        path: "<cache log>".into(),
        source,
    };
    w.write_all(&len.to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)
}

/// Next record, or `None` at end of file or on a torn/corrupt tail.
fn read_record(r: &mut impl Read) -> std::io::Result<Option<CacheEntry>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
    match r.read_exact(&mut buf) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    Ok(serde_json::from_slice(&buf).ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidate::{Provenance, SubjectLineCandidate};

    fn decision(post_id: &str, text: &str) -> SelectionDecision {
        SelectionDecision {
            post_id: post_id.into(),
            chosen: SubjectLineCandidate::generated(text),
            source: Provenance::Generated,
            scores: vec![0.1, 0.9],
            score: Some(0.9),
            cached: false,
            generator_version: "v1".into(),
            timestamp: 0,
        }
    }

    #[test]
    fn ttl_expiry() {
        let clock = Arc::new(ManualClock::new(1000));
        let cache = SelectionCache::with_clock(60, clock.clone());
        let key = CacheKey::new("p1", "v1");
        cache.put_decision(&key, vec!["A".into()], decision("p1", "A")).unwrap();
        clock.advance(59);
        assert!(cache.decision(&key).is_some());
        clock.advance(1);
        assert!(cache.get(&key).is_none());
    }

    #[test]
    fn level_one_change_drops_decision() {
        let cache = SelectionCache::in_memory(DEFAULT_TTL_SECS);
        let key = CacheKey::new("p1", "v1");
        cache.put_decision(&key, vec!["A".into()], decision("p1", "A")).unwrap();
        cache.put_candidates(&key, vec!["A".into()]).unwrap();
        assert!(cache.decision(&key).is_some());
        cache.put_candidates(&key, vec!["B".into()]).unwrap();
        assert!(cache.decision(&key).is_none());
    }

    #[test]
    fn versions_are_separate_keys() {
        let cache = SelectionCache::in_memory(DEFAULT_TTL_SECS);
        cache
            .put_decision(&CacheKey::new("p", "v1"), vec![], decision("p", "A"))
            .unwrap();
        assert!(cache.get(&CacheKey::new("p", "v2")).is_none());
    }

    #[test]
    fn persists_and_compacts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.log");
        let clock = Arc::new(ManualClock::new(10));
        {
            let cache = SelectionCache::open(&path, 100, clock.clone()).unwrap();
            let key = CacheKey::new("p1", "v1");
            cache.put_candidates(&key, vec!["A".into(), "B".into()]).unwrap();
            cache
                .put_decision(&key, vec!["A".into(), "B".into()], decision("p1", "B"))
                .unwrap();
            cache
                .put_candidates(&CacheKey::new("p2", "v1"), vec!["C".into()])
                .unwrap();
        }
        let before = std::fs::metadata(&path).unwrap().len();
        // Torn tail from a crash mid-write.
        std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .unwrap()
            .write_all(&[200, 0, 0, 0, b'{'])
            .unwrap();

        let cache = SelectionCache::open(&path, 100, clock.clone()).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.decision(&CacheKey::new("p1", "v1")).unwrap().chosen.text, "B");
        assert!(std::fs::metadata(&path).unwrap().len() < before);

        drop(cache);
        clock.advance(100);
        let cache = SelectionCache::open(&path, 100, clock).unwrap();
        assert!(cache.is_empty());
    }
}
