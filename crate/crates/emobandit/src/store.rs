//! Session storage: one append-only JSONL file per session.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use emobandit_core::{CommandActionMapping, FrameSequence, Label};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::log::{read_recoverable, LogEntry, SessionConfig, SessionStatus};
use crate::session::{SessionError, SessionRecord, SessionSnapshot, SessionSummary};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("storage error: {0}")]
    Io(#[from] std::io::Error),
}

struct Slot {
    record: SessionRecord,
    /// `None` for in-memory stores.
    file: Option<File>,
}

pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Slot>>>>,
    rng: Mutex<ChaCha8Rng>,
}

fn now_ms() -> Option<u64> {
    SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_millis() as u64)
}

fn append(file: &mut Option<File>, entry: &LogEntry) -> std::io::Result<()> {
    if let Some(f) = file {
        let mut line = entry.to_line();
        line.push('\n');
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
    }
    Ok(())
}

impl SessionStore {
    /// A store that keeps nothing on disk.
    pub fn in_memory(seed: Option<u64>) -> Self {
        SessionStore {
            dir: None,
            sessions: RwLock::new(BTreeMap::new()),
            rng: Mutex::new(seed.map_or_else(ChaCha8Rng::from_os_rng, ChaCha8Rng::seed_from_u64)),
        }
    }

    /// Opens `dir`, creating it if needed, and reloads every `*.jsonl` log in it.
    /// Logs that fail to verify are skipped with a warning.
    pub fn open(dir: impl Into<PathBuf>, seed: Option<u64>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut sessions = BTreeMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "jsonl") {
                continue;
            }
            match load(&path) {
                Ok((record, file)) => {
                    sessions.insert(
                        record.session_id.clone(),
                        Arc::new(Mutex::new(Slot { record, file: Some(file) })),
                    );
                }
                Err(e) => tracing::warn!(path = %path.display(), "skipping session log: {e}"),
            }
        }
        let mut store = SessionStore::in_memory(seed);
        store.dir = Some(dir);
        store.sessions = RwLock::new(sessions);
        Ok(store)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>, StoreError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.into()))
    }

    /// Creates a session. Without a mapping, one is drawn at random.
    pub fn create(
        &self,
        user_id: &str,
        k: usize,
        mapping: Option<CommandActionMapping>,
        config: SessionConfig,
    ) -> Result<SessionSnapshot, StoreError> {
        let mapping = match mapping {
            Some(m) => m,
            None => {
                let mut rng = self.rng.lock().unwrap();
                CommandActionMapping::random(k, &mut *rng).map_err(|_| SessionError::InvalidK)?
            }
        };
        let id = uuid::Uuid::new_v4().to_string();
        let entry = SessionRecord::prepare_create(&id, user_id, k, mapping, config, now_ms())?;
        let mut file = match &self.dir {
            Some(dir) => Some(
                OpenOptions::new().create_new(true).append(true).open(dir.join(format!("{id}.jsonl")))?,
            ),
            None => None,
        };
        append(&mut file, &entry)?;
        let record = SessionRecord::from_created(entry)?;
        let snapshot = record.snapshot();
        self.sessions.write().unwrap().insert(id, Arc::new(Mutex::new(Slot { record, file })));
        Ok(snapshot)
    }

    /// Validates, persists, then applies. Nothing changes if any step fails.
    fn mutate<F>(&self, id: &str, prepare: F) -> Result<SessionSnapshot, StoreError>
    where
        F: FnOnce(&SessionRecord, Option<u64>) -> Result<LogEntry, SessionError>,
    {
        let slot = self.slot(id)?;
        let mut slot = slot.lock().unwrap();
        let entry = prepare(&slot.record, now_ms())?;
        append(&mut slot.file, &entry)?;
        slot.record.apply(entry)?;
        Ok(slot.record.snapshot())
    }

    pub fn issue_command(&self, id: &str, command: u32) -> Result<SessionSnapshot, StoreError> {
        self.mutate(id, |r, ts| {
            let mut rng = self.rng.lock().unwrap();
            r.prepare_command(command, &mut *rng, ts)
        })
    }

    pub fn submit_feedback(
        &self,
        id: &str,
        frames: FrameSequence,
        label: Label,
    ) -> Result<SessionSnapshot, StoreError> {
        self.mutate(id, |r, ts| r.prepare_feedback(frames, label, ts))
    }

    pub fn set_status(&self, id: &str, status: SessionStatus) -> Result<SessionSnapshot, StoreError> {
        self.mutate(id, |r, ts| r.prepare_status(status, ts))
    }

    pub fn with_record<T>(&self, id: &str, f: impl FnOnce(&SessionRecord) -> T) -> Result<T, StoreError> {
        let slot = self.slot(id)?;
        let slot = slot.lock().unwrap();
        Ok(f(&slot.record))
    }

    pub fn snapshot(&self, id: &str) -> Result<SessionSnapshot, StoreError> {
        self.with_record(id, SessionRecord::snapshot)
    }

    pub fn export(&self, id: &str) -> Result<String, StoreError> {
        self.with_record(id, SessionRecord::export)
    }

    pub fn list(&self) -> Vec<SessionSummary> {
        let slots: Vec<_> = self.sessions.read().unwrap().values().cloned().collect();
        slots.iter().map(|s| s.lock().unwrap().record.summary()).collect()
    }
}

fn load(path: &Path) -> Result<(SessionRecord, File), Box<dyn std::error::Error>> {
    let entries = read_recoverable(BufReader::new(File::open(path)?))?;
    let record = SessionRecord::replay(entries)?;
    // Rewrite so a dropped torn tail does not linger in the file.
    let canonical = record.export();
    if std::fs::read_to_string(path)? != canonical {
        std::fs::write(path, &canonical)?;
    }
    let file = OpenOptions::new().append(true).open(path)?;
    Ok((record, file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use emobandit_core::{Emotion, EmotionVector};

    fn happy() -> FrameSequence {
        FrameSequence::new(vec![EmotionVector::one_hot(Emotion::Happy); 13], 25.0, 12).unwrap()
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path(), Some(1)).unwrap();
        let s = store.create("alice", 3, None, SessionConfig::default()).unwrap();
        store.issue_command(&s.session_id, 1).unwrap();
        store.submit_feedback(&s.session_id, happy(), Label::Positive).unwrap();
        store.issue_command(&s.session_id, 2).unwrap();
        let before = store.snapshot(&s.session_id).unwrap();
        drop(store);

        let reopened = SessionStore::open(dir.path(), None).unwrap();
        assert_eq!(reopened.snapshot(&s.session_id).unwrap(), before);
        let after = reopened.submit_feedback(&s.session_id, happy(), Label::Positive).unwrap();
        assert_eq!(after.trace.len(), 2);
    }

    #[test]
    fn torn_tail_recovers() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path(), Some(2)).unwrap();
        let s = store.create("bob", 2, None, SessionConfig::default()).unwrap();
        store.issue_command(&s.session_id, 1).unwrap();
        let path = dir.path().join(format!("{}.jsonl", s.session_id));
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"schema_version\":1,\"seq\":2,\"ty").unwrap();
        drop((f, store));
        let reopened = SessionStore::open(dir.path(), None).unwrap();
        let snap = reopened.snapshot(&s.session_id).unwrap();
        assert!(snap.pending.is_some());
        assert!(std::fs::read_to_string(&path).unwrap().ends_with('\n'));
    }

    #[test]
    fn failed_mutation_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path(), Some(3)).unwrap();
        let s = store.create("c", 2, None, SessionConfig::default()).unwrap();
        let path = dir.path().join(format!("{}.jsonl", s.session_id));
        let before = std::fs::read_to_string(&path).unwrap();
        assert!(store.submit_feedback(&s.session_id, happy(), Label::Positive).is_err());
        assert!(store.issue_command(&s.session_id, 7).is_err());
        assert_eq!(std::fs::read_to_string(&path).unwrap(), before);
        assert!(matches!(store.snapshot("nope"), Err(StoreError::NotFound(_))));
    }
}
