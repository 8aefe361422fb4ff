//! Durable session storage.
//!
//! Each session is one JSON document holding the schema version, the full
//! event log and a snapshot of the state. Loading replays the log and
//! rejects the document when the result disagrees with the snapshot.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::engine::{EngineError, Phase, Session, SessionEvent, SessionId};

/// Version written by this build. Version 1 documents carried only the log.
pub const SCHEMA_VERSION: u32 = 2;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("session {0} not found")]
    NotFound(SessionId),
    #[error("stored session is corrupt: {0}")]
    CorruptLog(String),
    #[error("schema version {0} is not supported")]
    SchemaVersionUnsupported(u32),
    #[error("refusing to save an invalid session: {0}")]
    InvalidSession(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::StorageFailure(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: SessionId,
    pub question: String,
    pub phase: Phase,
    pub updated_at: DateTime<Utc>,
}

impl From<&Session> for SessionSummary {
    fn from(s: &Session) -> Self {
        Self {
            session_id: s.session_id.clone(),
            question: s.question.clone(),
            phase: s.phase,
            updated_at: s.updated_at,
        }
    }
}

pub trait SessionStore: Send + Sync {
    fn save(&self, session: &Session) -> Result<(), StoreError>;
    fn load(&self, id: &SessionId) -> Result<Session, StoreError>;
    /// Summaries sorted by session id.
    fn list(&self) -> Result<Vec<SessionSummary>, StoreError>;
    fn delete(&self, id: &SessionId) -> Result<(), StoreError>;
}

#[derive(Debug, Serialize, Deserialize)]
struct Document {
    schema_version: u32,
    session_id: SessionId,
    event_log: Vec<SessionEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    snapshot: Option<Value>,
}

fn snapshot_of(session: &Session) -> Value {
    let mut value = serde_json::to_value(session).expect("session serializes");
    if let Value::Object(map) = &mut value {
        map.remove("event_log");
    }
    value
}

/// Serialized form of a session as written by [`FsStore`].
pub fn encode(session: &Session) -> Result<Vec<u8>, StoreError> {
    session
        .check_invariants()
        .map_err(StoreError::InvalidSession)?;
    let doc = Document {
        schema_version: SCHEMA_VERSION,
        session_id: session.session_id.clone(),
        event_log: session.event_log.clone(),
        snapshot: Some(snapshot_of(session)),
    };
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("document serializes");
    bytes.push(b'\n');
    Ok(bytes)
}

/// Parses a stored document, replaying its log and checking the snapshot.
pub fn decode(bytes: &[u8]) -> Result<Session, StoreError> {
    let value: Value = serde_json::from_slice(bytes)
        .map_err(|e| StoreError::CorruptLog(format!("unreadable document: {e}")))?;
    let version = value
        .get("schema_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| StoreError::CorruptLog("missing schema_version".into()))?;
    if version == 0 || version > SCHEMA_VERSION as u64 {
        return Err(StoreError::SchemaVersionUnsupported(
            version.min(u32::MAX as u64) as u32,
        ));
    }
    let doc: Document = serde_json::from_value(value)
        .map_err(|e| StoreError::CorruptLog(format!("malformed document: {e}")))?;
    let session = Session::replay(&doc.event_log).map_err(|e| match e {
        EngineError::CorruptLog(msg) => StoreError::CorruptLog(msg),
        other => StoreError::CorruptLog(other.to_string()),
    })?;
    if session.session_id != doc.session_id {
        return Err(StoreError::CorruptLog(
            "session id disagrees with log".into(),
        ));
    }
    match (doc.schema_version, doc.snapshot) {
        (1, _) => {}
        (_, Some(snapshot)) if snapshot == snapshot_of(&session) => {}
        (_, Some(_)) => {
            return Err(StoreError::CorruptLog(
                "snapshot disagrees with the replayed log".into(),
            ))
        }
        (_, None) => return Err(StoreError::CorruptLog("missing snapshot".into())),
    }
    Ok(session)
}

/// One JSON file per session in a directory.
pub struct FsStore {
    dir: PathBuf,
    locks: Mutex<HashMap<SessionId, Arc<Mutex<()>>>>,
    temp_counter: AtomicU64,
    crash_before_rename: AtomicBool,
}

impl FsStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            locks: Mutex::new(HashMap::new()),
            temp_counter: AtomicU64::new(0),
            crash_before_rename: AtomicBool::new(false),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, id: &SessionId) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Makes the next save stop after writing its temp file, as if the
    /// process died before the rename.
    #[doc(hidden)]
    pub fn inject_crash_before_rename(&self) {
        self.crash_before_rename.store(true, Ordering::SeqCst);
    }

    fn lock_for(&self, id: &SessionId) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table")
            .entry(id.clone())
            .or_default()
            .clone()
    }

    fn write_atomic(&self, target: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let name = target
            .file_name()
            .and_then(|n| n.to_str())
            .expect("store file names are ascii");
        let temp = self.dir.join(format!(
            ".{name}.{}-{}.tmp",
            std::process::id(),
            self.temp_counter.fetch_add(1, Ordering::Relaxed)
        ));
        let mut file = fs::File::create(&temp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        drop(file);
        if self.crash_before_rename.swap(false, Ordering::SeqCst) {
            return Err(StoreError::StorageFailure(
                "simulated crash before rename".into(),
            ));
        }
        if let Err(e) = fs::rename(&temp, target) {
            let _ = fs::remove_file(&temp);
            return Err(e.into());
        }
        if let Ok(dir) = fs::File::open(&self.dir) {
            let _ = dir.sync_all();
        }
        Ok(())
    }
}

impl SessionStore for FsStore {
    fn save(&self, session: &Session) -> Result<(), StoreError> {
        let bytes = encode(session)?;
        let lock = self.lock_for(&session.session_id);
        let _guard = lock.lock().expect("session lock");
        self.write_atomic(&self.path_of(&session.session_id), &bytes)
    }

    fn load(&self, id: &SessionId) -> Result<Session, StoreError> {
        let lock = self.lock_for(id);
        let _guard = lock.lock().expect("session lock");
        let bytes = match fs::read(self.path_of(id)) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(id.clone()))
            }
            Err(e) => return Err(e.into()),
        };
        decode(&bytes)
    }

    fn list(&self) -> Result<Vec<SessionSummary>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            let Some(id) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".json"))
                .and_then(SessionId::parse)
            else {
                continue;
            };
            match self.load(&id) {
                Ok(session) => out.push(SessionSummary::from(&session)),
                Err(StoreError::NotFound(_)) => {}
                Err(e) => tracing::warn!(session = %id, error = %e, "skipping unreadable session"),
            }
        }
        out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        Ok(out)
    }

    fn delete(&self, id: &SessionId) -> Result<(), StoreError> {
        let lock = self.lock_for(id);
        let _guard = lock.lock().expect("session lock");
        match fs::remove_file(self.path_of(id)) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(StoreError::NotFound(id.clone()))
            }
            Err(e) => Err(e.into()),
        }
    }
}
