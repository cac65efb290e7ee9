//! File-backed storage under a single root directory:
//!
//! ```text
//! <root>/documents/<doc_type>/<doc_id>.json   versioned documents
//! <root>/sessions/<session_id>.log            event line records
//! <root>/sessions/<session_id>.meta.json      segment header
//! <root>/transitions/<patient_id>.jsonl       level history
//! ```
//!
//! Event appends are flushed to disk before they return. Documents and
//! headers are replaced atomically by writing a temporary file and renaming
//! it over the old one.

pub mod codec;
mod documents;
mod events;
mod transitions;

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use artherapist_core::domain::ValidationError;
use artherapist_core::engine::SessionEvent;
use serde::de::DeserializeOwned;
use serde_json::Value;
use thiserror::Error;

pub use documents::{DocType, DocumentEnvelope};
pub use events::SegmentMeta;
pub use transitions::{TransitionRecord, TransitionSource};

use documents::DocumentStore;
use events::EventStore;
use transitions::TransitionLog;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage I/O failed: {0}")]
    Io(#[from] io::Error),
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("document failed validation ({} problems)", .0.len())]
    Validation(Vec<ValidationError>),
    #[error("{doc_type} `{doc_id}` not found")]
    NotFound { doc_type: DocType, doc_id: String },
    #[error("{doc_type} `{doc_id}` already exists")]
    Duplicate { doc_type: DocType, doc_id: String },
    #[error("{doc_type} `{doc_id}` is at version {current}, write expected {expected}")]
    VersionConflict { doc_type: DocType, doc_id: String, current: u64, expected: u64 },
    #[error("`{0}` is not a valid identifier")]
    InvalidId(String),
    #[error("session `{0}` not found")]
    UnknownSession(String),
    #[error("session `{0}` already exists")]
    SessionExists(String),
    #[error("session `{0}` is sealed")]
    Sealed(String),
    #[error("session `{session_id}`: expected seq {expected}, got {found}")]
    SeqGap { session_id: String, expected: u64, found: u64 },
    #[error("event for session `{found}` appended to `{session_id}`")]
    ForeignEvent { session_id: String, found: String },
    #[error("event cannot be encoded: {0}")]
    Encode(String),
    #[error("session `{session_id}` log line {line}: {reason}")]
    Corrupt { session_id: String, line: usize, reason: String },
    #[error("session `{session_id}` header is corrupt: {reason}")]
    CorruptMeta { session_id: String, reason: String },
    #[error("document {path} is corrupt: {reason}")]
    CorruptDocument { path: String, reason: String },
    #[error("transitions of `{patient_id}` line {line}: {reason}")]
    CorruptTransitions { patient_id: String, line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StoreOptions {
    /// Write `pos=-` instead of the player position in event records.
    pub redact_positions: bool,
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    docs: DocumentStore,
    events: EventStore,
    transitions: TransitionLog,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Store {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_with(root, StoreOptions::default())
    }

    pub fn open_with(root: impl AsRef<Path>, options: StoreOptions) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        for sub in ["documents", "sessions", "transitions"] {
            events::ensure_dir(&root.join(sub))?;
        }
        Ok(Self {
            docs: DocumentStore::new(root.join("documents")),
            events: EventStore::new(root.join("sessions"), options.redact_positions),
            transitions: TransitionLog::new(root.join("transitions")),
            locks: Mutex::new(HashMap::new()),
            root,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// A process-wide mutex for `key`, for callers that must serialize a
    /// read-modify-write spanning several store calls.
    pub fn lock_for(&self, key: &str) -> Arc<Mutex<()>> {
        self.locks.lock().expect("lock registry").entry(key.to_string()).or_default().clone()
    }

    /// Validates and writes a document. `expected_version` is the version the
    /// caller last saw, 0 to create.
    pub fn put_document(
        &self,
        doc_type: DocType,
        doc_id: &str,
        body: &Value,
        expected_version: u64,
    ) -> Result<DocumentEnvelope, StoreError> {
        self.docs.put(doc_type, doc_id, body, expected_version)
    }

    pub fn get_document(&self, doc_type: DocType, doc_id: &str) -> Result<DocumentEnvelope, StoreError> {
        self.docs
            .get(doc_type, doc_id)?
            .ok_or_else(|| StoreError::NotFound { doc_type, doc_id: doc_id.into() })
    }

    /// A document decoded into its domain type, with its version.
    pub fn get_typed<T: DeserializeOwned>(&self, doc_type: DocType, doc_id: &str) -> Result<(T, u64), StoreError> {
        let env = self.get_document(doc_type, doc_id)?;
        let value = serde_json::from_value(env.body).map_err(|e| StoreError::CorruptDocument {
            path: format!("{doc_type}/{doc_id}"),
            reason: e.to_string(),
        })?;
        Ok((value, env.version))
    }

    pub fn list_documents(&self, doc_type: DocType) -> Result<Vec<String>, StoreError> {
        self.docs.list(doc_type)
    }

    /// Next per-patient session ordinal; never handed out twice.
    pub fn reserve_ordinal(&self, patient_id: &str) -> Result<u32, StoreError> {
        self.events.reserve_ordinal(patient_id)
    }

    pub fn create_session(&self, meta: SegmentMeta) -> Result<(), StoreError> {
        self.events.create(meta)
    }

    pub fn session_exists(&self, session_id: &str) -> bool {
        self.events.exists(session_id)
    }

    pub fn session_meta(&self, session_id: &str) -> Result<SegmentMeta, StoreError> {
        self.events.meta(session_id)
    }

    /// Appends one event; durable when this returns. Returns its seq.
    pub fn append_event(&self, session_id: &str, event: &SessionEvent) -> Result<u64, StoreError> {
        self.events.append(session_id, std::slice::from_ref(event))
    }

    /// Appends a batch with one flush. Nothing is written unless every event
    /// is contiguous, belongs to the session and can be encoded.
    pub fn append_events(&self, session_id: &str, events: &[SessionEvent]) -> Result<u64, StoreError> {
        self.events.append(session_id, events)
    }

    pub fn next_seq(&self, session_id: &str) -> Result<u64, StoreError> {
        self.events.next_seq(session_id)
    }

    pub fn load_session_events(&self, session_id: &str) -> Result<Vec<SessionEvent>, StoreError> {
        self.events.load(session_id)
    }

    /// All segment headers, by session id.
    pub fn list_sessions(&self) -> Result<Vec<SegmentMeta>, StoreError> {
        self.events.list()
    }

    /// Headers of one patient's sessions, by ordinal.
    pub fn patient_sessions(&self, patient_id: &str) -> Result<Vec<SegmentMeta>, StoreError> {
        let mut metas: Vec<_> = self.list_sessions()?.into_iter().filter(|m| m.patient_id == patient_id).collect();
        metas.sort_by_key(|m| m.ordinal);
        Ok(metas)
    }

    pub fn append_transition(&self, record: &TransitionRecord) -> Result<(), StoreError> {
        self.transitions.append(record)
    }

    pub fn transitions(&self, patient_id: &str) -> Result<Vec<TransitionRecord>, StoreError> {
        self.transitions.load(patient_id)
    }
}

/// Replaces `path` with `bytes` so readers see either the old or the new
/// content, never a mix.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let dir = path.parent().expect("store paths have a parent");
    let name = path.file_name().and_then(|n| n.to_str()).expect("store file names are UTF-8");
    let tmp = dir.join(format!(".{name}.{}.{}.tmp", std::process::id(), COUNTER.fetch_add(1, Ordering::Relaxed)));
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path)?;
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}
