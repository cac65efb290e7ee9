//! Append-only session segments: `sessions/<id>.log` holds the line records,
//! `sessions/<id>.meta.json` the segment header.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use artherapist_core::engine::{EventKind, SessionEvent};
use serde::{Deserialize, Serialize};

use crate::codec::{decode_line, encode_event};
use crate::{write_atomic, StoreError};

/// Header of one session segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMeta {
    pub session_id: String,
    pub patient_id: String,
    pub program_id: String,
    pub level: u32,
    pub planned_tries: u32,
    pub try_time: f64,
    /// Position of the session among the patient's sessions, from 0.
    pub ordinal: u32,
    /// Wall-clock start as supplied by the caller (RFC 3339 suggested).
    pub wall_clock_start: Option<String>,
    pub sealed: bool,
    /// Time of the terminal event, set when the segment is sealed.
    pub gt: Option<f64>,
}

impl SegmentMeta {
    /// Header for a segment whose first event is `started`.
    pub fn from_start(started: &SessionEvent, ordinal: u32, wall_clock_start: Option<String>) -> Option<Self> {
        let EventKind::SessionStarted { patient_id, program_id, level, planned_tries, try_time, .. } = &started.kind
        else {
            return None;
        };
        Some(Self {
            session_id: started.session_id.clone(),
            patient_id: patient_id.clone(),
            program_id: program_id.clone(),
            level: *level,
            planned_tries: *planned_tries,
            try_time: *try_time,
            ordinal,
            wall_clock_start,
            sealed: false,
            gt: None,
        })
    }
}

#[derive(Debug)]
struct Segment {
    next_seq: u64,
    sealed: bool,
    meta: SegmentMeta,
    file: Option<File>,
}

#[derive(Debug)]
pub(crate) struct EventStore {
    dir: PathBuf,
    redact_positions: bool,
    open: Mutex<HashMap<String, Arc<Mutex<Segment>>>>,
    /// Next ordinal per patient, loaded from the headers on first use. The
    /// lock also serializes segment creation.
    ordinals: Mutex<Option<HashMap<String, u32>>>,
}

impl EventStore {
    pub(crate) fn new(dir: PathBuf, redact_positions: bool) -> Self {
        Self { dir, redact_positions, open: Mutex::new(HashMap::new()), ordinals: Mutex::new(None) }
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.log"))
    }

    fn meta_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.meta.json"))
    }

    pub(crate) fn exists(&self, id: &str) -> bool {
        artherapist_core::domain::is_valid_identifier(id) && self.meta_path(id).exists()
    }

    /// Hands out the next per-patient ordinal. Ordinals are never reused,
    /// even when the reserving caller never creates its segment.
    pub(crate) fn reserve_ordinal(&self, patient_id: &str) -> Result<u32, StoreError> {
        let mut guard = self.ordinals.lock().expect("ordinal lock");
        let map = match guard.as_mut() {
            Some(map) => map,
            None => {
                let mut map = HashMap::new();
                for m in self.list()? {
                    let next = map.entry(m.patient_id).or_insert(0);
                    *next = (*next).max(m.ordinal + 1);
                }
                guard.insert(map)
            }
        };
        let next = map.entry(patient_id.to_string()).or_insert(0);
        let ordinal = *next;
        *next += 1;
        Ok(ordinal)
    }

    pub(crate) fn create(&self, meta: SegmentMeta) -> Result<(), StoreError> {
        let mut guard = self.ordinals.lock().expect("ordinal lock");
        if let Some(map) = guard.as_mut() {
            let next = map.entry(meta.patient_id.clone()).or_insert(0);
            *next = (*next).max(meta.ordinal + 1);
        }
        let id = meta.session_id.clone();
        if !artherapist_core::domain::is_valid_identifier(&id) {
            return Err(StoreError::InvalidId(id));
        }
        if self.meta_path(&id).exists() {
            return Err(StoreError::SessionExists(id));
        }
        File::create(self.log_path(&id))?.sync_all()?;
        write_atomic(&self.meta_path(&id), &serde_json::to_vec_pretty(&meta)?)?;
        Ok(())
    }

    pub(crate) fn meta(&self, id: &str) -> Result<SegmentMeta, StoreError> {
        if !self.exists(id) {
            return Err(StoreError::UnknownSession(id.to_string()));
        }
        let bytes = fs::read(self.meta_path(id))?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::CorruptMeta { session_id: id.into(), reason: e.to_string() })
    }

    pub(crate) fn list(&self) -> Result<Vec<SegmentMeta>, StoreError> {
        let mut metas = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".meta.json")) {
                metas.push(self.meta(id)?);
            }
        }
        metas.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        Ok(metas)
    }

    fn segment(&self, id: &str) -> Result<Arc<Mutex<Segment>>, StoreError> {
        let mut open = self.open.lock().expect("segment map lock");
        if let Some(seg) = open.get(id) {
            return Ok(seg.clone());
        }
        let seg = Arc::new(Mutex::new(self.recover(id)?));
        open.insert(id.to_string(), seg.clone());
        Ok(seg)
    }

    /// Rebuilds segment state from disk. A torn final line can only come
    /// from a write that was never acknowledged, so it is cut off here.
    fn recover(&self, id: &str) -> Result<Segment, StoreError> {
        let mut meta = self.meta(id)?;
        let path = self.log_path(id);
        let mut bytes = Vec::new();
        File::open(&path)?.read_to_end(&mut bytes)?;
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < bytes.len() {
            let f = OpenOptions::new().write(true).open(&path)?;
            f.set_len(complete as u64)?;
            f.sync_all()?;
            bytes.truncate(complete);
        }
        let events = parse_log(id, &bytes)?;
        let last = events.last();
        let sealed = last.is_some_and(|e| e.is_terminal());
        if sealed && !meta.sealed {
            meta.sealed = true;
            meta.gt = last.map(|e| e.at);
            write_atomic(&self.meta_path(id), &serde_json::to_vec_pretty(&meta)?)?;
        }
        Ok(Segment { next_seq: events.len() as u64, sealed, meta, file: None })
    }

    /// Appends a batch atomically with respect to validation: either every
    /// event is checked and written, or nothing is. Returns the last seq.
    pub(crate) fn append(&self, id: &str, events: &[SessionEvent]) -> Result<u64, StoreError> {
        let seg = self.segment(id)?;
        let mut seg = seg.lock().expect("segment lock");
        let mut text = String::new();
        let mut expected = seg.next_seq;
        let mut sealed = seg.sealed;
        for e in events {
            if sealed {
                return Err(StoreError::Sealed(id.to_string()));
            }
            if e.session_id != id {
                return Err(StoreError::ForeignEvent { session_id: id.into(), found: e.session_id.clone() });
            }
            if e.seq != expected {
                return Err(StoreError::SeqGap { session_id: id.into(), expected, found: e.seq });
            }
            text.push_str(&encode_event(e, self.redact_positions).map_err(|c| StoreError::Encode(c.0))?);
            text.push('\n');
            expected += 1;
            sealed = e.is_terminal();
        }
        if events.is_empty() {
            return Ok(seg.next_seq.saturating_sub(1));
        }
        if seg.file.is_none() {
            seg.file = Some(OpenOptions::new().append(true).open(self.log_path(id))?);
        }
        let file = seg.file.as_mut().expect("opened above");
        file.write_all(text.as_bytes())?;
        file.sync_data()?;
        seg.next_seq = expected;
        if sealed {
            seg.sealed = true;
            seg.file = None;
            seg.meta.sealed = true;
            seg.meta.gt = events.last().map(|e| e.at);
            write_atomic(&self.meta_path(id), &serde_json::to_vec_pretty(&seg.meta)?)?;
        }
        Ok(expected - 1)
    }

    pub(crate) fn next_seq(&self, id: &str) -> Result<u64, StoreError> {
        Ok(self.segment(id)?.lock().expect("segment lock").next_seq)
    }

    pub(crate) fn load(&self, id: &str) -> Result<Vec<SessionEvent>, StoreError> {
        if !self.exists(id) {
            return Err(StoreError::UnknownSession(id.to_string()));
        }
        let bytes = fs::read(self.log_path(id))?;
        parse_log(id, &bytes)
    }
}

/// Strict parse: every line must be complete, well formed, and in seq order.
pub(crate) fn parse_log(id: &str, bytes: &[u8]) -> Result<Vec<SessionEvent>, StoreError> {
    let corrupt = |line: usize, reason: String| StoreError::Corrupt { session_id: id.into(), line, reason };
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        corrupt(line, "invalid UTF-8".into())
    })?;
    let mut events = Vec::new();
    let mut rest = text;
    let mut n = 0;
    while !rest.is_empty() {
        n += 1;
        let Some((line, tail)) = rest.split_once('\n') else {
            return Err(corrupt(n, "truncated final line (no newline)".into()));
        };
        rest = tail;
        let e = decode_line(line).map_err(|c| corrupt(n, c.0))?;
        if e.session_id != id {
            return Err(corrupt(n, format!("event belongs to session `{}`", e.session_id)));
        }
        if e.seq != events.len() as u64 {
            return Err(corrupt(n, format!("expected seq {}, found {}", events.len(), e.seq)));
        }
        events.push(e);
    }
    Ok(events)
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), StoreError> {
    fs::create_dir_all(dir)?;
    Ok(())
}
