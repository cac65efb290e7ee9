//! Per-patient level history, one JSON object per line in
//! `transitions/<patient>.jsonl`.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use artherapist_core::domain::is_valid_identifier;
use artherapist_core::engine::{LevelTransition, TransitionDecision};
use serde::{Deserialize, Serialize};

use crate::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionSource {
    Engine,
    DoctorOverride,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub patient_id: String,
    /// The scored session; `None` for overrides.
    pub session_id: Option<String>,
    pub source: TransitionSource,
    pub doctor_id: Option<String>,
    pub decision: TransitionDecision,
    pub from_level: u32,
    pub to_level: u32,
    pub pi: Option<f64>,
    pub threshold: Option<f64>,
}

impl TransitionRecord {
    pub fn from_engine(patient_id: &str, session_id: &str, t: &LevelTransition) -> Self {
        Self {
            patient_id: patient_id.into(),
            session_id: Some(session_id.into()),
            source: TransitionSource::Engine,
            doctor_id: None,
            decision: t.decision,
            from_level: t.from_level,
            to_level: t.to_level,
            pi: t.reason.pi,
            threshold: t.reason.threshold,
        }
    }

    pub fn from_override(patient_id: &str, doctor_id: &str, from_level: u32, to_level: u32) -> Self {
        let decision = match to_level.cmp(&from_level) {
            std::cmp::Ordering::Greater => TransitionDecision::Advance,
            std::cmp::Ordering::Equal => TransitionDecision::Stay,
            std::cmp::Ordering::Less => TransitionDecision::Regress,
        };
        Self {
            patient_id: patient_id.into(),
            session_id: None,
            source: TransitionSource::DoctorOverride,
            doctor_id: Some(doctor_id.into()),
            decision,
            from_level,
            to_level,
            pi: None,
            threshold: None,
        }
    }
}

#[derive(Debug)]
pub(crate) struct TransitionLog {
    dir: PathBuf,
    write: Mutex<()>,
}

impl TransitionLog {
    pub(crate) fn new(dir: PathBuf) -> Self {
        Self { dir, write: Mutex::new(()) }
    }

    fn path(&self, patient: &str) -> PathBuf {
        self.dir.join(format!("{patient}.jsonl"))
    }

    pub(crate) fn append(&self, r: &TransitionRecord) -> Result<(), StoreError> {
        if !is_valid_identifier(&r.patient_id) {
            return Err(StoreError::InvalidId(r.patient_id.clone()));
        }
        let mut line = serde_json::to_string(r)?;
        line.push('\n');
        let _guard = self.write.lock().expect("transition lock");
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(&r.patient_id))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    pub(crate) fn load(&self, patient: &str) -> Result<Vec<TransitionRecord>, StoreError> {
        if !is_valid_identifier(patient) {
            return Ok(Vec::new());
        }
        let text = match fs::read_to_string(self.path(patient)) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::new();
        for (i, line) in text.split_inclusive('\n').enumerate() {
            let corrupt = |reason: String| StoreError::CorruptTransitions { patient_id: patient.into(), line: i + 1, reason };
            let Some(line) = line.strip_suffix('\n') else {
                return Err(corrupt("truncated final line (no newline)".into()));
            };
            out.push(serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?);
        }
        Ok(out)
    }
}
