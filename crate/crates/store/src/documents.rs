//! Versioned documents, one JSON file per `(doc_type, doc_id)` at
//! `documents/<doc_type>/<doc_id>.json`.

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Mutex;

use artherapist_core::domain::{
    is_valid_identifier, validate_doctor, validate_game, validate_patient_profile, validate_program,
    validate_treatment, Catalog, DoctorProfile, GameDefinition, PatientProfile, TreatmentProgram,
    ValidationError,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{write_atomic, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocType {
    Patient,
    Doctor,
    Game,
    Program,
    Treatment,
}

impl DocType {
    pub const ALL: [DocType; 5] = [DocType::Patient, DocType::Doctor, DocType::Game, DocType::Program, DocType::Treatment];

    pub fn as_str(self) -> &'static str {
        match self {
            DocType::Patient => "patient",
            DocType::Doctor => "doctor",
            DocType::Game => "game",
            DocType::Program => "program",
            DocType::Treatment => "treatment",
        }
    }

    /// Body field that carries the document id.
    pub fn id_field(self) -> &'static str {
        match self {
            DocType::Program => "program_id",
            _ => "id",
        }
    }
}

impl fmt::Display for DocType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DocType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DocType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown document type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentEnvelope {
    pub doc_type: DocType,
    pub doc_id: String,
    /// Starts at 1 and grows by exactly 1 per update.
    pub version: u64,
    pub body: Value,
}

#[derive(Debug)]
pub(crate) struct DocumentStore {
    dir: PathBuf,
    /// Serializes the read-check-write of every put.
    write: Mutex<()>,
}

impl DocumentStore {
    pub(crate) fn new(dir: PathBuf) -> Self {
        Self { dir, write: Mutex::new(()) }
    }

    fn path(&self, t: DocType, id: &str) -> PathBuf {
        self.dir.join(t.as_str()).join(format!("{id}.json"))
    }

    pub(crate) fn get(&self, t: DocType, id: &str) -> Result<Option<DocumentEnvelope>, StoreError> {
        if !is_valid_identifier(id) {
            return Ok(None);
        }
        let path = self.path(t, id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| StoreError::CorruptDocument { path: path.display().to_string(), reason: e.to_string() })
    }

    pub(crate) fn typed<T: DeserializeOwned>(&self, t: DocType, id: &str) -> Option<T> {
        let env = self.get(t, id).ok()??;
        serde_json::from_value(env.body).ok()
    }

    pub(crate) fn list(&self, t: DocType) -> Result<Vec<String>, StoreError> {
        let dir = self.dir.join(t.as_str());
        let mut ids = Vec::new();
        match fs::read_dir(&dir) {
            Ok(entries) => {
                for entry in entries {
                    let name = entry?.file_name();
                    if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".json")) {
                        ids.push(id.to_string());
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        ids.sort();
        Ok(ids)
    }

    /// Validates `body` and stores it as the next version.
    /// `expected_version` 0 means the document must not exist yet.
    pub(crate) fn put(
        &self,
        t: DocType,
        id: &str,
        body: &Value,
        expected_version: u64,
    ) -> Result<DocumentEnvelope, StoreError> {
        let _guard = self.write.lock().expect("document lock");
        let normalized = self.validate(t, id, body).map_err(StoreError::Validation)?;
        let current = self.get(t, id)?.map_or(0, |e| e.version);
        if current != expected_version {
            return Err(match (current, expected_version) {
                (0, _) => StoreError::NotFound { doc_type: t, doc_id: id.into() },
                (_, 0) => StoreError::Duplicate { doc_type: t, doc_id: id.into() },
                _ => StoreError::VersionConflict { doc_type: t, doc_id: id.into(), current, expected: expected_version },
            });
        }
        let env = DocumentEnvelope { doc_type: t, doc_id: id.into(), version: current + 1, body: normalized };
        fs::create_dir_all(self.dir.join(t.as_str()))?;
        write_atomic(&self.path(t, id), &serde_json::to_vec_pretty(&env)?)?;
        Ok(env)
    }

    /// Full validation: schema, id agreement, and references resolved
    /// against the stored documents. Returns the canonical body.
    fn validate(&self, t: DocType, id: &str, body: &Value) -> Result<Value, Vec<ValidationError>> {
        let field = t.id_field();
        let mut extra = Vec::new();
        // The body validator checks the id itself; here only agreement with
        // the address is checked.
        if body.get(field).and_then(Value::as_str).is_some_and(|b| b != id) {
            extra.push(ValidationError::new(field, "id.mismatch", format!("body {field} differs from the document id `{id}`")));
        }
        let catalog = StoreCatalog(self);
        let normalized = match t {
            DocType::Patient => validate_patient_profile(body).map(|v| to_value(&v)),
            DocType::Doctor => validate_doctor(body).map(|v| to_value(&v)),
            DocType::Game => validate_game(body).map(|v| to_value(&v)),
            DocType::Program => validate_program(body, &catalog).map(|v| to_value(&v)),
            DocType::Treatment => validate_treatment(body, &catalog).map(|v| to_value(&v)),
        };
        match normalized {
            Ok(v) if extra.is_empty() => Ok(v),
            Ok(_) => Err(extra),
            Err(mut errs) => {
                errs.extend(extra);
                Err(errs)
            }
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("validated documents serialize")
}

struct StoreCatalog<'a>(&'a DocumentStore);

impl Catalog for StoreCatalog<'_> {
    fn patient(&self, id: &str) -> Option<PatientProfile> {
        self.0.typed(DocType::Patient, id)
    }
    fn doctor(&self, id: &str) -> Option<DoctorProfile> {
        self.0.typed(DocType::Doctor, id)
    }
    fn game(&self, id: &str) -> Option<GameDefinition> {
        self.0.typed(DocType::Game, id)
    }
    fn program(&self, id: &str) -> Option<TreatmentProgram> {
        self.0.typed(DocType::Program, id)
    }
}
