//! The treatment domain: patients, doctors, games with their levels and
//! objects, treatment programs and the treatment that ties them together.
//!
//! Every profile is parsed from an untyped JSON document and validated as a
//! whole. Validation never stops at the first problem: the caller always
//! receives the complete list of violated invariants, each tagged with the
//! field path and a stable rule code.

mod check;
mod game;
mod profile;
mod program;

use serde::{Deserialize, Serialize};

pub use game::{
    validate_game, validate_level, GameDefinition, GameType, LevelDefinition, ObjectSpec, Region,
    Shape, DEFAULT_APPEARANCE_INTERVAL,
};
pub use profile::{
    validate_doctor, validate_patient_profile, DoctorProfile, Experience, Involvement,
    PatientProfile,
};
pub use program::{
    derive_session_config, validate_program, validate_treatment, Catalog, MemoryCatalog,
    ProgressionPolicy, SessionIdentity, SessionSpec, Treatment, TreatmentProgram,
};

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationError {
    /// Dotted path of the offending field, e.g. `levels[1].try_time`.
    pub field: String,
    /// Stable machine-readable rule code, e.g. `level.min`.
    pub rule: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, rule: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule: rule.to_string(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {} ({})", self.field, self.message, self.rule)
    }
}

pub type Validated<T> = Result<T, Vec<ValidationError>>;

/// Maximum identifier length in bytes.
pub const MAX_ID_LEN: usize = 128;

/// Opaque identifiers are restricted to `[A-Za-z0-9._-]`, start with an
/// alphanumeric character and are at most [`MAX_ID_LEN`] bytes long. They
/// are used verbatim as file names and inside event-log records.
pub fn is_valid_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= MAX_ID_LEN
        && s.as_bytes()[0].is_ascii_alphanumeric()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
}

/// Parses raw bytes as JSON and runs `validate` on the result. Malformed
/// input is reported as a single `document.parse` violation.
pub fn validate_bytes<T>(
    bytes: &[u8],
    validate: impl FnOnce(&serde_json::Value) -> Validated<T>,
) -> Validated<T> {
    match serde_json::from_slice::<serde_json::Value>(bytes) {
        Ok(value) => validate(&value),
        Err(e) => Err(vec![ValidationError::new(
            "",
            "document.parse",
            format!("not a JSON document: {e}"),
        )]),
    }
}
