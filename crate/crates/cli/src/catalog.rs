//! Built-in documents used by `simulate` and `sweep`: a three-level
//! selection game, a program over it, and one supervising doctor.

use artherapist_core::domain::{validate_game, validate_program, GameDefinition, MemoryCatalog, TreatmentProgram};
use artherapist_store::{DocType, Store, StoreError};
use serde_json::{json, Value};

pub const GAME_ID: &str = "cpt";
pub const PROGRAM_ID: &str = "cpt-default";
pub const DOCTOR_ID: &str = "sim-doctor";

/// (objects, try_time, tries, distractors, max_time) per level.
const LEVELS: [(usize, f64, u32, u32, f64); 3] = [(4, 5.0, 10, 2, 60.0), (6, 4.0, 12, 3, 60.0), (8, 3.0, 15, 5, 60.0)];

pub fn game() -> Value {
    let shapes = ["cube", "sphere", "cone"];
    let levels: Vec<Value> = LEVELS
        .iter()
        .enumerate()
        .map(|(i, &(objects, try_time, tries, distractors, max_time))| {
            let objects: Vec<Value> = (0..objects)
                .map(|k| {
                    json!({
                        "object_id": format!("obj-{k}"),
                        "shape": shapes[k % shapes.len()],
                        "base_size": 0.15,
                        "placement_region": {"min": [-1.0, 0.8, 1.0], "max": [1.0, 1.8, 2.5]}
                    })
                })
                .collect();
            json!({
                "level_number": i + 1,
                "objects": objects,
                "max_time": max_time,
                "try_time": try_time,
                "tries_per_session": tries,
                "distractors_per_try": distractors
            })
        })
        .collect();
    json!({"id": GAME_ID, "type": "drag_and_drop", "levels": levels})
}

pub fn program() -> Value {
    json!({
        "program_id": PROGRAM_ID,
        "session_specs": [{"game": GAME_ID, "level": 1}],
        "duration_cap": 20.0,
        "progression_policy": {"advance_threshold": 0.7, "regress_threshold": 0.3, "min_sessions_at_level": 2}
    })
}

fn doctor() -> Value {
    json!({"id": DOCTOR_ID, "experience": "senior", "involvement": "guide"})
}

/// Creates `doc` unless a document with that id already exists.
fn ensure(store: &Store, t: DocType, id: &str, doc: &Value) -> Result<(), StoreError> {
    match store.put_document(t, id, doc, 0) {
        Ok(_) | Err(StoreError::Duplicate { .. }) => Ok(()),
        Err(e) => Err(e),
    }
}

/// Stores the built-in game, program and doctor.
pub fn install(store: &Store) -> Result<(), StoreError> {
    ensure(store, DocType::Game, GAME_ID, &game())?;
    ensure(store, DocType::Program, PROGRAM_ID, &program())?;
    ensure(store, DocType::Doctor, DOCTOR_ID, &doctor())
}

/// Stores a level-1 patient and its treatment under the built-in program.
pub fn install_patient(store: &Store, patient_id: &str) -> Result<(), StoreError> {
    ensure(store, DocType::Patient, patient_id, &json!({"id": patient_id, "level": 1}))?;
    let treatment = format!("{patient_id}-treatment");
    ensure(
        store,
        DocType::Treatment,
        &treatment,
        &json!({"id": treatment, "patient": patient_id, "doctor": DOCTOR_ID, "game": GAME_ID, "programs": [PROGRAM_ID]}),
    )
}

pub fn typed_game() -> GameDefinition {
    validate_game(&game()).expect("built-in game is valid")
}

pub fn typed_program() -> TreatmentProgram {
    let mut catalog = MemoryCatalog::default();
    catalog.games.insert(GAME_ID.to_string(), typed_game());
    validate_program(&program(), &catalog).expect("built-in program is valid")
}
