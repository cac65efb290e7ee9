use std::sync::{Arc, Barrier};
use std::thread;

use artherapist_store::{DocType, Store, StoreError};
use serde_json::{json, Value};

fn game(id: &str, levels: u32) -> Value {
    let levels: Vec<Value> = (1..=levels)
        .map(|n| {
            json!({
                "level_number": n,
                "objects": (0..4).map(|i| json!({
                    "object_id": format!("o{i}"),
                    "shape": "cube",
                    "base_size": 0.2,
                    "placement_region": {"min": [0.0, 0.0, 0.0], "max": [1.0, 1.0, 1.0]}
                })).collect::<Vec<_>>(),
                "max_time": 60.0,
                "try_time": 5.0,
                "tries_per_session": 10,
                "distractors_per_try": 2
            })
        })
        .collect();
    json!({"id": id, "type": "drag_and_drop", "levels": levels})
}

fn program(id: &str, game: &str) -> Value {
    json!({
        "program_id": id,
        "session_specs": [{"game": game, "level": 1}],
        "duration_cap": 20.0,
        "progression_policy": {"advance_threshold": 0.7, "regress_threshold": 0.3, "min_sessions_at_level": 2}
    })
}

fn store() -> (tempfile::TempDir, Store) {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    (dir, store)
}

#[test]
fn put_then_get() {
    let (_d, s) = store();
    let body = json!({"id": "p1", "level": 1, "performance_index": null, "preferences": ["music"]});
    let env = s.put_document(DocType::Patient, "p1", &body, 0).unwrap();
    assert_eq!(env.version, 1);
    let got = s.get_document(DocType::Patient, "p1").unwrap();
    assert_eq!(got, env);
    assert_eq!(got.body, body);
    assert_eq!(s.list_documents(DocType::Patient).unwrap(), ["p1"]);
    assert!(s.list_documents(DocType::Doctor).unwrap().is_empty());
}

#[test]
fn versions_and_conflicts() {
    let (_d, s) = store();
    let v1 = json!({"id": "p1", "level": 1});
    s.put_document(DocType::Patient, "p1", &v1, 0).unwrap();
    assert!(matches!(s.put_document(DocType::Patient, "p1", &v1, 0), Err(StoreError::Duplicate { .. })));
    let v2 = json!({"id": "p1", "level": 2});
    assert_eq!(s.put_document(DocType::Patient, "p1", &v2, 1).unwrap().version, 2);
    assert!(matches!(
        s.put_document(DocType::Patient, "p1", &v2, 1),
        Err(StoreError::VersionConflict { current: 2, expected: 1, .. })
    ));
    let p9 = json!({"id": "p9", "level": 1});
    assert!(matches!(s.put_document(DocType::Patient, "p9", &p9, 3), Err(StoreError::NotFound { .. })));
}

#[test]
fn concurrent_writers_from_the_same_version() {
    let (_d, s) = store();
    s.put_document(DocType::Patient, "p1", &json!({"id": "p1", "level": 1}), 0).unwrap();
    let s = Arc::new(s);
    let barrier = Arc::new(Barrier::new(8));
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let (s, barrier) = (s.clone(), barrier.clone());
            thread::spawn(move || {
                barrier.wait();
                s.put_document(DocType::Patient, "p1", &json!({"id": "p1", "level": 1 + i % 3}), 1)
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
    assert!(results
        .iter()
        .filter_map(|r| r.as_ref().err())
        .all(|e| matches!(e, StoreError::VersionConflict { current: 2, .. })));
    assert_eq!(s.get_document(DocType::Patient, "p1").unwrap().version, 2);
}

#[test]
fn invalid_body_leaves_store_unchanged() {
    let (_d, s) = store();
    let good = s.put_document(DocType::Patient, "p1", &json!({"id": "p1", "level": 1}), 0).unwrap().body;
    let Err(StoreError::Validation(errs)) =
        s.put_document(DocType::Patient, "p1", &json!({"id": "p1", "level": 0, "performance_index": 1.2}), 1)
    else {
        panic!()
    };
    let rules: Vec<_> = errs.iter().map(|e| e.rule.as_str()).collect();
    assert_eq!(rules, ["level.min", "performance_index.range"]);
    let got = s.get_document(DocType::Patient, "p1").unwrap();
    assert_eq!((got.version, got.body), (1, good));
}

#[test]
fn id_must_match_the_body() {
    let (_d, s) = store();
    let Err(StoreError::Validation(errs)) = s.put_document(DocType::Patient, "p2", &json!({"id": "p1", "level": 1}), 0)
    else {
        panic!()
    };
    assert_eq!(errs[0].rule, "id.mismatch");
    assert!(s.put_document(DocType::Patient, "../x", &json!({"id": "../x", "level": 1}), 0).is_err());
    assert!(matches!(s.get_document(DocType::Patient, "../x"), Err(StoreError::NotFound { .. })));
}

#[test]
fn references_resolve_against_stored_documents() {
    let (_d, s) = store();
    let Err(StoreError::Validation(errs)) = s.put_document(DocType::Program, "prog", &program("prog", "g1"), 0) else {
        panic!()
    };
    assert_eq!(errs[0].rule, "reference.game");
    s.put_document(DocType::Game, "g1", &game("g1", 3), 0).unwrap();
    s.put_document(DocType::Program, "prog", &program("prog", "g1"), 0).unwrap();
    s.put_document(DocType::Patient, "p1", &json!({"id": "p1", "level": 1}), 0).unwrap();
    s.put_document(DocType::Doctor, "d1", &json!({"id": "d1", "experience": "senior", "involvement": "guide"}), 0)
        .unwrap();
    let treatment = json!({"id": "t1", "patient": "p1", "doctor": "d1", "game": "g1", "programs": ["prog"]});
    s.put_document(DocType::Treatment, "t1", &treatment, 0).unwrap();
    for t in DocType::ALL {
        assert_eq!(s.list_documents(t).unwrap().len(), 1, "{t}");
    }
}

#[test]
fn stored_bodies_are_canonical() {
    let (_d, s) = store();
    let env = s.put_document(DocType::Game, "g1", &game("g1", 1), 0).unwrap();
    // Defaults are filled in, so the stored body validates again unchanged.
    assert_eq!(env.body["levels"][0]["appearance_interval"], json!(0.5));
    let again = s.put_document(DocType::Game, "g1", &env.body, 1).unwrap();
    assert_eq!(again.body, env.body);
}
