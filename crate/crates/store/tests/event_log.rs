use std::fs::{self, OpenOptions};
use std::io::Write;

use artherapist_core::domain::{ObjectSpec, Region, Shape};
use artherapist_core::engine::{replay_log, EventKind, Placement, SessionConfig, SessionEvent};
use artherapist_core::simulator::{simulate_session, BehaviorParams};
use artherapist_store::codec::{decode_line, encode_event};
use artherapist_store::{SegmentMeta, Store, StoreError, StoreOptions};
use proptest::prelude::*;

fn config(id: &str, seed: u64) -> SessionConfig {
    SessionConfig {
        session_id: id.into(),
        patient_id: "p001".into(),
        program_id: "prog".into(),
        level_number: 1,
        planned_tries: 10,
        try_time: 5.0,
        max_time: 60.0,
        object_pool: (0..4)
            .map(|i| ObjectSpec {
                object_id: format!("o{i}"),
                shape: Shape::Sphere,
                base_size: 0.2,
                placement_region: Region { min: [-1.0, 0.0, 0.5], max: [1.0, 2.0, 3.0] },
            })
            .collect(),
        distractors_per_try: 2,
        appearance_interval: 0.5,
        seed,
    }
}

fn simulated(id: &str, seed: u64) -> Vec<SessionEvent> {
    let p = BehaviorParams { attention: 0.7, impulsivity: 0.2, dropout_hazard: 0.02, seed, ..Default::default() };
    simulate_session(&p, config(id, seed)).unwrap().into_events()
}

fn create(store: &Store, events: &[SessionEvent]) {
    let ordinal = store.reserve_ordinal("p001").unwrap();
    store.create_session(SegmentMeta::from_start(&events[0], ordinal, None).unwrap()).unwrap();
}

#[test]
fn append_then_load_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let events = simulated("p001-s0000", 1);
    create(&store, &events);
    for e in &events {
        assert_eq!(store.append_event("p001-s0000", e).unwrap(), e.seq);
    }
    assert_eq!(store.load_session_events("p001-s0000").unwrap(), events);
    let meta = store.session_meta("p001-s0000").unwrap();
    assert!(meta.sealed);
    assert_eq!(meta.gt, Some(events.last().unwrap().at));
}

#[test]
fn unknown_session() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    assert!(matches!(store.load_session_events("nope"), Err(StoreError::UnknownSession(_))));
    assert!(matches!(store.load_session_events("../etc/passwd"), Err(StoreError::UnknownSession(_))));
}

#[test]
fn gaps_and_sealed_segments_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let events = simulated("p001-s0000", 2);
    create(&store, &events);
    store.append_events("p001-s0000", &events[..4]).unwrap();
    let mut skip = events[5].clone();
    skip.seq = 5;
    assert!(matches!(
        store.append_event("p001-s0000", &skip),
        Err(StoreError::SeqGap { expected: 4, found: 5, .. })
    ));
    store.append_events("p001-s0000", &events[4..]).unwrap();
    let mut after = events.last().unwrap().clone();
    after.seq += 1;
    assert!(matches!(store.append_event("p001-s0000", &after), Err(StoreError::Sealed(_))));
    assert_eq!(store.load_session_events("p001-s0000").unwrap(), events);
}

#[test]
fn bad_batch_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let events = simulated("p001-s0000", 3);
    create(&store, &events);
    let mut batch = events[..3].to_vec();
    batch[2].seq = 7;
    assert!(store.append_events("p001-s0000", &batch).is_err());
    let mut batch = events[..3].to_vec();
    batch[1].session_id = "other".into();
    assert!(store.append_events("p001-s0000", &batch).is_err());
    assert!(store.load_session_events("p001-s0000").unwrap().is_empty());
    assert_eq!(store.next_seq("p001-s0000").unwrap(), 0);
}

#[test]
fn acknowledged_events_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let events = simulated("p001-s0000", 4);
    {
        let store = Store::open(dir.path()).unwrap();
        create(&store, &events);
        store.append_events("p001-s0000", &events[..5]).unwrap();
    }
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.load_session_events("p001-s0000").unwrap(), events[..5]);
    assert_eq!(store.next_seq("p001-s0000").unwrap(), 5);
    store.append_events("p001-s0000", &events[5..]).unwrap();
    assert_eq!(store.load_session_events("p001-s0000").unwrap(), events);
    assert_eq!(store.reserve_ordinal("p001").unwrap(), 1);
}

#[test]
fn truncated_final_line_is_reported_then_repaired_on_append() {
    let dir = tempfile::tempdir().unwrap();
    let events = simulated("p001-s0000", 5);
    let log = dir.path().join("sessions/p001-s0000.log");
    {
        let store = Store::open(dir.path()).unwrap();
        create(&store, &events);
        store.append_events("p001-s0000", &events[..3]).unwrap();
    }
    let torn = encode_event(&events[3], false).unwrap();
    OpenOptions::new().append(true).open(&log).unwrap().write_all(&torn.as_bytes()[..10]).unwrap();

    let store = Store::open(dir.path()).unwrap();
    match store.load_session_events("p001-s0000") {
        Err(StoreError::Corrupt { line: 4, reason, .. }) => assert!(reason.contains("truncated")),
        other => panic!("{other:?}"),
    }
    // The torn tail was never acknowledged; the writer drops it and resumes.
    assert_eq!(store.next_seq("p001-s0000").unwrap(), 3);
    store.append_events("p001-s0000", &events[3..]).unwrap();
    assert_eq!(store.load_session_events("p001-s0000").unwrap(), events);
}

#[test]
fn corrupt_middle_line_names_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let events = simulated("p001-s0000", 6);
    create(&store, &events);
    store.append_events("p001-s0000", &events).unwrap();
    let log = dir.path().join("sessions/p001-s0000.log");
    let text = fs::read_to_string(&log).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[1] = lines[1].replace("kind=", "kind =");
    fs::write(&log, lines.join("\n") + "\n").unwrap();
    assert!(matches!(store.load_session_events("p001-s0000"), Err(StoreError::Corrupt { line: 2, .. })));
}

#[test]
fn redaction_drops_positions() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open_with(dir.path(), StoreOptions { redact_positions: true }).unwrap();
    let mut events = simulated("p001-s0000", 7);
    for e in &mut events {
        if let EventKind::ResponseRecorded { player_position, .. } = &mut e.kind {
            *player_position = Some([1.0, 2.0, 3.0]);
        }
    }
    create(&store, &events);
    store.append_events("p001-s0000", &events).unwrap();
    let loaded = store.load_session_events("p001-s0000").unwrap();
    assert!(loaded.iter().all(|e| !matches!(e.kind, EventKind::ResponseRecorded { player_position: Some(_), .. })));
    assert_eq!(replay_log(&loaded).unwrap().1, replay_log(&events).unwrap().1);
}

#[test]
fn stored_sealed_segments_replay() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    for seed in 0..30 {
        let ordinal = store.reserve_ordinal("p001").unwrap();
        let id = format!("p001-s{ordinal:04}");
        let events = simulated(&id, seed);
        store.create_session(SegmentMeta::from_start(&events[0], ordinal, Some("2026-01-01T10:00:00Z".into())).unwrap()).unwrap();
        store.append_events(&id, &events).unwrap();
    }
    let metas = store.patient_sessions("p001").unwrap();
    assert_eq!(metas.len(), 30);
    for (i, m) in metas.iter().enumerate() {
        assert_eq!(m.ordinal, i as u32);
        assert!(m.sealed);
        replay_log(&store.load_session_events(&m.session_id).unwrap()).unwrap();
    }
}

#[test]
fn duplicate_session_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let events = simulated("p001-s0000", 8);
    create(&store, &events);
    let meta = SegmentMeta::from_start(&events[0], 5, None).unwrap();
    assert!(matches!(store.create_session(meta), Err(StoreError::SessionExists(_))));
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), -1e3f64..1e3]
}

fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9._-]{0,20}"
}

fn kind() -> impl Strategy<Value = EventKind> {
    let placement = (ident(), [finite(), finite(), finite()], finite())
        .prop_map(|(object_id, position, appearance_offset)| Placement { object_id, position, appearance_offset });
    prop_oneof![
        ("[0-9a-f]{16}", ident(), ident(), any::<u32>(), any::<u32>(), finite(), finite()).prop_map(
            |(digest, patient_id, program_id, level, planned_tries, try_time, max_time)| EventKind::SessionStarted {
                digest,
                patient_id,
                program_id,
                level,
                planned_tries,
                try_time,
                max_time
            }
        ),
        (any::<u32>(), ident(), prop::collection::vec(placement, 0..6)).prop_map(|(try_index, target_object_id, placements)| {
            EventKind::TryPresented { try_index, target_object_id, placements }
        }),
        (any::<u32>(), ident(), finite(), prop::option::of([finite(), finite(), finite()])).prop_map(
            |(try_index, object_id, response_time, player_position)| EventKind::ResponseRecorded {
                try_index,
                object_id,
                response_time,
                player_position
            }
        ),
        any::<u32>().prop_map(|try_index| EventKind::TryTimedOut { try_index }),
        prop::option::of(any::<u32>()).prop_map(|after_try_index| EventKind::SessionAborted { after_try_index }),
        Just(EventKind::SessionCompleted),
    ]
}

proptest! {
    #[test]
    fn codec_round_trips(session_id in ident(), seq in any::<u64>(), at in finite(), kind in kind()) {
        let e = SessionEvent { session_id, seq, at, kind };
        let line = encode_event(&e, false).unwrap();
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(decode_line(&line).unwrap(), e);
    }

    #[test]
    fn decoder_is_total(line in "\\PC{0,200}") {
        let _ = decode_line(&line);
    }
}
