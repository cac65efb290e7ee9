//! The context agent: runs sessions, ingests device logs, scores sealed
//! sessions, steers the patient level and assembles reports. Everything here
//! is synchronous and talks to the store directly, so the CLI can use it
//! without going through HTTP.

use std::collections::BTreeMap;

use artherapist_core::domain::{
    derive_session_config, DoctorProfile, Experience, GameDefinition, PatientProfile, SessionIdentity,
    TreatmentProgram, ValidationError,
};
use artherapist_core::engine::{
    finalize_session, replay_log, score_log, EngineError, Finalized, LevelTransition, ProgressionContext,
    ReplayState, SessionEvent, TransitionDecision,
};
use artherapist_core::metrics::{compute_session_metrics, SessionMetrics, SessionTally};
use artherapist_core::simulator::{simulate_session, BehaviorParams};
use artherapist_store::codec::encode_event;
use artherapist_store::{DocType, SegmentMeta, Store, StoreError, TransitionRecord, TransitionSource};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ErrorCode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaunchRequest {
    pub patient_id: String,
    pub program_id: String,
    /// Session seed; drawn at random when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Simulated behaviour; defaults apply when absent. A behaviour without
    /// its own seed uses the session seed.
    #[serde(default)]
    pub behavior: Option<BehaviorParams>,
    #[serde(default)]
    pub wall_clock_start: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub session_id: String,
    pub patient_id: String,
    pub program_id: String,
    pub level: u32,
    pub tally: SessionTally,
    pub metrics: SessionMetrics,
    pub transition: LevelTransition,
    pub profile: PatientProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaunchOutcome {
    pub seed: u64,
    #[serde(flatten)]
    pub session: SessionOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub session_id: String,
    pub accepted: usize,
    pub next_seq: u64,
    pub sealed: bool,
    /// Present once the batch sealed the session.
    pub outcome: Option<SessionOutcome>,
}

fn load<T: serde::de::DeserializeOwned>(store: &Store, t: DocType, id: &str) -> Result<(T, u64), ApiError> {
    store.get_typed(t, id).map_err(ApiError::from)
}

/// Plays a simulated session for the patient at their current level of the
/// program's game, stores its log and scores it.
pub fn launch_session(store: &Store, req: &LaunchRequest) -> Result<LaunchOutcome, ApiError> {
    let (patient, _) = load::<PatientProfile>(store, DocType::Patient, &req.patient_id)?;
    let (program, _) = load::<TreatmentProgram>(store, DocType::Program, &req.program_id)?;
    let (game, _) = load::<GameDefinition>(store, DocType::Game, program.game_id())?;
    let level = game.level(patient.level).ok_or_else(|| {
        ApiError::validation(vec![ValidationError::new(
            "level",
            "level.max",
            format!("patient level {} exceeds game `{}` with {} levels", patient.level, game.id, game.max_level()),
        )])
    })?;
    let seed = req.seed.unwrap_or_else(rand::random);
    let behavior = match req.behavior {
        Some(b) => b,
        None => BehaviorParams { seed, ..BehaviorParams::default() },
    };
    behavior.validate().map_err(ApiError::validation)?;

    let ordinal = store.reserve_ordinal(&patient.id)?;
    let identity = SessionIdentity { session_id: format!("{}-s{ordinal:04}", patient.id), patient_id: patient.id.clone(), seed };
    let config = derive_session_config(level, &program, &identity);
    let session = simulate_session(&behavior, config)?;

    let events = session.events();
    let meta = SegmentMeta::from_start(&events[0], ordinal, req.wall_clock_start.clone())
        .ok_or_else(|| ApiError::internal("engine log does not start with session_started"))?;
    store.create_session(meta)?;
    store.append_events(&identity.session_id, events)?;
    let outcome = finalize(store, &identity.session_id, &patient.id, &program.program_id, |profile, ctx| {
        finalize_session(&session, ctx, profile)
    })?;
    Ok(LaunchOutcome { seed, session: outcome })
}

/// Sessions played at `level` including the one being scored: one plus the
/// engine decisions at the end of the history that kept the patient there.
fn sessions_at_level(history: &[TransitionRecord], level: u32) -> u32 {
    let streak = history
        .iter()
        .rev()
        .take_while(|r| r.source == TransitionSource::Engine && r.decision == TransitionDecision::Stay && r.to_level == level)
        .count();
    1 + streak as u32
}

/// Scores a sealed session and applies the result to the patient. The
/// profile write is retried on version conflicts; a session already present
/// in the transition history is scored but not applied twice.
fn finalize(
    store: &Store,
    session_id: &str,
    patient_id: &str,
    program_id: &str,
    score: impl Fn(&PatientProfile, &ProgressionContext) -> Result<Finalized, EngineError>,
) -> Result<SessionOutcome, ApiError> {
    let lock = store.lock_for(&format!("patient:{patient_id}"));
    let _guard = lock.lock().expect("patient lock");
    let (program, _) = load::<TreatmentProgram>(store, DocType::Program, program_id)?;
    let (game, _) = load::<GameDefinition>(store, DocType::Game, program.game_id())?;
    loop {
        let (profile, version) = load::<PatientProfile>(store, DocType::Patient, patient_id)?;
        let history = store.transitions(patient_id)?;
        let ctx = ProgressionContext {
            policy: program.progression_policy,
            sessions_at_level: sessions_at_level(&history, profile.level),
            max_level: game.max_level(),
        };
        let f = score(&profile, &ctx)?;
        let already = history.iter().any(|r| r.session_id.as_deref() == Some(session_id));
        if !already {
            let body = serde_json::to_value(&f.profile).map_err(|e| ApiError::internal(e.to_string()))?;
            match store.put_document(DocType::Patient, patient_id, &body, version) {
                Ok(_) => {}
                Err(StoreError::VersionConflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
            store.append_transition(&TransitionRecord::from_engine(patient_id, session_id, &f.transition))?;
        }
        return Ok(SessionOutcome {
            session_id: session_id.to_string(),
            patient_id: patient_id.to_string(),
            program_id: program_id.to_string(),
            level: f.start.level,
            tally: f.tally,
            metrics: f.metrics,
            transition: f.transition,
            profile: if already { profile } else { f.profile },
        });
    }
}

/// Appends a batch from an external device. The batch is checked as a whole
/// against the stored log before anything is written; a batch that ends the
/// session triggers scoring.
pub fn ingest_events(store: &Store, session_id: &str, events: &[SessionEvent]) -> Result<IngestOutcome, ApiError> {
    let lock = store.lock_for(&format!("session:{session_id}"));
    let _guard = lock.lock().expect("session lock");
    if events.is_empty() {
        return Err(ApiError::malformed("event batch is empty"));
    }
    for e in events {
        if e.session_id != session_id {
            return Err(ApiError::malformed(format!(
                "event seq {} names session `{}`, path names `{session_id}`",
                e.seq, e.session_id
            )));
        }
        encode_event(e, false).map_err(|c| ApiError::malformed(format!("event seq {}: {c}", e.seq)))?;
    }

    let exists = store.session_exists(session_id);
    let mut state = ReplayState::new();
    if exists {
        for e in store.load_session_events(session_id)? {
            state.apply(&e).map_err(|r| ApiError::internal(format!("stored log is invalid: {r}")))?;
        }
    }
    for e in events {
        if e.seq != state.next_seq() || state.is_sealed() {
            return Err(ApiError::new(
                ErrorCode::SeqConflict,
                if state.is_sealed() {
                    format!("session `{session_id}` is sealed")
                } else {
                    format!("expected seq {}, got {}", state.next_seq(), e.seq)
                },
            ));
        }
        state.apply(e)?;
    }
    let start = state.start().cloned().expect("a valid log starts with session_started");
    load::<PatientProfile>(store, DocType::Patient, &start.patient_id)?;
    load::<TreatmentProgram>(store, DocType::Program, &start.program_id)?;

    if !exists {
        let ordinal = store.reserve_ordinal(&start.patient_id)?;
        let meta = SegmentMeta::from_start(&events[0], ordinal, None).expect("checked by replay");
        store.create_session(meta)?;
    }
    let last = store.append_events(session_id, events)?;
    let outcome = if state.is_sealed() {
        let log = store.load_session_events(session_id)?;
        Some(finalize(store, session_id, &start.patient_id, &start.program_id, |profile, ctx| {
            score_log(&log, ctx, profile)
        })?)
    } else {
        None
    };
    Ok(IngestOutcome {
        session_id: session_id.to_string(),
        accepted: events.len(),
        next_seq: last + 1,
        sealed: state.is_sealed(),
        outcome,
    })
}

/// Metrics of a sealed session, recomputed from its stored log.
pub fn session_metrics(store: &Store, session_id: &str) -> Result<SessionMetrics, ApiError> {
    let meta = store.session_meta(session_id)?;
    if !meta.sealed {
        return Err(ApiError::new(ErrorCode::SessionNotSealed, format!("session `{session_id}` is still running")));
    }
    let events = store.load_session_events(session_id)?;
    let (_, tally) = replay_log(&events).map_err(|e| ApiError::internal(format!("stored log is invalid: {e}")))?;
    compute_session_metrics(&tally).map_err(|e| ApiError::internal(e.to_string()))
}

/// Scores sealed sessions that never reached the transition history, e.g.
/// after a crash between sealing and scoring. Returns how many were applied.
pub fn recover_unfinalized(store: &Store) -> Result<usize, ApiError> {
    let mut metas: Vec<SegmentMeta> = store.list_sessions()?.into_iter().filter(|m| m.sealed).collect();
    metas.sort_by(|a, b| (&a.patient_id, a.ordinal).cmp(&(&b.patient_id, b.ordinal)));
    let mut applied = 0;
    for m in metas {
        let done = store.transitions(&m.patient_id)?.iter().any(|r| r.session_id.as_deref() == Some(&m.session_id));
        if done || store.get_document(DocType::Patient, &m.patient_id).is_err() {
            continue;
        }
        let log = store.load_session_events(&m.session_id)?;
        finalize(store, &m.session_id, &m.patient_id, &m.program_id, |profile, ctx| score_log(&log, ctx, profile))?;
        applied += 1;
    }
    Ok(applied)
}

/// The requesting doctor, who must exist.
pub fn requesting_doctor(store: &Store, doctor_id: Option<&str>) -> Result<DoctorProfile, ApiError> {
    let id = doctor_id.ok_or_else(|| ApiError::new(ErrorCode::MissingDoctorId, "X-Doctor-Id header is required"))?;
    match store.get_typed::<DoctorProfile>(DocType::Doctor, id) {
        Ok((d, _)) => Ok(d),
        Err(StoreError::NotFound { .. }) => Err(ApiError::forbidden(format!("unknown doctor `{id}`"))),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub ordinal: u32,
    pub program_id: String,
    pub level: u32,
    pub metrics: SessionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientReport {
    pub patient: PatientProfile,
    pub version: u64,
    pub level: u32,
    /// Sealed sessions by ordinal.
    pub sessions: Vec<SessionSummary>,
    /// PI of each sealed session, `null` when absent.
    pub pi_series: Vec<Option<f64>>,
    /// Sessions still receiving events.
    pub in_progress: Vec<String>,
    pub transitions: Vec<TransitionRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events: Option<BTreeMap<String, Vec<SessionEvent>>>,
}

pub fn patient_report(
    store: &Store,
    patient_id: &str,
    doctor_id: Option<&str>,
    include_events: bool,
) -> Result<PatientReport, ApiError> {
    let doctor = requesting_doctor(store, doctor_id)?;
    let (patient, version) = load::<PatientProfile>(store, DocType::Patient, patient_id)?;
    if include_events && !doctor.experience.may_read_event_logs() {
        return Err(ApiError::forbidden(format!(
            "raw event logs need senior or expert experience; doctor `{}` is {}",
            doctor.id,
            experience_name(doctor.experience)
        )));
    }
    let mut sessions = Vec::new();
    let mut in_progress = Vec::new();
    let mut events = BTreeMap::new();
    for m in store.patient_sessions(patient_id)? {
        if include_events {
            events.insert(m.session_id.clone(), store.load_session_events(&m.session_id)?);
        }
        if !m.sealed {
            in_progress.push(m.session_id);
            continue;
        }
        let metrics = session_metrics(store, &m.session_id)?;
        sessions.push(SessionSummary {
            session_id: m.session_id,
            ordinal: m.ordinal,
            program_id: m.program_id,
            level: m.level,
            metrics,
        });
    }
    Ok(PatientReport {
        level: patient.level,
        pi_series: sessions.iter().map(|s| s.metrics.performance_index).collect(),
        patient,
        version,
        sessions,
        in_progress,
        transitions: store.transitions(patient_id)?,
        events: include_events.then_some(events),
    })
}

fn experience_name(e: Experience) -> &'static str {
    match e {
        Experience::Junior => "junior",
        Experience::Senior => "senior",
        Experience::Expert => "expert",
    }
}

/// Raw log of one session, for senior and expert doctors.
pub fn session_events(store: &Store, session_id: &str, doctor_id: Option<&str>) -> Result<Vec<SessionEvent>, ApiError> {
    let doctor = requesting_doctor(store, doctor_id)?;
    if !doctor.experience.may_read_event_logs() {
        return Err(ApiError::forbidden("raw event logs need senior or expert experience"));
    }
    Ok(store.load_session_events(session_id)?)
}

/// Replaces a patient profile. A level change is a doctor override: it
/// needs a doctor whose involvement allows it, and it is recorded in the
/// transition history.
pub fn update_patient(
    store: &Store,
    patient_id: &str,
    body: &serde_json::Value,
    expected_version: u64,
    doctor_id: Option<&str>,
) -> Result<artherapist_store::DocumentEnvelope, ApiError> {
    let lock = store.lock_for(&format!("patient:{patient_id}"));
    let _guard = lock.lock().expect("patient lock");
    let (current, _) = load::<PatientProfile>(store, DocType::Patient, patient_id)?;
    let new_level = body.get("level").and_then(serde_json::Value::as_u64);
    let level_change = new_level.is_some_and(|l| l != current.level as u64);
    let doctor = if level_change {
        let d = requesting_doctor(store, doctor_id)?;
        if !d.involvement.may_override_level() {
            return Err(ApiError::forbidden(format!("doctor `{}` only monitors and cannot change levels", d.id)));
        }
        Some(d)
    } else {
        None
    };
    if let Some(level) = new_level {
        check_level_against_treatments(store, patient_id, level)?;
    }
    let env = store.put_document(DocType::Patient, patient_id, body, expected_version)?;
    if let Some(d) = doctor {
        let updated: PatientProfile = serde_json::from_value(env.body.clone()).map_err(|e| ApiError::internal(e.to_string()))?;
        store.append_transition(&TransitionRecord::from_override(patient_id, &d.id, current.level, updated.level))?;
    }
    Ok(env)
}

fn check_level_against_treatments(store: &Store, patient_id: &str, level: u64) -> Result<(), ApiError> {
    for id in store.list_documents(DocType::Treatment)? {
        let (t, _) = load::<artherapist_core::domain::Treatment>(store, DocType::Treatment, &id)?;
        if t.patient != patient_id {
            continue;
        }
        let (game, _) = load::<GameDefinition>(store, DocType::Game, &t.game)?;
        if level > game.max_level() as u64 {
            return Err(ApiError::validation(vec![ValidationError::new(
                "level",
                "level.max",
                format!("level {level} exceeds the {} levels of game `{}` in treatment `{id}`", game.max_level(), game.id),
            )]));
        }
    }
    Ok(())
}
