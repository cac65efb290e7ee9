//! Core of the AR-Therapist service: the validated treatment domain model,
//! the game-session state machine with its event log and replay, the
//! performance-measure engine, and a synthetic patient simulator.
//!
//! Everything in this crate is pure and deterministic. Time is supplied by
//! callers and all randomness flows from explicit seeds.

pub mod domain;
pub mod engine;
pub mod metrics;
pub mod rng;
pub mod simulator;

pub use domain::{
    derive_session_config, Catalog, DoctorProfile, GameDefinition, LevelDefinition,
    MemoryCatalog, ObjectSpec, PatientProfile, ProgressionPolicy, Treatment, TreatmentProgram,
    ValidationError,
};
pub use engine::{
    decide_level_transition, finalize_session, replay, replay_log, score_log, EngineError,
    EventKind, GameSession, LevelTransition, SessionConfig, SessionEvent, TransitionDecision,
};
pub use metrics::{compute_session_metrics, tally, SessionMetrics, SessionTally, TryOutcome, TryRecord};
pub use simulator::{simulate_session, simulate_try, sweep, BehaviorParams, SimAction, SimError, SweepTable};
