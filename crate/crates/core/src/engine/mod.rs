//! The run-time layer: a deterministic state machine for one game session,
//! its append-only event log, replay of a log back into a tally, level
//! progression, and post-session scoring.

mod config;
mod event;
mod finalize;
mod progression;
mod replay;
mod session;

use thiserror::Error;

use crate::metrics::MetricsError;

pub use config::SessionConfig;
pub use event::{EventKind, Placement, SessionEvent, Vec3};
pub use finalize::{finalize_session, score_log, Finalized, ProgressionContext};
pub use progression::{decide_level_transition, LevelTransition, TransitionDecision, TransitionReason};
pub use replay::{replay, replay_log, ReplayError, ReplayState, StartInfo};
pub use session::{Counters, GameSession, Phase, SessionState};

#[cfg(test)]
pub(crate) use session::tests::config as test_config;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("session is not awaiting a response (phase {0:?})")]
    NotAwaiting(Phase),
    #[error("session already finished")]
    AlreadyFinished,
    #[error("time {at} is before the session clock {clock}")]
    ClockRegression { at: f64, clock: f64 },
    #[error("response at {at} is not after the try start {start}")]
    ResponseTooEarly { at: f64, start: f64 },
    #[error("response at {at} is past the try deadline {deadline}; deliver a timeout first")]
    ResponseTooLate { at: f64, deadline: f64 },
    #[error("object `{0}` was not presented in the current try")]
    UnknownObject(String),
    #[error("timeout at {at} precedes the try deadline {deadline}")]
    TimeoutTooEarly { at: f64, deadline: f64 },
    #[error("try {0} has already been resolved")]
    AlreadyResolved(u32),
    #[error("try {0} has not been presented yet")]
    NotPresented(u32),
    #[error("abort at {at} is past the try deadline {deadline}; deliver a timeout first")]
    AbortAfterDeadline { at: f64, deadline: f64 },
    #[error("live counters diverge from the replayed log: {0}")]
    Divergence(String),
    #[error("event log rejected: {0}")]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
