use serde::{Deserialize, Serialize};

use super::progression::{decide_level_transition, LevelTransition};
use super::replay::{replay_log, StartInfo};
use super::session::GameSession;
use super::{EngineError, SessionEvent};
use crate::domain::{PatientProfile, ProgressionPolicy};
use crate::metrics::{compute_session_metrics, SessionMetrics, SessionTally};

/// What the progression rule needs beyond the session itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionContext {
    pub policy: ProgressionPolicy,
    /// Sessions played at the current level, including this one.
    pub sessions_at_level: u32,
    pub max_level: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finalized {
    pub start: StartInfo,
    pub tally: SessionTally,
    pub metrics: SessionMetrics,
    pub transition: LevelTransition,
    /// The patient after the session: PI replaced when one was computed,
    /// level set to the transition target.
    pub profile: PatientProfile,
}

/// Scores a finished live session. The tally is taken from the replayed
/// log and must agree exactly with the live counters.
pub fn finalize_session(
    session: &GameSession,
    ctx: &ProgressionContext,
    profile: &PatientProfile,
) -> Result<Finalized, EngineError> {
    let live = session.live_tally().ok_or(EngineError::Divergence("session is still running".into()))?;
    let finalized = score_log(session.events(), ctx, profile)?;
    if finalized.tally != live {
        return Err(EngineError::Divergence(format!(
            "live {live:?} vs replayed {:?}",
            finalized.tally
        )));
    }
    Ok(finalized)
}

/// Scores a sealed log on its own, as when events arrive from a device.
pub fn score_log(
    events: &[SessionEvent],
    ctx: &ProgressionContext,
    profile: &PatientProfile,
) -> Result<Finalized, EngineError> {
    let (start, tally) = replay_log(events)?;
    if start.patient_id != profile.id {
        return Err(EngineError::Divergence(format!(
            "log belongs to patient `{}`, profile is `{}`",
            start.patient_id, profile.id
        )));
    }
    let metrics = compute_session_metrics(&tally)?;
    let transition = decide_level_transition(
        metrics.performance_index,
        &ctx.policy,
        ctx.sessions_at_level,
        profile.level,
        ctx.max_level,
    );
    let mut updated = profile.clone();
    if metrics.performance_index.is_some() {
        updated.performance_index = metrics.performance_index;
    }
    updated.level = transition.to_level;
    Ok(Finalized { start, tally, metrics, transition, profile: updated })
}
