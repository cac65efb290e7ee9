use serde::{Deserialize, Serialize};

use crate::domain::ProgressionPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionDecision {
    Advance,
    Stay,
    Regress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReason {
    /// `None` when the session had no correct response.
    pub pi: Option<f64>,
    /// The threshold the decision was taken against, if any.
    pub threshold: Option<f64>,
    pub sessions_at_level: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTransition {
    pub decision: TransitionDecision,
    pub from_level: u32,
    pub to_level: u32,
    pub reason: TransitionReason,
}

/// Picks the next level from the session PI.
///
/// An absent PI is treated as the worst score: it regresses when possible.
/// Advancing also requires `min_sessions_at_level` sessions at the current
/// level, counting the one just played.
pub fn decide_level_transition(
    pi: Option<f64>,
    policy: &ProgressionPolicy,
    sessions_at_level: u32,
    current_level: u32,
    max_level: u32,
) -> LevelTransition {
    let advance = matches!(pi, Some(p) if p >= policy.advance_threshold)
        && sessions_at_level >= policy.min_sessions_at_level
        && current_level < max_level;
    let regress = pi.is_none_or(|p| p < policy.regress_threshold) && current_level > 1;

    let (decision, to_level, threshold) = if advance {
        (TransitionDecision::Advance, current_level + 1, Some(policy.advance_threshold))
    } else if regress {
        (TransitionDecision::Regress, current_level - 1, Some(policy.regress_threshold))
    } else {
        (TransitionDecision::Stay, current_level, None)
    };
    LevelTransition {
        decision,
        from_level: current_level,
        to_level,
        reason: TransitionReason { pi, threshold, sessions_at_level },
    }
}
