//! Performance measures for one game session.
//!
//! A session of `T` planned tries partitions into `C` correct tries, `OE`
//! omission errors, `CE` commission errors and `K` uncompleted tries, with
//! `I = OE + CE`. From those counts and the correct response times (CRT)
//! this module derives:
//!
//! | measure | definition                         | absent when |
//! |---------|------------------------------------|-------------|
//! | `M`     | `sum(CRT) / C`                     | `C = 0`     |
//! | `SD`    | `sqrt(sum((CRT - M)^2) / (C - 1))` | `C < 2`     |
//! | `GF`    | `(C + I) / T`                      | never       |
//! | `IAF`   | `OE / (C + I)`                     | `C + I = 0` |
//! | `IMF`   | `CE / (C + I)`                     | `C + I = 0` |
//! | `EF`    | `IAF + IMF`                        | `C + I = 0` |
//! | `CRF`   | `sum(CRT) / (C * theta)`           | `C = 0`     |
//! | `PI`    | `((1 - CRF) + (1 - EF)) / 2 * GF`  | `C = 0`     |
//!
//! Absence is an explicit `None`, never a zero: a degenerate session must not
//! read as a good one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TryOutcome {
    Correct,
    CommissionError,
    OmissionError,
    Uncompleted,
}

impl TryOutcome {
    pub fn has_response(self) -> bool {
        matches!(self, TryOutcome::Correct | TryOutcome::CommissionError)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TryRecord {
    pub try_index: u32,
    pub outcome: TryOutcome,
    /// Seconds from presentation to response; present iff the try got a response.
    pub response_time: Option<f64>,
}

impl TryRecord {
    pub fn correct(try_index: u32, rt: f64) -> Self {
        Self { try_index, outcome: TryOutcome::Correct, response_time: Some(rt) }
    }
    pub fn commission(try_index: u32, rt: f64) -> Self {
        Self { try_index, outcome: TryOutcome::CommissionError, response_time: Some(rt) }
    }
    pub fn omission(try_index: u32) -> Self {
        Self { try_index, outcome: TryOutcome::OmissionError, response_time: None }
    }
    pub fn uncompleted(try_index: u32) -> Self {
        Self { try_index, outcome: TryOutcome::Uncompleted, response_time: None }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("expected {expected} try records, got {actual}")]
    RecordCount { expected: u32, actual: usize },
    #[error("planned tries must be at least 1")]
    NoTries,
    #[error("try time must be a positive finite number, got {0}")]
    BadTheta(f64),
    #[error("session time must be a non-negative finite number, got {0}")]
    BadSessionTime(f64),
    #[error("try {try_index}: response time {rt} outside (0, {theta}]")]
    ResponseTime { try_index: u32, rt: f64, theta: f64 },
    #[error("try {try_index}: outcome {outcome:?} inconsistent with response time presence")]
    ResponsePresence { try_index: u32, outcome: TryOutcome },
    #[error("tally counts do not partition the planned tries: {0}")]
    Partition(String),
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
}

/// Counters of one finished session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTally {
    /// Planned tries `T`.
    pub planned_tries: u32,
    /// `C`
    pub correct: u32,
    /// `OE`
    pub omissions: u32,
    /// `CE`
    pub commissions: u32,
    /// `K`
    pub uncompleted: u32,
    /// Correct response times in try order; length `C`.
    pub crt_list: Vec<f64>,
    /// Per-try budget in seconds.
    pub theta: f64,
    /// Actual elapsed session time in seconds.
    pub gt: f64,
}

impl SessionTally {
    /// `I = OE + CE`
    pub fn incorrect(&self) -> u32 {
        self.omissions + self.commissions
    }

    /// `C + I`, the tries that were actually played out.
    pub fn engaged(&self) -> u32 {
        self.correct + self.incorrect()
    }

    pub fn check(&self) -> Result<(), MetricsError> {
        if self.planned_tries == 0 {
            return Err(MetricsError::NoTries);
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(MetricsError::BadTheta(self.theta));
        }
        if !(self.gt.is_finite() && self.gt >= 0.0) {
            return Err(MetricsError::BadSessionTime(self.gt));
        }
        let sum = self.correct as u64
            + self.omissions as u64
            + self.commissions as u64
            + self.uncompleted as u64;
        if sum != self.planned_tries as u64 {
            return Err(MetricsError::Partition(format!(
                "C + OE + CE + K = {sum}, T = {}",
                self.planned_tries
            )));
        }
        if self.crt_list.len() != self.correct as usize {
            return Err(MetricsError::Partition(format!(
                "{} correct response times for C = {}",
                self.crt_list.len(),
                self.correct
            )));
        }
        for (i, &rt) in self.crt_list.iter().enumerate() {
            if !(rt > 0.0 && rt <= self.theta) {
                return Err(MetricsError::ResponseTime { try_index: i as u32, rt, theta: self.theta });
            }
        }
        Ok(())
    }
}

/// Partitions try records into a tally, preserving the order of correct
/// response times.
pub fn tally(
    tries: &[TryRecord],
    planned_tries: u32,
    theta: f64,
    gt: f64,
) -> Result<SessionTally, MetricsError> {
    if planned_tries == 0 {
        return Err(MetricsError::NoTries);
    }
    if tries.len() != planned_tries as usize {
        return Err(MetricsError::RecordCount { expected: planned_tries, actual: tries.len() });
    }
    if !(theta.is_finite() && theta > 0.0) {
        return Err(MetricsError::BadTheta(theta));
    }
    let mut t = SessionTally {
        planned_tries,
        correct: 0,
        omissions: 0,
        commissions: 0,
        uncompleted: 0,
        crt_list: Vec::new(),
        theta,
        gt,
    };
    for r in tries {
        match (r.outcome.has_response(), r.response_time) {
            (true, Some(rt)) => {
                if !(rt > 0.0 && rt <= theta) {
                    return Err(MetricsError::ResponseTime { try_index: r.try_index, rt, theta });
                }
            }
            (false, None) => {}
            _ => {
                return Err(MetricsError::ResponsePresence {
                    try_index: r.try_index,
                    outcome: r.outcome,
                })
            }
        }
        match r.outcome {
            TryOutcome::Correct => {
                t.correct += 1;
                t.crt_list.push(r.response_time.expect("checked above"));
            }
            TryOutcome::CommissionError => t.commissions += 1,
            TryOutcome::OmissionError => t.omissions += 1,
            TryOutcome::Uncompleted => t.uncompleted += 1,
        }
    }
    t.check()?;
    Ok(t)
}

/// Mean correct response time `M`.
pub fn mean_crt(t: &SessionTally) -> Option<f64> {
    if t.correct == 0 {
        return None;
    }
    // Capped like CRF: each CRT is at most theta.
    Some((t.crt_list.iter().sum::<f64>() / t.correct as f64).min(t.theta))
}

/// Sample standard deviation of the correct response times (divisor `C - 1`).
pub fn sd_crt(t: &SessionTally) -> Option<f64> {
    if t.correct < 2 {
        return None;
    }
    let m = mean_crt(t)?;
    let ss: f64 = t.crt_list.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (t.correct - 1) as f64).sqrt())
}

/// Engagement factor `GF = (C + I) / T`.
pub fn engagement_factor(t: &SessionTally) -> Option<f64> {
    if t.planned_tries == 0 {
        return None;
    }
    Some(t.engaged() as f64 / t.planned_tries as f64)
}

/// Inattention factor `IAF = OE / (C + I)`; uncompleted tries are excluded.
pub fn inattention_factor(t: &SessionTally) -> Option<f64> {
    let n = t.engaged();
    (n > 0).then(|| t.omissions as f64 / n as f64)
}

/// Impulsivity factor `IMF = CE / (C + I)`.
pub fn impulsivity_factor(t: &SessionTally) -> Option<f64> {
    let n = t.engaged();
    (n > 0).then(|| t.commissions as f64 / n as f64)
}

/// Error factor, computed as `IAF + IMF` so the identity holds exactly.
pub fn error_factor(t: &SessionTally) -> Option<f64> {
    Some(inattention_factor(t)? + impulsivity_factor(t)?)
}

/// Correct response factor `CRF = sum(CRT) / (C * theta)`.
///
/// Every CRT lies in `(0, theta]`, so the exact value never exceeds 1; the
/// result is capped at 1 to absorb summation rounding.
pub fn correct_response_factor(t: &SessionTally) -> Option<f64> {
    if t.correct == 0 {
        return None;
    }
    Some((t.crt_list.iter().sum::<f64>() / (t.correct as f64 * t.theta)).min(1.0))
}

fn unit(name: &'static str, value: f64) -> Result<f64, MetricsError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(MetricsError::OutOfRange { name, value })
    }
}

/// Composite performance index `PI = [((1 - CRF) + (1 - EF)) / 2] * GF`.
pub fn performance_index(crf: f64, ef: f64, gf: f64) -> Result<f64, MetricsError> {
    let (crf, ef, gf) = (unit("CRF", crf)?, unit("EF", ef)?, unit("GF", gf)?);
    Ok(((1.0 - crf) + (1.0 - ef)) / 2.0 * gf)
}

/// The full metric vector of one session. Absent measures serialize as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    #[serde(rename = "M")]
    pub mean_crt: Option<f64>,
    #[serde(rename = "SD")]
    pub sd_crt: Option<f64>,
    #[serde(rename = "GF")]
    pub engagement: Option<f64>,
    #[serde(rename = "IAF")]
    pub inattention: Option<f64>,
    #[serde(rename = "IMF")]
    pub impulsivity: Option<f64>,
    #[serde(rename = "EF")]
    pub error: Option<f64>,
    #[serde(rename = "CRF")]
    pub correct_response: Option<f64>,
    #[serde(rename = "PI")]
    pub performance_index: Option<f64>,
    #[serde(rename = "GT")]
    pub gt: f64,
}

impl SessionMetrics {
    /// Column names in the stable output order.
    pub const FIELDS: [&'static str; 9] = ["M", "SD", "GF", "IAF", "IMF", "EF", "CRF", "PI", "GT"];

    /// Values in [`Self::FIELDS`] order.
    pub fn values(&self) -> [Option<f64>; 9] {
        [
            self.mean_crt,
            self.sd_crt,
            self.engagement,
            self.inattention,
            self.impulsivity,
            self.error,
            self.correct_response,
            self.performance_index,
            Some(self.gt),
        ]
    }
}

pub fn compute_session_metrics(t: &SessionTally) -> Result<SessionMetrics, MetricsError> {
    t.check()?;
    let gf = engagement_factor(t);
    let ef = error_factor(t);
    let crf = correct_response_factor(t);
    let pi = match (crf, ef, gf) {
        (Some(crf), Some(ef), Some(gf)) => Some(performance_index(crf, ef, gf)?),
        _ => None,
    };
    Ok(SessionMetrics {
        mean_crt: mean_crt(t),
        sd_crt: sd_crt(t),
        engagement: gf,
        inattention: inattention_factor(t),
        impulsivity: impulsivity_factor(t),
        error: ef,
        correct_response: crf,
        performance_index: pi,
        gt: t.gt,
    })
}
