use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::event::{EventKind, SessionEvent};
use crate::metrics::{tally, MetricsError, SessionTally, TryRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("log is empty")]
    Empty,
    #[error("expected seq {expected}, found {found}")]
    SeqGap { expected: u64, found: u64 },
    #[error("seq {seq}: event belongs to session `{found}`, log is `{expected}`")]
    ForeignSession { seq: u64, expected: String, found: String },
    #[error("seq {seq}: time {at} is not a finite non-negative number")]
    BadTime { seq: u64, at: f64 },
    #[error("seq {seq}: time {at} precedes the previous event at {last}")]
    ClockRegression { seq: u64, at: f64, last: f64 },
    #[error("seq {seq}: the log must begin with session_started")]
    NotStarted { seq: u64 },
    #[error("seq {seq}: duplicate session_started")]
    DuplicateStart { seq: u64 },
    #[error("seq {seq}: invalid session parameters: {reason}")]
    BadStart { seq: u64, reason: String },
    #[error("seq {seq}: event after the terminal event")]
    AfterTerminal { seq: u64 },
    #[error("seq {seq}: try {try_index} resolved twice")]
    DoubleResolution { seq: u64, try_index: u32 },
    #[error("seq {seq}: expected try {expected}, found try {found}")]
    UnexpectedTry { seq: u64, expected: u32, found: u32 },
    #[error("seq {seq}: try {found} presented while try {open} is unresolved")]
    TryStillOpen { seq: u64, open: u32, found: u32 },
    #[error("seq {seq}: no try is open")]
    NoOpenTry { seq: u64 },
    #[error("seq {seq}: object `{object_id}` was not presented in try {try_index}")]
    UnknownObject { seq: u64, try_index: u32, object_id: String },
    #[error("seq {seq}: invalid presentation: {reason}")]
    BadPresentation { seq: u64, reason: String },
    #[error("seq {seq}: response time {rt} outside (0, {theta}]")]
    ResponseTime { seq: u64, rt: f64, theta: f64 },
    #[error("seq {seq}: abort names last resolved try {claimed:?}, log has {actual:?}")]
    AbortMismatch { seq: u64, claimed: Option<u32>, actual: Option<u32> },
    #[error("seq {seq}: completed with {resolved} of {planned} tries resolved")]
    EarlyCompletion { seq: u64, resolved: u32, planned: u32 },
    #[error("seq {seq}: terminal time {at} exceeds max_time + theta = {limit}")]
    Overrun { seq: u64, at: f64, limit: f64 },
    #[error("log has no terminal event")]
    MissingTerminal,
    #[error("log declares {field} = {logged}, caller expected {expected}")]
    ParameterMismatch { field: &'static str, logged: String, expected: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Session parameters carried by the `session_started` event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartInfo {
    pub session_id: String,
    pub digest: String,
    pub patient_id: String,
    pub program_id: String,
    pub level: u32,
    pub planned_tries: u32,
    pub try_time: f64,
    pub max_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct OpenTry {
    index: u32,
    target: String,
    objects: Vec<String>,
}

/// Incremental validator and reducer over a session log.
///
/// [`ReplayState::apply`] either accepts an event and folds it in, or
/// rejects it and leaves the state unchanged, so a writer can check a batch
/// against a copy before committing it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayState {
    next_seq: u64,
    last_at: f64,
    start: Option<StartInfo>,
    open: Option<OpenTry>,
    records: Vec<TryRecord>,
    terminal_at: Option<f64>,
}

impl ReplayState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn start(&self) -> Option<&StartInfo> {
        self.start.as_ref()
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn is_sealed(&self) -> bool {
        self.terminal_at.is_some()
    }

    pub fn resolved(&self) -> u32 {
        self.records.len() as u32
    }

    pub fn apply(&mut self, e: &SessionEvent) -> Result<(), ReplayError> {
        let seq = e.seq;
        if seq != self.next_seq {
            return Err(ReplayError::SeqGap { expected: self.next_seq, found: seq });
        }
        if self.terminal_at.is_some() {
            return Err(ReplayError::AfterTerminal { seq });
        }
        if !(e.at.is_finite() && e.at >= 0.0) {
            return Err(ReplayError::BadTime { seq, at: e.at });
        }
        if e.at < self.last_at {
            return Err(ReplayError::ClockRegression { seq, at: e.at, last: self.last_at });
        }

        let start = match (&self.start, &e.kind) {
            (None, EventKind::SessionStarted { .. }) => None,
            (None, _) => return Err(ReplayError::NotStarted { seq }),
            (Some(_), EventKind::SessionStarted { .. }) => {
                return Err(ReplayError::DuplicateStart { seq })
            }
            (Some(s), _) => {
                if s.session_id != e.session_id {
                    return Err(ReplayError::ForeignSession {
                        seq,
                        expected: s.session_id.clone(),
                        found: e.session_id.clone(),
                    });
                }
                Some(s)
            }
        };

        match (&e.kind, start) {
            (
                EventKind::SessionStarted {
                    digest,
                    patient_id,
                    program_id,
                    level,
                    planned_tries,
                    try_time,
                    max_time,
                },
                _,
            ) => {
                let bad = |reason: &str| ReplayError::BadStart { seq, reason: reason.to_string() };
                if *planned_tries == 0 {
                    return Err(bad("planned_tries must be at least 1"));
                }
                if !(try_time.is_finite() && *try_time > 0.0) {
                    return Err(bad("try_time must be positive"));
                }
                if !(max_time.is_finite() && *max_time > 0.0) {
                    return Err(bad("max_time must be positive"));
                }
                if *level == 0 {
                    return Err(bad("level must be at least 1"));
                }
                self.start = Some(StartInfo {
                    session_id: e.session_id.clone(),
                    digest: digest.clone(),
                    patient_id: patient_id.clone(),
                    program_id: program_id.clone(),
                    level: *level,
                    planned_tries: *planned_tries,
                    try_time: *try_time,
                    max_time: *max_time,
                });
            }
            (EventKind::TryPresented { try_index, target_object_id, placements }, Some(s)) => {
                if let Some(open) = &self.open {
                    return Err(ReplayError::TryStillOpen { seq, open: open.index, found: *try_index });
                }
                let expected = self.resolved();
                if *try_index != expected {
                    return Err(ReplayError::UnexpectedTry { seq, expected, found: *try_index });
                }
                if *try_index >= s.planned_tries {
                    return Err(ReplayError::BadPresentation {
                        seq,
                        reason: format!("try {try_index} exceeds the {} planned", s.planned_tries),
                    });
                }
                let mut ids = HashSet::new();
                for p in placements {
                    if !ids.insert(p.object_id.as_str()) {
                        return Err(ReplayError::BadPresentation {
                            seq,
                            reason: format!("object `{}` placed twice", p.object_id),
                        });
                    }
                    if !(p.appearance_offset.is_finite() && p.appearance_offset >= 0.0)
                        || !p.position.iter().all(|x| x.is_finite())
                    {
                        return Err(ReplayError::BadPresentation {
                            seq,
                            reason: format!("object `{}` has a non-finite placement", p.object_id),
                        });
                    }
                }
                if !ids.contains(target_object_id.as_str()) {
                    return Err(ReplayError::BadPresentation {
                        seq,
                        reason: format!("target `{target_object_id}` is not among the placements"),
                    });
                }
                self.open = Some(OpenTry {
                    index: *try_index,
                    target: target_object_id.clone(),
                    objects: placements.iter().map(|p| p.object_id.clone()).collect(),
                });
            }
            (EventKind::ResponseRecorded { try_index, object_id, response_time, .. }, Some(s)) => {
                let open = self.open_try(seq, *try_index)?;
                if !open.objects.iter().any(|o| o == object_id) {
                    return Err(ReplayError::UnknownObject {
                        seq,
                        try_index: *try_index,
                        object_id: object_id.clone(),
                    });
                }
                let rt = *response_time;
                if !(rt > 0.0 && rt <= s.try_time) {
                    return Err(ReplayError::ResponseTime { seq, rt, theta: s.try_time });
                }
                let record = if *object_id == open.target {
                    TryRecord::correct(*try_index, rt)
                } else {
                    TryRecord::commission(*try_index, rt)
                };
                self.records.push(record);
                self.open = None;
            }
            (EventKind::TryTimedOut { try_index }, Some(_)) => {
                self.open_try(seq, *try_index)?;
                self.records.push(TryRecord::omission(*try_index));
                self.open = None;
            }
            (EventKind::SessionAborted { after_try_index }, Some(s)) => {
                let actual = self.resolved().checked_sub(1);
                if *after_try_index != actual {
                    return Err(ReplayError::AbortMismatch { seq, claimed: *after_try_index, actual });
                }
                Self::check_overrun(seq, e.at, s)?;
                self.open = None;
                self.terminal_at = Some(e.at);
            }
            (EventKind::SessionCompleted, Some(s)) => {
                let resolved = self.resolved();
                if self.open.is_some() || resolved != s.planned_tries {
                    return Err(ReplayError::EarlyCompletion { seq, resolved, planned: s.planned_tries });
                }
                Self::check_overrun(seq, e.at, s)?;
                self.terminal_at = Some(e.at);
            }
            (_, None) => unreachable!("non-start events are rejected before a start"),
        }

        self.next_seq += 1;
        self.last_at = e.at;
        Ok(())
    }

    fn check_overrun(seq: u64, at: f64, s: &StartInfo) -> Result<(), ReplayError> {
        let limit = s.max_time + s.try_time;
        if at > limit {
            return Err(ReplayError::Overrun { seq, at, limit });
        }
        Ok(())
    }

    fn open_try(&self, seq: u64, try_index: u32) -> Result<&OpenTry, ReplayError> {
        match &self.open {
            Some(open) if open.index == try_index => Ok(open),
            _ if try_index < self.resolved() => Err(ReplayError::DoubleResolution { seq, try_index }),
            Some(open) => Err(ReplayError::UnexpectedTry { seq, expected: open.index, found: try_index }),
            None => Err(ReplayError::NoOpenTry { seq }),
        }
    }

    /// Tally of a sealed log. Tries never resolved count as uncompleted and
    /// `GT` is the time of the terminal event.
    pub fn tally(&self) -> Result<SessionTally, ReplayError> {
        let (Some(start), Some(gt)) = (&self.start, self.terminal_at) else {
            return Err(if self.start.is_none() && self.next_seq == 0 {
                ReplayError::Empty
            } else {
                ReplayError::MissingTerminal
            });
        };
        let mut records = self.records.clone();
        records.extend((self.resolved()..start.planned_tries).map(TryRecord::uncompleted));
        Ok(tally(&records, start.planned_tries, start.try_time, gt)?)
    }
}

/// Rebuilds the session tally from its log alone, checking that the log
/// declares the expected per-try budget and number of tries.
pub fn replay(events: &[SessionEvent], theta: f64, planned_tries: u32) -> Result<SessionTally, ReplayError> {
    let (start, tally) = replay_log(events)?;
    if start.try_time != theta {
        return Err(ReplayError::ParameterMismatch {
            field: "try_time",
            logged: start.try_time.to_string(),
            expected: theta.to_string(),
        });
    }
    if start.planned_tries != planned_tries {
        return Err(ReplayError::ParameterMismatch {
            field: "planned_tries",
            logged: start.planned_tries.to_string(),
            expected: planned_tries.to_string(),
        });
    }
    Ok(tally)
}

/// Replays a log using the parameters declared in its `session_started` event.
pub fn replay_log(events: &[SessionEvent]) -> Result<(StartInfo, SessionTally), ReplayError> {
    if events.is_empty() {
        return Err(ReplayError::Empty);
    }
    let mut state = ReplayState::new();
    for e in events {
        state.apply(e)?;
    }
    let tally = state.tally()?;
    Ok((state.start.expect("sealed log has a start"), tally))
}
