use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::SessionConfig;
use super::event::{EventKind, Placement, SessionEvent, Vec3};
use super::EngineError;
use crate::metrics::{SessionTally, TryOutcome};
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Created but not started; nothing logged yet.
    Idle,
    /// A try is on screen and its deadline has not been resolved.
    AwaitingResponse,
    /// A terminal event has been logged.
    Finished,
}

/// Running outcome counters. They only ever increase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub correct: u32,
    pub omissions: u32,
    pub commissions: u32,
    pub uncompleted: u32,
}

impl Counters {
    pub fn resolved(&self) -> u32 {
        self.correct + self.omissions + self.commissions
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub phase: Phase,
    /// Index of the try on screen (or the last one shown once finished).
    pub current_try: u32,
    /// Seconds since session start of the latest logged event.
    pub clock: f64,
    pub try_started_at: f64,
    pub counters: Counters,
    pub crt_list: Vec<f64>,
    pub current_target: Option<String>,
    /// Object ids shown in the current try.
    pub presented: Vec<String>,
    /// Last reported player position.
    pub current_location: Option<Vec3>,
    pub rng: SeedStream,
}

/// One game session driven by timed commands from the caller.
///
/// Every command is validated before any state changes, so a rejected
/// command leaves both the state and the log untouched.
#[derive(Debug, Clone)]
pub struct GameSession {
    config: SessionConfig,
    state: SessionState,
    log: Vec<SessionEvent>,
}

// Negated comparisons reject NaN times along with out-of-order ones.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
impl GameSession {
    pub fn new(config: SessionConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let state = SessionState {
            phase: Phase::Idle,
            current_try: 0,
            clock: 0.0,
            try_started_at: 0.0,
            counters: Counters::default(),
            crt_list: Vec::new(),
            current_target: None,
            presented: Vec::new(),
            current_location: None,
            rng: SeedStream::new(config.seed),
        };
        Ok(Self { config, state, log: Vec::new() })
    }

    /// Creates the session and presents try 0 at time 0.
    pub fn start(config: SessionConfig) -> Result<Self, EngineError> {
        let mut session = Self::new(config)?;
        session.begin()?;
        Ok(session)
    }

    /// Logs `SessionStarted` and the first `TryPresented`.
    pub fn begin(&mut self) -> Result<&[SessionEvent], EngineError> {
        if self.state.phase != Phase::Idle {
            return Err(EngineError::NotAwaiting(self.state.phase));
        }
        let mark = self.log.len();
        let c = &self.config;
        let started = EventKind::SessionStarted {
            digest: c.digest(),
            patient_id: c.patient_id.clone(),
            program_id: c.program_id.clone(),
            level: c.level_number,
            planned_tries: c.planned_tries,
            try_time: c.try_time,
            max_time: c.max_time,
        };
        self.emit(0.0, started);
        self.present(0, 0.0);
        Ok(&self.log[mark..])
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.log
    }

    pub fn into_events(self) -> Vec<SessionEvent> {
        self.log
    }

    pub fn is_finished(&self) -> bool {
        self.state.phase == Phase::Finished
    }

    /// Deadline of the try on screen.
    pub fn deadline(&self) -> Option<f64> {
        (self.state.phase == Phase::AwaitingResponse).then(|| self.current_deadline())
    }

    /// The responding player selects `object_id` at time `at`.
    ///
    /// A response exactly at the deadline counts. The try ends on the first
    /// response, correct or not.
    pub fn record_response(
        &mut self,
        object_id: &str,
        at: f64,
        player_position: Option<Vec3>,
    ) -> Result<(TryOutcome, &[SessionEvent]), EngineError> {
        self.ensure_awaiting()?;
        let start = self.state.try_started_at;
        let deadline = self.current_deadline();
        if !(at > start) {
            return Err(EngineError::ResponseTooEarly { at, start });
        }
        if !(at <= deadline) {
            return Err(EngineError::ResponseTooLate { at, deadline });
        }
        if !self.state.presented.iter().any(|o| o == object_id) {
            return Err(EngineError::UnknownObject(object_id.to_string()));
        }

        let response_time = (at - start).min(self.config.try_time);
        let outcome = if self.state.current_target.as_deref() == Some(object_id) {
            self.state.counters.correct += 1;
            self.state.crt_list.push(response_time);
            TryOutcome::Correct
        } else {
            self.state.counters.commissions += 1;
            TryOutcome::CommissionError
        };
        if player_position.is_some() {
            self.state.current_location = player_position;
        }

        let mark = self.log.len();
        let try_index = self.state.current_try;
        self.emit(
            at,
            EventKind::ResponseRecorded {
                try_index,
                object_id: object_id.to_string(),
                response_time,
                player_position,
            },
        );
        self.advance(at);
        Ok((outcome, &self.log[mark..]))
    }

    /// The timer armed for `try_index` fired at `at`. The omission is logged
    /// at the try deadline, however late the timer was delivered.
    pub fn deliver_timeout(&mut self, try_index: u32, at: f64) -> Result<&[SessionEvent], EngineError> {
        match self.state.phase {
            Phase::Idle => return Err(EngineError::NotAwaiting(Phase::Idle)),
            Phase::Finished => {
                return Err(if try_index < self.state.counters.resolved() {
                    EngineError::AlreadyResolved(try_index)
                } else {
                    EngineError::AlreadyFinished
                })
            }
            Phase::AwaitingResponse => {}
        }
        if try_index < self.state.current_try {
            return Err(EngineError::AlreadyResolved(try_index));
        }
        if try_index > self.state.current_try {
            return Err(EngineError::NotPresented(try_index));
        }
        let deadline = self.current_deadline();
        if !(at >= deadline) {
            return Err(EngineError::TimeoutTooEarly { at, deadline });
        }

        self.state.counters.omissions += 1;
        let mark = self.log.len();
        self.emit(deadline, EventKind::TryTimedOut { try_index });
        self.advance(deadline);
        Ok(&self.log[mark..])
    }

    /// The player quits at `at`. The try on screen and all tries never shown
    /// count as uncompleted.
    pub fn abort(&mut self, at: f64) -> Result<&[SessionEvent], EngineError> {
        self.ensure_awaiting()?;
        if !(at >= self.state.clock) {
            return Err(EngineError::ClockRegression { at, clock: self.state.clock });
        }
        let deadline = self.current_deadline();
        if at > deadline {
            return Err(EngineError::AbortAfterDeadline { at, deadline });
        }
        let resolved = self.state.counters.resolved();
        self.state.counters.uncompleted = self.config.planned_tries - resolved;
        let mark = self.log.len();
        self.emit(at, EventKind::SessionAborted { after_try_index: resolved.checked_sub(1) });
        self.state.phase = Phase::Finished;
        Ok(&self.log[mark..])
    }

    /// Counters of a finished session as a tally; `None` while running.
    pub fn live_tally(&self) -> Option<SessionTally> {
        if !self.is_finished() {
            return None;
        }
        let c = self.state.counters;
        Some(SessionTally {
            planned_tries: self.config.planned_tries,
            correct: c.correct,
            omissions: c.omissions,
            commissions: c.commissions,
            uncompleted: c.uncompleted,
            crt_list: self.state.crt_list.clone(),
            theta: self.config.try_time,
            gt: self.state.clock,
        })
    }

    /// Try start plus theta, capped at the level budget so accumulated
    /// rounding can never push the clock past `max_time`.
    fn current_deadline(&self) -> f64 {
        (self.state.try_started_at + self.config.try_time).min(self.config.max_time)
    }

    fn ensure_awaiting(&self) -> Result<(), EngineError> {
        match self.state.phase {
            Phase::AwaitingResponse => Ok(()),
            Phase::Finished => Err(EngineError::AlreadyFinished),
            p => Err(EngineError::NotAwaiting(p)),
        }
    }

    fn emit(&mut self, at: f64, kind: EventKind) {
        self.state.clock = at;
        self.log.push(SessionEvent {
            session_id: self.config.session_id.clone(),
            seq: self.log.len() as u64,
            at,
            kind,
        });
    }

    fn advance(&mut self, at: f64) {
        if self.state.counters.resolved() == self.config.planned_tries {
            self.emit(at, EventKind::SessionCompleted);
            self.state.phase = Phase::Finished;
            self.state.current_target = None;
            self.state.presented.clear();
        } else {
            self.present(self.state.current_try + 1, at);
        }
    }

    /// Draws the target, the distractors and their placements for a try.
    fn present(&mut self, try_index: u32, at: f64) {
        let pool = &self.config.object_pool;
        let mut rng = self.state.rng.for_try(try_index);

        let target = rng.random_range(0..pool.len());
        let others: Vec<usize> = (0..pool.len()).filter(|&i| i != target).collect();
        let picked = index::sample(&mut rng, others.len(), self.config.distractors_per_try as usize);
        let mut shown: Vec<usize> = std::iter::once(target)
            .chain(picked.iter().map(|i| others[i]))
            .collect();
        shown.shuffle(&mut rng);

        let placements: Vec<Placement> = shown
            .iter()
            .enumerate()
            .map(|(order, &i)| {
                let spec = &pool[i];
                let r = &spec.placement_region;
                let position = [
                    rng.random_range(r.min[0]..r.max[0]),
                    rng.random_range(r.min[1]..r.max[1]),
                    rng.random_range(r.min[2]..r.max[2]),
                ];
                Placement {
                    object_id: spec.object_id.clone(),
                    position,
                    appearance_offset: order as f64 * self.config.appearance_interval,
                }
            })
            .collect();

        let target_id = pool[target].object_id.clone();
        self.state.current_try = try_index;
        self.state.try_started_at = at;
        self.state.current_target = Some(target_id.clone());
        self.state.presented = placements.iter().map(|p| p.object_id.clone()).collect();
        self.state.phase = Phase::AwaitingResponse;
        self.emit(
            at,
            EventKind::TryPresented { try_index, target_object_id: target_id, placements },
        );
    }
}
