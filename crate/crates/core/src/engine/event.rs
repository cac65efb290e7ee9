use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

/// One object shown during a try.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub object_id: String,
    pub position: Vec3,
    /// Seconds after the try starts at which the object becomes visible.
    pub appearance_offset: f64,
}

/// Append-only record of something that happened during a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub session_id: String,
    /// Position in the session log, contiguous from 0.
    pub seq: u64,
    /// Seconds since session start.
    pub at: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    SessionStarted {
        digest: String,
        patient_id: String,
        program_id: String,
        level: u32,
        planned_tries: u32,
        try_time: f64,
        max_time: f64,
    },
    TryPresented {
        try_index: u32,
        target_object_id: String,
        placements: Vec<Placement>,
    },
    ResponseRecorded {
        try_index: u32,
        object_id: String,
        response_time: f64,
        /// `None` when positions are redacted.
        player_position: Option<Vec3>,
    },
    TryTimedOut {
        try_index: u32,
    },
    SessionAborted {
        /// Last resolved try, `None` if no try was resolved.
        after_try_index: Option<u32>,
    },
    SessionCompleted,
}

impl EventKind {
    pub fn is_terminal(&self) -> bool {
        matches!(self, EventKind::SessionAborted { .. } | EventKind::SessionCompleted)
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::SessionStarted { .. } => "session_started",
            EventKind::TryPresented { .. } => "try_presented",
            EventKind::ResponseRecorded { .. } => "response_recorded",
            EventKind::TryTimedOut { .. } => "try_timed_out",
            EventKind::SessionAborted { .. } => "session_aborted",
            EventKind::SessionCompleted => "session_completed",
        }
    }
}

impl SessionEvent {
    pub fn is_terminal(&self) -> bool {
        self.kind.is_terminal()
    }
}
