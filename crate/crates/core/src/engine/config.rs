use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EngineError;
use crate::domain::{is_valid_identifier, ObjectSpec};

/// Everything needed to run one game session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    pub patient_id: String,
    pub program_id: String,
    pub level_number: u32,
    /// Planned tries `T`.
    pub planned_tries: u32,
    /// Per-try budget `theta` in seconds.
    pub try_time: f64,
    /// Level budget in seconds.
    pub max_time: f64,
    pub object_pool: Vec<ObjectSpec>,
    pub distractors_per_try: u32,
    /// Seconds between successive object appearances within a try.
    pub appearance_interval: f64,
    /// Determines every randomized choice of the session.
    pub seed: u64,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        for (name, id) in [
            ("session_id", &self.session_id),
            ("patient_id", &self.patient_id),
            ("program_id", &self.program_id),
        ] {
            if !is_valid_identifier(id) {
                return bad(format!("{name} `{id}` is not a valid identifier"));
            }
        }
        if self.level_number == 0 {
            return bad("level_number must be at least 1".into());
        }
        if self.planned_tries == 0 {
            return bad("planned_tries must be at least 1".into());
        }
        if !(self.try_time.is_finite() && self.try_time > 0.0) {
            return bad(format!("try_time must be positive, got {}", self.try_time));
        }
        if !(self.max_time.is_finite() && self.max_time > 0.0) {
            return bad(format!("max_time must be positive, got {}", self.max_time));
        }
        if self.try_time * self.planned_tries as f64 > self.max_time {
            return bad("try_time x planned_tries exceeds max_time".into());
        }
        if !(self.appearance_interval.is_finite() && self.appearance_interval >= 0.0) {
            return bad("appearance_interval must be non-negative".into());
        }
        if self.distractors_per_try as usize + 1 > self.object_pool.len() {
            return bad(format!(
                "{} distractors need at least {} objects, pool has {}",
                self.distractors_per_try,
                self.distractors_per_try + 1,
                self.object_pool.len()
            ));
        }
        let mut seen = HashSet::new();
        for o in &self.object_pool {
            if !is_valid_identifier(&o.object_id) {
                return bad(format!("object id `{}` is not a valid identifier", o.object_id));
            }
            if !seen.insert(o.object_id.as_str()) {
                return bad(format!("object id `{}` appears twice", o.object_id));
            }
            let r = &o.placement_region;
            if !(0..3).all(|i| r.min[i].is_finite() && r.max[i].is_finite() && r.max[i] > r.min[i]) {
                return bad(format!("object `{}` has an empty placement region", o.object_id));
            }
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&bytes);
        hex::encode(&hash[..8])
    }
}
