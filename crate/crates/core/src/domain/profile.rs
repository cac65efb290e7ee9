use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::check::{index, join, Checker};
use super::Validated;

/// A patient enrolled in treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub id: String,
    /// Current treatment level, starting at 1.
    pub level: u32,
    /// Most recent performance index; `None` before the first scored session.
    pub performance_index: Option<f64>,
    /// Opaque comorbidity / configuration tags. Not interpreted by the engine.
    pub preferences: BTreeSet<String>,
}

impl PatientProfile {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            level: 1,
            performance_index: None,
            preferences: BTreeSet::new(),
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("profile serializes")
    }
}

/// Validates a raw patient document, reporting every violated invariant.
pub fn validate_patient_profile(candidate: &Value) -> Validated<PatientProfile> {
    let mut c = Checker::default();
    let Some(obj) = c.object(candidate, "") else {
        return c.finish(None);
    };

    let id = c.identifier(obj, "id", "", "id");

    let level = c.integer(obj, "level", "").and_then(|l| {
        if l < 1 {
            c.fail("level", "level.min", format!("level must be at least 1, got {l}"));
            None
        } else if l > u32::MAX as i64 {
            c.fail("level", "level.max", "level is out of range");
            None
        } else {
            Some(l as u32)
        }
    });

    let performance_index = c.opt_number(obj, "performance_index", "").and_then(|pi| match pi {
        Some(x) if !(0.0..=1.0).contains(&x) => {
            c.fail(
                "performance_index",
                "performance_index.range",
                format!("performance index must lie in [0, 1], got {x}"),
            );
            None
        }
        other => Some(other),
    });

    let preferences = match obj.get("preferences") {
        None | Some(Value::Null) => Some(BTreeSet::new()),
        Some(Value::Array(items)) => {
            let mut set = BTreeSet::new();
            let mut ok = true;
            for (i, item) in items.iter().enumerate() {
                match item.as_str() {
                    Some(s) if !s.is_empty() => {
                        set.insert(s.to_string());
                    }
                    Some(_) => {
                        c.fail(index("", "preferences", i), "preference.empty", "empty tag");
                        ok = false;
                    }
                    None => {
                        c.fail(index("", "preferences", i), "type.string", "expected a string");
                        ok = false;
                    }
                }
            }
            ok.then_some(set)
        }
        Some(_) => {
            c.fail(join("", "preferences"), "type.array", "expected an array of strings");
            None
        }
    };

    let profile = match (id, level, performance_index, preferences) {
        (Some(id), Some(level), Some(performance_index), Some(preferences)) => Some(PatientProfile {
            id,
            level,
            performance_index,
            preferences,
        }),
        _ => None,
    };
    c.finish(profile)
}

/// Ordered experience grade. Senior and expert doctors may read raw event logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experience {
    Junior,
    Senior,
    Expert,
}

impl Experience {
    pub fn may_read_event_logs(self) -> bool {
        self >= Experience::Senior
    }
}

/// How far a doctor takes part in the treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Involvement {
    Monitor,
    Guide,
    Full,
}

impl Involvement {
    pub fn may_override_level(self) -> bool {
        self >= Involvement::Guide
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoctorProfile {
    pub id: String,
    pub experience: Experience,
    pub involvement: Involvement,
}

pub fn validate_doctor(candidate: &Value) -> Validated<DoctorProfile> {
    let mut c = Checker::default();
    let Some(obj) = c.object(candidate, "") else {
        return c.finish(None);
    };
    let id = c.identifier(obj, "id", "", "id");
    let experience = c.enumeration(
        obj,
        "experience",
        "",
        &[
            ("junior", Experience::Junior),
            ("senior", Experience::Senior),
            ("expert", Experience::Expert),
        ],
    );
    let involvement = c.enumeration(
        obj,
        "involvement",
        "",
        &[
            ("monitor", Involvement::Monitor),
            ("guide", Involvement::Guide),
            ("full", Involvement::Full),
        ],
    );
    let doctor = match (id, experience, involvement) {
        (Some(id), Some(experience), Some(involvement)) => Some(DoctorProfile {
            id,
            experience,
            involvement,
        }),
        _ => None,
    };
    c.finish(doctor)
}
