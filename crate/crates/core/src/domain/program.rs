use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::check::{index, join, Checker};
use super::game::{GameDefinition, LevelDefinition};
use super::profile::{DoctorProfile, PatientProfile};
use super::Validated;
use crate::engine::SessionConfig;

/// Doctor-configurable rule for moving a patient between levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressionPolicy {
    /// Advance when PI reaches this value. In `(0, 1]`.
    pub advance_threshold: f64,
    /// Regress when PI falls below this value. In `[0, advance_threshold)`.
    pub regress_threshold: f64,
    /// Sessions a patient must complete at a level before advancing.
    pub min_sessions_at_level: u32,
}

impl Default for ProgressionPolicy {
    fn default() -> Self {
        Self {
            advance_threshold: 0.7,
            regress_threshold: 0.3,
            min_sessions_at_level: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SessionSpec {
    pub game: String,
    pub level: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentProgram {
    pub program_id: String,
    pub session_specs: Vec<SessionSpec>,
    /// Whole-program cap in minutes.
    pub duration_cap: f64,
    pub progression_policy: ProgressionPolicy,
}

impl TreatmentProgram {
    /// The game the program's sessions are played in (that of its first spec).
    pub fn game_id(&self) -> &str {
        &self.session_specs[0].game
    }
}

/// The assembled treatment: references to a patient, doctor, game and
/// one or more programs, all resolvable in the catalog it was validated
/// against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Treatment {
    pub id: String,
    pub patient: String,
    pub doctor: String,
    pub game: String,
    pub programs: Vec<String>,
}

/// Read access to already-validated documents, used for cross-reference checks.
pub trait Catalog {
    fn patient(&self, id: &str) -> Option<PatientProfile>;
    fn doctor(&self, id: &str) -> Option<DoctorProfile>;
    fn game(&self, id: &str) -> Option<GameDefinition>;
    fn program(&self, id: &str) -> Option<TreatmentProgram>;
}

#[derive(Debug, Clone, Default)]
pub struct MemoryCatalog {
    pub patients: HashMap<String, PatientProfile>,
    pub doctors: HashMap<String, DoctorProfile>,
    pub games: HashMap<String, GameDefinition>,
    pub programs: HashMap<String, TreatmentProgram>,
}

impl Catalog for MemoryCatalog {
    fn patient(&self, id: &str) -> Option<PatientProfile> {
        self.patients.get(id).cloned()
    }
    fn doctor(&self, id: &str) -> Option<DoctorProfile> {
        self.doctors.get(id).cloned()
    }
    fn game(&self, id: &str) -> Option<GameDefinition> {
        self.games.get(id).cloned()
    }
    fn program(&self, id: &str) -> Option<TreatmentProgram> {
        self.programs.get(id).cloned()
    }
}

fn parse_policy(c: &mut Checker, value: &Value, path: &str) -> Option<ProgressionPolicy> {
    let obj = c.object(value, path)?;
    let advance = c.number(obj, "advance_threshold", path).and_then(|a| {
        if a > 0.0 && a <= 1.0 {
            Some(a)
        } else {
            c.fail(
                join(path, "advance_threshold"),
                "advance_threshold.range",
                format!("advance threshold must lie in (0, 1], got {a}"),
            );
            None
        }
    });
    let regress = c.number(obj, "regress_threshold", path).and_then(|r| {
        if r >= 0.0 {
            Some(r)
        } else {
            c.fail(
                join(path, "regress_threshold"),
                "regress_threshold.range",
                format!("regress threshold must be non-negative, got {r}"),
            );
            None
        }
    });
    let min_sessions = c.integer(obj, "min_sessions_at_level", path).and_then(|n| {
        if (1..=u32::MAX as i64).contains(&n) {
            Some(n as u32)
        } else {
            c.fail(
                join(path, "min_sessions_at_level"),
                "min_sessions_at_level.min",
                format!("must be at least 1, got {n}"),
            );
            None
        }
    });
    let (advance, regress, min_sessions) = (advance?, regress?, min_sessions?);
    if regress >= advance {
        c.fail(
            join(path, "regress_threshold"),
            "policy.order",
            format!("regress threshold {regress} must be below advance threshold {advance}"),
        );
        return None;
    }
    Some(ProgressionPolicy {
        advance_threshold: advance,
        regress_threshold: regress,
        min_sessions_at_level: min_sessions,
    })
}

/// Validates a program document and resolves each `(game, level)` it names.
pub fn validate_program(candidate: &Value, catalog: &dyn Catalog) -> Validated<TreatmentProgram> {
    let mut c = Checker::default();
    let Some(obj) = c.object(candidate, "") else {
        return c.finish(None);
    };
    let program_id = c.identifier(obj, "program_id", "", "program_id");
    let specs = c.array(obj, "session_specs", "").and_then(|items| {
        if items.is_empty() {
            c.fail("session_specs", "session_specs.empty", "a program needs at least one session");
            return None;
        }
        let parsed: Vec<Option<SessionSpec>> = items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let path = index("", "session_specs", i);
                let o = c.object(v, &path)?;
                let game = c.identifier(o, "game", &path, "game");
                let level = c.integer(o, "level", &path).and_then(|l| {
                    if (1..=u32::MAX as i64).contains(&l) {
                        Some(l as u32)
                    } else {
                        c.fail(join(&path, "level"), "level.min", "level must be at least 1");
                        None
                    }
                });
                Some(SessionSpec { game: game?, level: level? })
            })
            .collect();
        parsed.into_iter().collect::<Option<Vec<_>>>()
    });
    let duration_cap = c.number(obj, "duration_cap", "").and_then(|d| {
        if d > 0.0 {
            Some(d)
        } else {
            c.fail("duration_cap", "duration_cap.positive", format!("must be positive, got {d}"));
            None
        }
    });
    let policy = match obj.get("progression_policy") {
        Some(v) => parse_policy(&mut c, v, "progression_policy"),
        None => {
            c.fail("progression_policy", "field.missing", "`progression_policy` is required");
            None
        }
    };

    if let Some(specs) = &specs {
        let mut games: HashMap<&str, Option<GameDefinition>> = HashMap::new();
        for (i, spec) in specs.iter().enumerate() {
            let path = index("", "session_specs", i);
            let game = games
                .entry(spec.game.as_str())
                .or_insert_with(|| catalog.game(&spec.game));
            match game {
                None => c.fail(
                    join(&path, "game"),
                    "reference.game",
                    format!("unknown game `{}`", spec.game),
                ),
                Some(g) => match g.level(spec.level) {
                    None => c.fail(
                        join(&path, "level"),
                        "reference.level",
                        format!("game `{}` has no level {}", spec.game, spec.level),
                    ),
                    Some(level) => {
                        if let Some(cap) = duration_cap {
                            if cap * 60.0 < level.max_time {
                                c.fail(
                                    "duration_cap",
                                    "duration_cap.level",
                                    format!(
                                        "cap of {cap} min is shorter than level {} ({} s)",
                                        spec.level, level.max_time
                                    ),
                                );
                            }
                        }
                    }
                },
            }
        }
    }

    let program = match (program_id, specs, duration_cap, policy) {
        (Some(program_id), Some(session_specs), Some(duration_cap), Some(progression_policy)) => {
            Some(TreatmentProgram {
                program_id,
                session_specs,
                duration_cap,
                progression_policy,
            })
        }
        _ => None,
    };
    c.finish(program)
}

/// Validates a treatment assembly against already-validated profiles.
pub fn validate_treatment(candidate: &Value, catalog: &dyn Catalog) -> Validated<Treatment> {
    let mut c = Checker::default();
    let Some(obj) = c.object(candidate, "") else {
        return c.finish(None);
    };
    let id = c.identifier(obj, "id", "", "id");
    let patient_id = c.identifier(obj, "patient", "", "patient");
    let doctor_id = c.identifier(obj, "doctor", "", "doctor");
    let game_id = c.identifier(obj, "game", "", "game");
    let program_ids = c.array(obj, "programs", "").and_then(|items| {
        if items.is_empty() {
            c.fail("programs", "programs.empty", "a treatment needs at least one program");
            return None;
        }
        let ids: Vec<Option<String>> = items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let field = index("", "programs", i);
                match v.as_str() {
                    Some(s) => c.check_identifier(s, &field, "program").then(|| s.to_string()),
                    None => {
                        c.fail(field, "type.string", "expected a program id");
                        None
                    }
                }
            })
            .collect();
        ids.into_iter().collect::<Option<Vec<_>>>()
    });

    let patient = patient_id.as_deref().and_then(|p| {
        let found = catalog.patient(p);
        if found.is_none() {
            c.fail("patient", "reference.patient", format!("unknown patient `{p}`"));
        }
        found
    });
    if let Some(d) = doctor_id.as_deref() {
        if catalog.doctor(d).is_none() {
            c.fail("doctor", "reference.doctor", format!("unknown doctor `{d}`"));
        }
    }
    let game = game_id.as_deref().and_then(|g| {
        let found = catalog.game(g);
        if found.is_none() {
            c.fail("game", "reference.game", format!("unknown game `{g}`"));
        }
        found
    });

    if let (Some(p), Some(g)) = (&patient, &game) {
        if p.level > g.max_level() {
            c.fail(
                "patient",
                "patient.level_range",
                format!(
                    "patient `{}` is at level {} but game `{}` has levels 1..={}",
                    p.id,
                    p.level,
                    g.id,
                    g.max_level()
                ),
            );
        }
    }

    if let Some(ids) = &program_ids {
        let mut seen = HashSet::new();
        for (i, pid) in ids.iter().enumerate() {
            let field = index("", "programs", i);
            if !seen.insert(pid.as_str()) {
                c.fail(&field, "programs.duplicate", format!("program `{pid}` listed twice"));
                continue;
            }
            let Some(program) = catalog.program(pid) else {
                c.fail(&field, "reference.program", format!("unknown program `{pid}`"));
                continue;
            };
            let Some(g) = &game else { continue };
            for (j, spec) in program.session_specs.iter().enumerate() {
                if spec.game != g.id {
                    c.fail(
                        format!("{field}.session_specs[{j}].game"),
                        "program.game_mismatch",
                        format!("program `{pid}` plays `{}`, treatment game is `{}`", spec.game, g.id),
                    );
                } else if g.level(spec.level).is_none() {
                    c.fail(
                        format!("{field}.session_specs[{j}].level"),
                        "reference.level",
                        format!("program `{pid}` references level {} of `{}`", spec.level, g.id),
                    );
                }
            }
        }
    }

    let treatment = match (id, patient_id, doctor_id, game_id, program_ids) {
        (Some(id), Some(patient), Some(doctor), Some(game), Some(programs)) => Some(Treatment {
            id,
            patient,
            doctor,
            game,
            programs,
        }),
        _ => None,
    };
    c.finish(treatment)
}

/// Identity and seed of the session being configured.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionIdentity {
    pub session_id: String,
    pub patient_id: String,
    pub seed: u64,
}

/// Projects a level and the program it is played under onto the run-time
/// configuration of one game session.
pub fn derive_session_config(
    level: &LevelDefinition,
    program: &TreatmentProgram,
    identity: &SessionIdentity,
) -> SessionConfig {
    SessionConfig {
        session_id: identity.session_id.clone(),
        patient_id: identity.patient_id.clone(),
        program_id: program.program_id.clone(),
        level_number: level.level_number,
        planned_tries: level.tries_per_session,
        try_time: level.try_time,
        max_time: level.max_time,
        object_pool: level.objects.clone(),
        distractors_per_try: level.distractors_per_try,
        appearance_interval: level.appearance_interval,
        seed: identity.seed,
    }
}
