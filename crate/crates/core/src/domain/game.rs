use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::check::{index, join, Checker, Object};
use super::Validated;

/// Seconds between consecutive object appearances within one try, used when
/// a level does not set its own interval.
pub const DEFAULT_APPEARANCE_INTERVAL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Cube,
    Sphere,
    Cone,
    Custom(String),
}

/// Axis-aligned box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Region {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub object_id: String,
    pub shape: Shape,
    /// Nominal diameter in meters.
    pub base_size: f64,
    pub placement_region: Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDefinition {
    pub level_number: u32,
    /// The maximum object set for this level.
    pub objects: Vec<ObjectSpec>,
    /// Whole-level budget in seconds.
    pub max_time: f64,
    /// Per-try budget in seconds.
    pub try_time: f64,
    pub tries_per_session: u32,
    pub distractors_per_try: u32,
    /// Guidance voice/sign description. Inert metadata.
    pub effects: Option<String>,
    /// Seconds between successive object appearances within a try.
    pub appearance_interval: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameType {
    DragAndDrop,
    MultipleChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameDefinition {
    pub id: String,
    #[serde(rename = "type")]
    pub game_type: GameType,
    /// Levels numbered `1..=n`, stored in order.
    pub levels: Vec<LevelDefinition>,
}

impl GameDefinition {
    pub fn max_level(&self) -> u32 {
        self.levels.len() as u32
    }

    pub fn level(&self, number: u32) -> Option<&LevelDefinition> {
        number
            .checked_sub(1)
            .and_then(|i| self.levels.get(i as usize))
    }
}

fn positive(c: &mut Checker, value: Option<f64>, field: &str, rule: &str) -> Option<f64> {
    match value {
        Some(x) if x > 0.0 => Some(x),
        Some(x) => {
            c.fail(field, rule, format!("must be positive, got {x}"));
            None
        }
        None => None,
    }
}

fn count(c: &mut Checker, obj: &Object, key: &str, path: &str, min: i64) -> Option<u32> {
    let n = c.integer(obj, key, path)?;
    if n < min {
        c.fail(
            join(path, key),
            &format!("{key}.min"),
            format!("must be at least {min}, got {n}"),
        );
        None
    } else if n > u32::MAX as i64 {
        c.fail(join(path, key), &format!("{key}.max"), "out of range");
        None
    } else {
        Some(n as u32)
    }
}

fn parse_shape(c: &mut Checker, obj: &Object, path: &str) -> Option<Shape> {
    let field = join(path, "shape");
    match obj.get("shape") {
        Some(Value::String(s)) => match s.as_str() {
            "cube" => Some(Shape::Cube),
            "sphere" => Some(Shape::Sphere),
            "cone" => Some(Shape::Cone),
            other => {
                c.fail(field, "type.enum", format!("unknown shape `{other}`"));
                None
            }
        },
        Some(Value::Object(m)) => match m.get("custom").and_then(Value::as_str) {
            Some(label) if !label.is_empty() && m.len() == 1 => Some(Shape::Custom(label.into())),
            _ => {
                c.fail(field, "shape.custom", "custom shape needs a non-empty `custom` label");
                None
            }
        },
        None | Some(Value::Null) => {
            c.fail(field, "field.missing", "`shape` is required");
            None
        }
        Some(_) => {
            c.fail(field, "type.enum", "expected a shape name or {\"custom\": label}");
            None
        }
    }
}

fn parse_object(c: &mut Checker, value: &Value, path: &str) -> Option<ObjectSpec> {
    let obj = c.object(value, path)?;
    let object_id = c.identifier(obj, "object_id", path, "object_id");
    let shape = parse_shape(c, obj, path);
    let base_size = c.number(obj, "base_size", path);
    let base_size = positive(c, base_size, &join(path, "base_size"), "base_size.positive");

    let region_path = join(path, "placement_region");
    let region = match obj.get("placement_region") {
        Some(v) => c.object(v, &region_path).and_then(|r| {
            let min = c.vec3(r, "min", &region_path);
            let max = c.vec3(r, "max", &region_path);
            let (min, max) = (min?, max?);
            if (0..3).all(|i| max[i] > min[i]) {
                Some(Region { min, max })
            } else {
                c.fail(
                    &region_path,
                    "placement_region.extent",
                    "region must have strictly positive extent on every axis",
                );
                None
            }
        }),
        None => {
            c.fail(&region_path, "field.missing", "`placement_region` is required");
            None
        }
    };

    Some(ObjectSpec {
        object_id: object_id?,
        shape: shape?,
        base_size: base_size?,
        placement_region: region?,
    })
}

pub(crate) fn parse_level(c: &mut Checker, value: &Value, path: &str) -> Option<LevelDefinition> {
    let obj = c.object(value, path)?;
    let level_number = count(c, obj, "level_number", path, 1);

    let objects = c.array(obj, "objects", path).and_then(|items| {
        if items.is_empty() {
            c.fail(join(path, "objects"), "objects.empty", "a level needs at least one object");
            return None;
        }
        let parsed: Vec<Option<ObjectSpec>> = items
            .iter()
            .enumerate()
            .map(|(i, v)| parse_object(c, v, &index(path, "objects", i)))
            .collect();
        let parsed: Option<Vec<ObjectSpec>> = parsed.into_iter().collect();
        let parsed = parsed?;
        let mut seen = HashSet::new();
        for (i, o) in parsed.iter().enumerate() {
            if !seen.insert(o.object_id.as_str()) {
                c.fail(
                    join(&index(path, "objects", i), "object_id"),
                    "object_id.duplicate",
                    format!("object id `{}` appears twice in this level", o.object_id),
                );
            }
        }
        Some(parsed)
    });

    let max_time = c.number(obj, "max_time", path);
    let max_time = positive(c, max_time, &join(path, "max_time"), "max_time.positive");
    let try_time = c.number(obj, "try_time", path);
    let try_time = positive(c, try_time, &join(path, "try_time"), "try_time.positive");
    let tries = count(c, obj, "tries_per_session", path, 1);
    let distractors = count(c, obj, "distractors_per_try", path, 0);
    let effects = c.opt_string(obj, "effects", path);
    let appearance_interval = c.opt_number(obj, "appearance_interval", path).and_then(|v| {
        let v = v.unwrap_or(DEFAULT_APPEARANCE_INTERVAL);
        if v < 0.0 {
            c.fail(
                join(path, "appearance_interval"),
                "appearance_interval.range",
                "appearance interval must be non-negative",
            );
            None
        } else {
            Some(v)
        }
    });

    if let (Some(theta), Some(t), Some(max)) = (try_time, tries, max_time) {
        if theta * t as f64 > max {
            c.fail(
                join(path, "try_time"),
                "level.budget",
                format!("try_time x tries_per_session = {} exceeds max_time {max}", theta * t as f64),
            );
        }
    }
    if let (Some(d), Some(objs)) = (distractors, objects.as_ref()) {
        if d as usize + 1 > objs.len() {
            c.fail(
                join(path, "distractors_per_try"),
                "level.distractors",
                format!(
                    "{d} distractors plus the target need {} objects, level has {}",
                    d + 1,
                    objs.len()
                ),
            );
        }
    }

    Some(LevelDefinition {
        level_number: level_number?,
        objects: objects?,
        max_time: max_time?,
        try_time: try_time?,
        tries_per_session: tries?,
        distractors_per_try: distractors?,
        effects: effects?,
        appearance_interval: appearance_interval?,
    })
}

pub fn validate_level(candidate: &Value) -> Validated<LevelDefinition> {
    let mut c = Checker::default();
    let level = parse_level(&mut c, candidate, "");
    c.finish(level)
}

/// Validates a game document: type, and levels numbered `1..=n` in order.
/// Difficulty ordering between levels is deliberately not checked.
pub fn validate_game(candidate: &Value) -> Validated<GameDefinition> {
    let mut c = Checker::default();
    let Some(obj) = c.object(candidate, "") else {
        return c.finish(None);
    };
    let id = c.identifier(obj, "id", "", "id");
    let game_type = c.enumeration(
        obj,
        "type",
        "",
        &[
            ("drag_and_drop", GameType::DragAndDrop),
            ("multiple_choice", GameType::MultipleChoice),
        ],
    );
    let levels = c.array(obj, "levels", "").and_then(|items| {
        if items.is_empty() {
            c.fail("levels", "levels.empty", "a game needs at least one level");
            return None;
        }
        let parsed: Vec<Option<LevelDefinition>> = items
            .iter()
            .enumerate()
            .map(|(i, v)| parse_level(&mut c, v, &index("", "levels", i)))
            .collect();
        for (i, level) in parsed.iter().enumerate() {
            if let Some(level) = level {
                if level.level_number as usize != i + 1 {
                    c.fail(
                        join(&index("", "levels", i), "level_number"),
                        "levels.contiguous",
                        format!("expected level {} at position {i}, found {}", i + 1, level.level_number),
                    );
                }
            }
        }
        parsed.into_iter().collect::<Option<Vec<_>>>()
    });

    let game = match (id, game_type, levels) {
        (Some(id), Some(game_type), Some(levels)) => Some(GameDefinition { id, game_type, levels }),
        _ => None,
    };
    c.finish(game)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use serde_json::json;

    pub(crate) fn object_json(id: &str) -> Value {
        json!({
            "object_id": id,
            "shape": "cube",
            "base_size": 0.2,
            "placement_region": {"min": [-1.0, 0.0, 1.0], "max": [1.0, 1.5, 3.0]}
        })
    }

    pub(crate) fn level_json(n: u32, objects: usize, tries: u32, try_time: f64, max_time: f64) -> Value {
        let objs: Vec<Value> = (0..objects).map(|i| object_json(&format!("o{i}"))).collect();
        json!({
            "level_number": n,
            "objects": objs,
            "max_time": max_time,
            "try_time": try_time,
            "tries_per_session": tries,
            "distractors_per_try": (objects as u32).saturating_sub(1).min(2),
        })
    }

    pub(crate) fn game_json(id: &str, levels: u32) -> Value {
        let lv: Vec<Value> = (1..=levels).map(|n| level_json(n, 4, 10, 5.0, 60.0)).collect();
        json!({"id": id, "type": "multiple_choice", "levels": lv})
    }

    fn rules(errs: &[super::super::ValidationError]) -> Vec<&str> {
        errs.iter().map(|e| e.rule.as_str()).collect()
    }

    #[test]
    fn valid_game_parses() {
        let g = validate_game(&game_json("g1", 3)).unwrap();
        assert_eq!(g.max_level(), 3);
        assert_eq!(g.level(2).unwrap().level_number, 2);
        assert!(g.level(0).is_none());
        assert!(g.level(4).is_none());
        assert_eq!(g.levels[0].appearance_interval, DEFAULT_APPEARANCE_INTERVAL);
    }

    #[test]
    fn level_budget_and_distractors() {
        let mut lv = level_json(1, 3, 10, 5.0, 40.0);
        lv["distractors_per_try"] = json!(3);
        let errs = validate_level(&lv).unwrap_err();
        assert_eq!(rules(&errs), ["level.budget", "level.distractors"]);
    }

    #[test]
    fn single_try_may_fill_the_budget() {
        assert!(validate_level(&level_json(1, 2, 1, 30.0, 30.0)).is_ok());
    }

    #[test]
    fn object_invariants_reported_individually() {
        let mut lv = level_json(1, 2, 1, 1.0, 10.0);
        lv["objects"][0]["base_size"] = json!(0.0);
        lv["objects"][1]["placement_region"]["max"][2] = json!(1.0);
        lv["objects"][1]["object_id"] = json!("o0");
        let errs = validate_level(&lv).unwrap_err();
        assert_eq!(
            rules(&errs),
            ["base_size.positive", "placement_region.extent"]
        );

        let mut lv = level_json(1, 2, 1, 1.0, 10.0);
        lv["objects"][1]["object_id"] = json!("o0");
        let errs = validate_level(&lv).unwrap_err();
        assert_eq!(rules(&errs), ["object_id.duplicate"]);
    }

    #[test]
    fn custom_shape() {
        let mut o = object_json("star");
        o["shape"] = json!({"custom": "star"});
        let mut lv = level_json(1, 1, 1, 1.0, 1.0);
        lv["objects"] = json!([o]);
        let level = validate_level(&lv).unwrap();
        assert_eq!(level.objects[0].shape, Shape::Custom("star".into()));
    }

    #[test]
    fn levels_must_be_contiguous() {
        let mut g = game_json("g", 3);
        g["levels"][2]["level_number"] = json!(4);
        let errs = validate_game(&g).unwrap_err();
        assert_eq!(rules(&errs), ["levels.contiguous"]);
    }

    #[test]
    fn difficulty_order_is_not_enforced() {
        let g = json!({
            "id": "g", "type": "drag_and_drop",
            "levels": [level_json(1, 6, 10, 2.0, 60.0), level_json(2, 2, 5, 9.0, 60.0)]
        });
        assert!(validate_game(&g).is_ok());
    }

    #[test]
    fn game_round_trip() {
        let g = validate_game(&game_json("g", 2)).unwrap();
        let back = validate_game(&serde_json::to_value(&g).unwrap()).unwrap();
        assert_eq!(back, g);
    }
}
