use serde_json::{Map, Value};

use super::{is_valid_identifier, ValidationError, MAX_ID_LEN};

pub(crate) type Object = Map<String, Value>;

pub(crate) fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

pub(crate) fn index(path: &str, key: &str, i: usize) -> String {
    format!("{}[{i}]", join(path, key))
}

/// Collects violations while extracting typed fields from a JSON object.
#[derive(Debug, Default)]
pub(crate) struct Checker {
    pub errors: Vec<ValidationError>,
}

impl Checker {
    pub fn fail(&mut self, field: impl Into<String>, rule: &str, message: impl Into<String>) {
        self.errors.push(ValidationError::new(field, rule, message));
    }

    pub fn finish<T>(self, value: Option<T>) -> Result<T, Vec<ValidationError>> {
        match value {
            Some(v) if self.errors.is_empty() => Ok(v),
            _ => {
                let mut errors = self.errors;
                if errors.is_empty() {
                    // Unreachable in practice: every None path records a violation.
                    errors.push(ValidationError::new("", "document.invalid", "invalid document"));
                }
                Err(errors)
            }
        }
    }

    pub fn object<'v>(&mut self, value: &'v Value, path: &str) -> Option<&'v Object> {
        match value.as_object() {
            Some(o) => Some(o),
            None => {
                self.fail(path, "type.object", "expected an object");
                None
            }
        }
    }

    fn required<'v>(&mut self, obj: &'v Object, key: &str, path: &str) -> Option<&'v Value> {
        match obj.get(key) {
            Some(Value::Null) | None => {
                self.fail(join(path, key), "field.missing", format!("`{key}` is required"));
                None
            }
            Some(v) => Some(v),
        }
    }

    pub fn string(&mut self, obj: &Object, key: &str, path: &str) -> Option<String> {
        let v = self.required(obj, key, path)?;
        match v.as_str() {
            Some(s) => Some(s.to_string()),
            None => {
                self.fail(join(path, key), "type.string", "expected a string");
                None
            }
        }
    }

    pub fn opt_string(&mut self, obj: &Object, key: &str, path: &str) -> Option<Option<String>> {
        match obj.get(key) {
            None | Some(Value::Null) => Some(None),
            Some(Value::String(s)) => Some(Some(s.clone())),
            Some(_) => {
                self.fail(join(path, key), "type.string", "expected a string");
                None
            }
        }
    }

    /// Required opaque identifier. `rule_prefix` names the rule family, e.g.
    /// `id` yields `id.empty` / `id.charset`.
    pub fn identifier(
        &mut self,
        obj: &Object,
        key: &str,
        path: &str,
        rule_prefix: &str,
    ) -> Option<String> {
        let s = self.string(obj, key, path)?;
        self.check_identifier(&s, &join(path, key), rule_prefix)
            .then_some(s)
    }

    pub fn check_identifier(&mut self, s: &str, field: &str, rule_prefix: &str) -> bool {
        if s.is_empty() {
            self.fail(field, &format!("{rule_prefix}.empty"), "must not be empty");
            false
        } else if !is_valid_identifier(s) {
            self.fail(
                field,
                &format!("{rule_prefix}.charset"),
                format!(
                    "must match [A-Za-z0-9][A-Za-z0-9._-]* and be at most {MAX_ID_LEN} bytes"
                ),
            );
            false
        } else {
            true
        }
    }

    /// Required integer. Non-integral or negative numbers are reported as a
    /// type violation; range checks are left to the caller.
    pub fn integer(&mut self, obj: &Object, key: &str, path: &str) -> Option<i64> {
        let v = self.required(obj, key, path)?;
        match v.as_i64() {
            Some(n) => Some(n),
            None => {
                self.fail(join(path, key), "type.integer", "expected an integer");
                None
            }
        }
    }

    pub fn number(&mut self, obj: &Object, key: &str, path: &str) -> Option<f64> {
        let v = self.required(obj, key, path)?;
        self.as_number(v, &join(path, key))
    }

    pub fn opt_number(&mut self, obj: &Object, key: &str, path: &str) -> Option<Option<f64>> {
        match obj.get(key) {
            None | Some(Value::Null) => Some(None),
            Some(v) => self.as_number(v, &join(path, key)).map(Some),
        }
    }

    fn as_number(&mut self, v: &Value, field: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.fail(field, "type.number", "expected a finite number");
                None
            }
        }
    }

    pub fn array<'v>(&mut self, obj: &'v Object, key: &str, path: &str) -> Option<&'v Vec<Value>> {
        let v = self.required(obj, key, path)?;
        match v.as_array() {
            Some(a) => Some(a),
            None => {
                self.fail(join(path, key), "type.array", "expected an array");
                None
            }
        }
    }

    pub fn vec3(&mut self, obj: &Object, key: &str, path: &str) -> Option<[f64; 3]> {
        let field = join(path, key);
        let arr = self.array(obj, key, path)?;
        if arr.len() != 3 {
            self.fail(&field, "type.vec3", "expected exactly three coordinates");
            return None;
        }
        let mut out = [0.0; 3];
        let mut ok = true;
        for (i, v) in arr.iter().enumerate() {
            match self.as_number(v, &format!("{field}[{i}]")) {
                Some(x) => out[i] = x,
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    pub fn enumeration<T: Copy>(
        &mut self,
        obj: &Object,
        key: &str,
        path: &str,
        options: &[(&str, T)],
    ) -> Option<T> {
        let s = self.string(obj, key, path)?;
        match options.iter().find(|(name, _)| *name == s) {
            Some((_, v)) => Some(*v),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.fail(
                    join(path, key),
                    "type.enum",
                    format!("`{s}` is not one of {}", names.join(", ")),
                );
                None
            }
        }
    }
}
