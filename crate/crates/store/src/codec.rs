//! Line-record encoding of session events.
//!
//! One event per line, `key=value` tokens separated by single spaces, keys
//! in a fixed order: `session_id seq at kind` followed by the fields of the
//! kind. Numbers use Rust's shortest round-trip decimal form. Identifiers
//! are restricted to `[A-Za-z0-9._-]`, so no value needs escaping.
//!
//! ```text
//! session_id=p001-s0000 seq=0 at=0 kind=session_started digest=9f86d081884c7d65 patient=p001 program=prog level=1 planned_tries=10 try_time=5 max_time=60
//! session_id=p001-s0000 seq=1 at=0 kind=try_presented try=0 target=o2 placements=o2@0.1,1.2,2+0;o0@-0.5,0.3,1.5+0.5
//! session_id=p001-s0000 seq=2 at=1.25 kind=response_recorded try=0 object=o2 rt=1.25 pos=-
//! session_id=p001-s0000 seq=3 at=6.25 kind=try_timed_out try=1
//! session_id=p001-s0000 seq=4 at=7 kind=session_aborted after_try=1
//! ```

use artherapist_core::domain::is_valid_identifier;
use artherapist_core::engine::{EventKind, Placement, SessionEvent, Vec3};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct CodecError(pub String);

fn err<T>(msg: impl Into<String>) -> Result<T, CodecError> {
    Err(CodecError(msg.into()))
}

fn ident(field: &str, s: &str) -> Result<String, CodecError> {
    if is_valid_identifier(s) {
        Ok(s.to_string())
    } else {
        err(format!("{field}: `{s}` is not a valid identifier"))
    }
}

fn hex(field: &str, s: &str) -> Result<String, CodecError> {
    if !s.is_empty() && s.bytes().all(|b| b.is_ascii_hexdigit()) {
        Ok(s.to_string())
    } else {
        err(format!("{field}: `{s}` is not a hex digest"))
    }
}

fn num(field: &str, x: f64) -> Result<String, CodecError> {
    if x.is_finite() {
        Ok(x.to_string())
    } else {
        err(format!("{field}: {x} is not finite"))
    }
}

fn vec3(field: &str, v: &Vec3) -> Result<String, CodecError> {
    Ok(format!("{},{},{}", num(field, v[0])?, num(field, v[1])?, num(field, v[2])?))
}

/// Encodes one event as a line without the trailing newline. With `redact`
/// the player position is written as `-`.
pub fn encode_event(e: &SessionEvent, redact: bool) -> Result<String, CodecError> {
    let mut line = format!(
        "session_id={} seq={} at={} kind={}",
        ident("session_id", &e.session_id)?,
        e.seq,
        num("at", e.at)?,
        e.kind.name()
    );
    let mut push = |k: &str, v: String| {
        line.push(' ');
        line.push_str(k);
        line.push('=');
        line.push_str(&v);
    };
    match &e.kind {
        EventKind::SessionStarted { digest, patient_id, program_id, level, planned_tries, try_time, max_time } => {
            push("digest", hex("digest", digest)?);
            push("patient", ident("patient", patient_id)?);
            push("program", ident("program", program_id)?);
            push("level", level.to_string());
            push("planned_tries", planned_tries.to_string());
            push("try_time", num("try_time", *try_time)?);
            push("max_time", num("max_time", *max_time)?);
        }
        EventKind::TryPresented { try_index, target_object_id, placements } => {
            push("try", try_index.to_string());
            push("target", ident("target", target_object_id)?);
            let parts = placements
                .iter()
                .map(|p| {
                    Ok(format!(
                        "{}@{}+{}",
                        ident("placements", &p.object_id)?,
                        vec3("placements", &p.position)?,
                        num("placements", p.appearance_offset)?
                    ))
                })
                .collect::<Result<Vec<_>, CodecError>>()?;
            push("placements", parts.join(";"));
        }
        EventKind::ResponseRecorded { try_index, object_id, response_time, player_position } => {
            push("try", try_index.to_string());
            push("object", ident("object", object_id)?);
            push("rt", num("rt", *response_time)?);
            let pos = match player_position {
                Some(p) if !redact => vec3("pos", p)?,
                _ => "-".to_string(),
            };
            push("pos", pos);
        }
        EventKind::TryTimedOut { try_index } => push("try", try_index.to_string()),
        EventKind::SessionAborted { after_try_index } => {
            push("after_try", after_try_index.map(|i| i.to_string()).unwrap_or_else(|| "-".into()))
        }
        EventKind::SessionCompleted => {}
    }
    Ok(line)
}

struct Fields<'a> {
    tokens: std::str::Split<'a, char>,
}

impl<'a> Fields<'a> {
    fn next(&mut self, key: &str) -> Result<&'a str, CodecError> {
        let Some(tok) = self.tokens.next() else {
            return err(format!("missing field `{key}`"));
        };
        match tok.split_once('=') {
            Some((k, v)) if k == key => Ok(v),
            Some((k, _)) => err(format!("expected field `{key}`, found `{k}`")),
            None => err(format!("malformed token `{tok}`, expected `{key}=...`")),
        }
    }

    fn end(mut self) -> Result<(), CodecError> {
        match self.tokens.next() {
            None => Ok(()),
            Some(tok) => err(format!("unexpected trailing token `{tok}`")),
        }
    }
}

fn parse_f64(field: &str, s: &str) -> Result<f64, CodecError> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => err(format!("{field}: `{s}` is not a finite number")),
    }
}

fn parse_u32(field: &str, s: &str) -> Result<u32, CodecError> {
    s.parse().map_err(|_| CodecError(format!("{field}: `{s}` is not an unsigned integer")))
}

fn parse_vec3(field: &str, s: &str) -> Result<Vec3, CodecError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return err(format!("{field}: `{s}` is not x,y,z"));
    }
    Ok([parse_f64(field, parts[0])?, parse_f64(field, parts[1])?, parse_f64(field, parts[2])?])
}

fn parse_placement(s: &str) -> Result<Placement, CodecError> {
    let (id, rest) = s.split_once('@').ok_or_else(|| CodecError(format!("placement `{s}` lacks `@`")))?;
    let (pos, offset) = rest.split_once('+').ok_or_else(|| CodecError(format!("placement `{s}` lacks `+`")))?;
    Ok(Placement {
        object_id: ident("placements", id)?,
        position: parse_vec3("placements", pos)?,
        appearance_offset: parse_f64("placements", offset)?,
    })
}

/// Parses one line (without its newline).
pub fn decode_line(line: &str) -> Result<SessionEvent, CodecError> {
    let mut f = Fields { tokens: line.split(' ') };
    let session_id = ident("session_id", f.next("session_id")?)?;
    let seq_s = f.next("seq")?;
    let seq = seq_s.parse().map_err(|_| CodecError(format!("seq: `{seq_s}` is not an unsigned integer")))?;
    let at = parse_f64("at", f.next("at")?)?;
    let kind = match f.next("kind")? {
        "session_started" => EventKind::SessionStarted {
            digest: hex("digest", f.next("digest")?)?,
            patient_id: ident("patient", f.next("patient")?)?,
            program_id: ident("program", f.next("program")?)?,
            level: parse_u32("level", f.next("level")?)?,
            planned_tries: parse_u32("planned_tries", f.next("planned_tries")?)?,
            try_time: parse_f64("try_time", f.next("try_time")?)?,
            max_time: parse_f64("max_time", f.next("max_time")?)?,
        },
        "try_presented" => {
            let try_index = parse_u32("try", f.next("try")?)?;
            let target_object_id = ident("target", f.next("target")?)?;
            let raw = f.next("placements")?;
            let placements = if raw.is_empty() {
                Vec::new()
            } else {
                raw.split(';').map(parse_placement).collect::<Result<_, _>>()?
            };
            EventKind::TryPresented { try_index, target_object_id, placements }
        }
        "response_recorded" => {
            let try_index = parse_u32("try", f.next("try")?)?;
            let object_id = ident("object", f.next("object")?)?;
            let response_time = parse_f64("rt", f.next("rt")?)?;
            let player_position = match f.next("pos")? {
                "-" => None,
                p => Some(parse_vec3("pos", p)?),
            };
            EventKind::ResponseRecorded { try_index, object_id, response_time, player_position }
        }
        "try_timed_out" => EventKind::TryTimedOut { try_index: parse_u32("try", f.next("try")?)? },
        "session_aborted" => EventKind::SessionAborted {
            after_try_index: match f.next("after_try")? {
                "-" => None,
                n => Some(parse_u32("after_try", n)?),
            },
        },
        "session_completed" => EventKind::SessionCompleted,
        other => return err(format!("unknown event kind `{other}`")),
    };
    f.end()?;
    Ok(SessionEvent { session_id, seq, at, kind })
}
