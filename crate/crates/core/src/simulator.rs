//! Synthetic patients that play sessions through the engine.
//!
//! Each try is decided in a fixed order: quit with probability
//! `dropout_hazard`; otherwise answer impulsively with probability
//! `impulsivity`, picking any presented object; otherwise find the target
//! with probability `attention`; otherwise let the try time out. Response
//! times are lognormal and clamped at the try budget. Impulsive answers use
//! a location half a log-second faster.

use std::io;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ValidationError;
use crate::engine::{EngineError, GameSession, SessionConfig};
use crate::metrics::{compute_session_metrics, SessionMetrics};
use crate::rng::{child_seed, SeedStream};

/// Shift of the impulsive response-time location, in log-seconds.
pub const IMPULSIVE_SHIFT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorParams {
    pub attention: f64,
    pub impulsivity: f64,
    #[serde(default)]
    pub rt_log_mean: f64,
    #[serde(default = "default_rt_log_sd")]
    pub rt_log_sd: f64,
    #[serde(default)]
    pub dropout_hazard: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_rt_log_sd() -> f64 {
    0.5
}

impl Default for BehaviorParams {
    fn default() -> Self {
        Self {
            attention: 0.8,
            impulsivity: 0.1,
            rt_log_mean: 0.0,
            rt_log_sd: default_rt_log_sd(),
            dropout_hazard: 0.0,
            seed: 0,
        }
    }
}

impl BehaviorParams {
    /// Dropout is accepted up to and including 1, which models a patient who
    /// quits before answering anything.
    pub fn validate(&self) -> Result<(), Vec<ValidationError>> {
        let mut errors = Vec::new();
        let mut prob = |field: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) {
                errors.push(ValidationError::new(field, "probability.range", format!("{field} must be in [0, 1], got {v}")));
            }
        };
        prob("attention", self.attention);
        prob("impulsivity", self.impulsivity);
        prob("dropout_hazard", self.dropout_hazard);
        if !self.rt_log_mean.is_finite() {
            errors.push(ValidationError::new("rt_log_mean", "type.number", "rt_log_mean must be finite"));
        }
        if !(self.rt_log_sd.is_finite() && self.rt_log_sd > 0.0) {
            errors.push(ValidationError::new("rt_log_sd", "rt_log_sd.positive", "rt_log_sd must be positive"));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimAction {
    /// Select `object_id` `t` seconds after the try started.
    Respond { object_id: String, t: f64 },
    NoResponse,
    Quit,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid behaviour parameters: {}", list(.0))]
    InvalidParams(Vec<ValidationError>),
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("sessions per cell must be at least 1")]
    NoSessions,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn list(errors: &[ValidationError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

/// Decides one try. `presented` must contain `target`.
pub fn simulate_try<R: Rng + ?Sized>(
    params: &BehaviorParams,
    presented: &[String],
    target: &str,
    theta: f64,
    rng: &mut R,
) -> SimAction {
    if rng.random_bool(params.dropout_hazard) {
        return SimAction::Quit;
    }
    if rng.random_bool(params.impulsivity) {
        let object_id = presented.choose(rng).expect("a try presents at least one object").clone();
        let t = response_time(params.rt_log_mean - IMPULSIVE_SHIFT, params.rt_log_sd, theta, rng);
        return SimAction::Respond { object_id, t };
    }
    if rng.random_bool(params.attention) {
        let t = response_time(params.rt_log_mean, params.rt_log_sd, theta, rng);
        return SimAction::Respond { object_id: target.to_string(), t };
    }
    SimAction::NoResponse
}

/// Lognormal draw clamped into (0, theta].
fn response_time<R: Rng + ?Sized>(mu: f64, sd: f64, theta: f64, rng: &mut R) -> f64 {
    let t = LogNormal::new(mu, sd).expect("validated parameters").sample(rng);
    t.min(theta).max(f64::MIN_POSITIVE)
}

/// Plays a whole session. Deterministic in `(params.seed, config.seed)`.
pub fn simulate_session(params: &BehaviorParams, config: SessionConfig) -> Result<GameSession, SimError> {
    params.validate().map_err(SimError::InvalidParams)?;
    let behaviour = SeedStream::from_parts(&[params.seed, config.seed]);
    let theta = config.try_time;
    let mut session = GameSession::start(config)?;
    while !session.is_finished() {
        let state = session.state();
        let try_index = state.current_try;
        let start = state.try_started_at;
        let target = state.current_target.clone().expect("awaiting session has a target");
        let deadline = session.deadline().expect("awaiting session has a deadline");
        let mut rng = behaviour.for_try(try_index);
        match simulate_try(params, &state.presented, &target, theta, &mut rng) {
            SimAction::Quit => {
                session.abort(start)?;
            }
            SimAction::NoResponse => {
                session.deliver_timeout(try_index, deadline)?;
            }
            SimAction::Respond { object_id, t } => {
                // Keep the response strictly after the try start even when
                // t is below the clock's resolution.
                let at = (start + t).min(deadline).max(start.next_up());
                session.record_response(&object_id, at, None)?;
            }
        }
    }
    Ok(session)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: Option<f64>,
    /// Sample standard deviation; absent below two defined values.
    pub sd: Option<f64>,
    /// Sessions in which the metric was defined.
    pub n: usize,
}

impl MetricStats {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: None, sd: None, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = (n >= 2).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Self { mean: Some(mean), sd, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: usize,
    pub params: BehaviorParams,
    pub sessions: usize,
    /// In [`SessionMetrics::FIELDS`] order.
    pub stats: Vec<MetricStats>,
}

impl SweepRow {
    pub fn stat(&self, field: &str) -> Option<&MetricStats> {
        SessionMetrics::FIELDS.iter().position(|f| *f == field).map(|i| &self.stats[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn header() -> Vec<String> {
        let mut h: Vec<String> = [
            "cell",
            "attention",
            "impulsivity",
            "rt_log_mean",
            "rt_log_sd",
            "dropout_hazard",
            "seed",
            "sessions",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for f in SessionMetrics::FIELDS {
            h.extend([format!("{f}_mean"), format!("{f}_sd"), format!("{f}_n")]);
        }
        h
    }

    /// CSV with one row per cell. Undefined statistics are empty cells.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header())?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            let p = &row.params;
            let mut rec = vec![
                row.cell.to_string(),
                p.attention.to_string(),
                p.impulsivity.to_string(),
                p.rt_log_mean.to_string(),
                p.rt_log_sd.to_string(),
                p.dropout_hazard.to_string(),
                p.seed.to_string(),
                row.sessions.to_string(),
            ];
            for s in &row.stats {
                rec.extend([opt(s.mean), opt(s.sd), s.n.to_string()]);
            }
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `sessions_per_cell` sessions for every grid cell. Session `j` of
/// every cell uses config seed `child_seed(config.seed, j)`, so cells differ
/// only in behaviour. Sessions run in parallel; results are aggregated in
/// index order.
pub fn sweep(
    grid: &[BehaviorParams],
    sessions_per_cell: usize,
    config: &SessionConfig,
) -> Result<SweepTable, SimError> {
    if grid.is_empty() {
        return Err(SimError::EmptyGrid);
    }
    if sessions_per_cell == 0 {
        return Err(SimError::NoSessions);
    }
    let invalid: Vec<ValidationError> = grid
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.validate().err().map(|e| (i, e)))
        .flat_map(|(i, errs)| {
            errs.into_iter().map(move |mut e| {
                e.field = format!("[{i}].{}", e.field);
                e
            })
        })
        .collect();
    if !invalid.is_empty() {
        return Err(SimError::InvalidParams(invalid));
    }

    let metrics: Vec<SessionMetrics> = (0..grid.len() * sessions_per_cell)
        .into_par_iter()
        .map(|k| {
            let (cell, j) = (k / sessions_per_cell, k % sessions_per_cell);
            let mut c = config.clone();
            c.seed = child_seed(config.seed, j as u64);
            let session = simulate_session(&grid[cell], c)?;
            let tally = session.live_tally().expect("simulated session is finished");
            Ok(compute_session_metrics(&tally).map_err(EngineError::from)?)
        })
        .collect::<Result<_, SimError>>()?;

    let rows = grid
        .iter()
        .enumerate()
        .map(|(cell, params)| {
            let chunk = &metrics[cell * sessions_per_cell..(cell + 1) * sessions_per_cell];
            let stats = (0..SessionMetrics::FIELDS.len())
                .map(|f| {
                    let values: Vec<f64> = chunk.iter().filter_map(|m| m.values()[f]).collect();
                    MetricStats::from_values(&values)
                })
                .collect();
            SweepRow { cell, params: *params, sessions: sessions_per_cell, stats }
        })
        .collect();
    Ok(SweepTable { rows })
}
