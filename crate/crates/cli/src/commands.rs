use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use artherapist_api::agent::{self, LaunchRequest};
use artherapist_core::domain::{derive_session_config, SessionIdentity, ValidationError};
use artherapist_core::metrics::SessionMetrics;
use artherapist_core::rng::child_seed;
use artherapist_core::simulator::{sweep, BehaviorParams, SimError};
use artherapist_store::Store;
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog;
use crate::{CliError, Format};

fn usage(message: impl std::fmt::Display) -> CliError {
    CliError::Usage(anyhow!("{message}"))
}

fn invalid_params(errors: &[ValidationError]) -> CliError {
    let lines: Vec<String> = errors.iter().map(|e| format!("{}: {}", e.field, e.message)).collect();
    usage(format!("invalid behaviour parameters: {}", lines.join("; ")))
}

fn open_store(dir: &Path) -> Result<Store, CliError> {
    Store::open(dir).with_context(|| format!("cannot open store at {}", dir.display())).map_err(CliError::Runtime)
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientSummary {
    pub patient_id: String,
    pub sessions: usize,
    pub mean_pi: Option<f64>,
    pub mean_gf: Option<f64>,
    pub mean_iaf: Option<f64>,
    pub mean_imf: Option<f64>,
    /// Level after the last session.
    pub level: u32,
}

pub struct SimulateArgs {
    pub patients: u32,
    pub sessions: u32,
    pub seed: u64,
    pub behavior: BehaviorParams,
}

/// Patient `i` (from 1) is `sim-{i:04}` with seed `child_seed(seed, i)`; its
/// session `j` uses seed `child_seed(patient_seed, j)`. Patients run in
/// parallel, sessions of one patient in order.
pub fn simulate(store: &Store, args: &SimulateArgs) -> Result<Vec<PatientSummary>, CliError> {
    args.behavior.validate().map_err(|e| invalid_params(&e))?;
    catalog::install(store).context("cannot install the built-in catalog")?;
    (1..=args.patients)
        .into_par_iter()
        .map(|i| {
            let patient_id = format!("sim-{i:04}");
            catalog::install_patient(store, &patient_id)?;
            let patient_seed = child_seed(args.seed, i as u64);
            let behavior = BehaviorParams { seed: patient_seed, ..args.behavior };
            let mut metrics = Vec::new();
            let mut level = 1;
            for j in 0..args.sessions {
                let req = LaunchRequest {
                    patient_id: patient_id.clone(),
                    program_id: catalog::PROGRAM_ID.to_string(),
                    seed: Some(child_seed(patient_seed, j as u64)),
                    behavior: Some(behavior),
                    wall_clock_start: None,
                };
                let out = agent::launch_session(store, &req).map_err(|e| anyhow!("{patient_id}: {e}"))?;
                level = out.session.profile.level;
                metrics.push(out.session.metrics);
            }
            Ok(PatientSummary {
                mean_pi: mean(metrics.iter().map(|m| m.performance_index)),
                mean_gf: mean(metrics.iter().map(|m| m.engagement)),
                mean_iaf: mean(metrics.iter().map(|m| m.inattention)),
                mean_imf: mean(metrics.iter().map(|m| m.impulsivity)),
                sessions: metrics.len(),
                patient_id,
                level,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(CliError::Runtime)
}

pub fn write_summary(out: &mut impl Write, rows: &[PatientSummary], format: Format) -> anyhow::Result<()> {
    match format {
        Format::Table => {
            let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "absent".into());
            writeln!(out, "{:<12} {:>8} {:>8} {:>8} {:>8} {:>8} {:>5}", "patient", "sessions", "mean_PI", "mean_GF", "mean_IAF", "mean_IMF", "level")?;
            for r in rows {
                writeln!(
                    out,
                    "{:<12} {:>8} {:>8} {:>8} {:>8} {:>8} {:>5}",
                    r.patient_id,
                    r.sessions,
                    f(r.mean_pi),
                    f(r.mean_gf),
                    f(r.mean_iaf),
                    f(r.mean_imf),
                    r.level
                )?;
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["patient_id", "sessions", "mean_PI", "mean_GF", "mean_IAF", "mean_IMF", "level"])?;
            for r in rows {
                w.write_record([
                    r.patient_id.clone(),
                    r.sessions.to_string(),
                    cell(r.mean_pi),
                    cell(r.mean_gf),
                    cell(r.mean_iaf),
                    cell(r.mean_imf),
                    r.level.to_string(),
                ])?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn metrics(store: &Store, session_id: &str) -> Result<SessionMetrics, CliError> {
    agent::session_metrics(store, session_id).map_err(|e| CliError::Runtime(anyhow!("{}", e.message)))
}

pub fn write_metrics(out: &mut impl Write, session_id: &str, m: &SessionMetrics, format: Format) -> anyhow::Result<()> {
    match format {
        Format::Table => {
            writeln!(out, "session {session_id}")?;
            for (name, v) in SessionMetrics::FIELDS.iter().zip(m.values()) {
                let v = v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "absent".into());
                writeln!(out, "{name:<4} {v:>10}")?;
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let mut header = vec!["session_id"];
            header.extend(SessionMetrics::FIELDS);
            w.write_record(header)?;
            let mut row = vec![session_id.to_string()];
            row.extend(m.values().into_iter().map(cell));
            w.write_record(row)?;
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, m)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub struct SweepArgs<'a> {
    pub grid: &'a Path,
    pub sessions_per_cell: usize,
    pub out: &'a Path,
    pub seed: u64,
    pub level: u32,
}

/// Returns the number of rows written.
pub fn run_sweep(args: &SweepArgs) -> Result<usize, CliError> {
    let text = fs::read_to_string(args.grid).map_err(|e| usage(format!("cannot read grid {}: {e}", args.grid.display())))?;
    let grid: Vec<BehaviorParams> =
        serde_json::from_str(&text).map_err(|e| usage(format!("grid {} is not a list of behaviour parameters: {e}", args.grid.display())))?;
    let game = catalog::typed_game();
    let level = game
        .level(args.level)
        .ok_or_else(|| usage(format!("--level must be between 1 and {}", game.max_level())))?;
    let identity = SessionIdentity { session_id: "sweep".into(), patient_id: "sweep".into(), seed: args.seed };
    let config = derive_session_config(level, &catalog::typed_program(), &identity);
    let table = sweep(&grid, args.sessions_per_cell, &config).map_err(|e| match e {
        SimError::InvalidParams(errors) => invalid_params(&errors),
        SimError::EmptyGrid => usage("grid is empty"),
        SimError::NoSessions => usage("--sessions-per-cell must be at least 1"),
        other => CliError::Runtime(other.into()),
    })?;
    let file = fs::File::create(args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    table.write_csv(std::io::BufWriter::new(file)).with_context(|| format!("cannot write {}", args.out.display()))?;
    Ok(table.rows.len())
}

pub fn serve(listen: &str, store_dir: &Path) -> Result<(), CliError> {
    let addr: SocketAddr = listen.parse().map_err(|e| usage(format!("--listen `{listen}`: {e}")))?;
    let store = Arc::new(open_store(store_dir)?);
    let rt = tokio::runtime::Runtime::new().context("cannot start the async runtime")?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("cannot bind {addr}"))?;
        let local = listener.local_addr()?;
        println!("listening on http://{local}");
        std::io::stdout().flush()?;
        artherapist_api::serve(listener, store, shutdown_signal()).await.context("server failed")?;
        Ok::<_, anyhow::Error>(())
    })
    .map_err(CliError::Runtime)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

pub fn open(dir: &Path) -> Result<Store, CliError> {
    open_store(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_skips_absent_values() {
        assert_eq!(mean([Some(1.0), None, Some(0.0)].into_iter()), Some(0.5));
        assert_eq!(mean([None, None].into_iter()), None);
    }

    #[test]
    fn csv_cells_leave_absent_values_empty() {
        let m = SessionMetrics {
            mean_crt: None,
            sd_crt: None,
            engagement: Some(1.0),
            inattention: Some(1.0),
            impulsivity: Some(0.0),
            error: Some(1.0),
            correct_response: None,
            performance_index: None,
            gt: 50.0,
        };
        let mut out = Vec::new();
        write_metrics(&mut out, "s", &m, Format::Csv).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "session_id,M,SD,GF,IAF,IMF,EF,CRF,PI,GT\ns,,,1,1,0,1,,,50\n");
    }
}
