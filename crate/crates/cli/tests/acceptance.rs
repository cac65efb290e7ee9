//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, ExitCode, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use artherapist_core::domain::{validate_game, LevelDefinition};
use artherapist_core::engine::{replay, GameSession, SessionConfig};
use artherapist_core::metrics::{compute_session_metrics, performance_index, tally, SessionMetrics, SessionTally, TryRecord};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const BIN: &str = env!("CARGO_BIN_EXE_artherapist");

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("E1 golden session", e1_golden),
        ("identities over 10,000 fuzzed tallies", identities),
        ("ranges and presence over 10,000 fuzzed tallies", ranges),
        ("replay and reference-scorer oracles", oracles),
        ("simulate --seed 7 determinism", determinism),
        ("metric discrimination at 1,000 sessions per cell", discrimination),
        ("PI monotonicity over 1,000 triples", pi_monotonicity),
        ("durability and API contract", durability_and_contract),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {name}: {detail} ({secs:.2}s)"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {name}: {why} ({secs:.2}s)");
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- metrics

#[allow(clippy::approx_constant)] // the published five-digit SD
fn e1_golden() -> Outcome {
    let started = Instant::now();
    let crt = [1.0, 2.0, 1.5, 2.5, 3.0, 2.0];
    let mut records: Vec<TryRecord> = crt.iter().enumerate().map(|(i, &rt)| TryRecord::correct(i as u32, rt)).collect();
    records.push(TryRecord::omission(6));
    records.push(TryRecord::commission(7, 1.0));
    records.push(TryRecord::uncompleted(8));
    records.push(TryRecord::uncompleted(9));
    let t = tally(&records, 10, 5.0, 20.0).map_err(|e| e.to_string())?;
    let m = compute_session_metrics(&t).map_err(|e| e.to_string())?;
    let expect = [
        ("M", m.mean_crt, 2.0, 1e-12),
        ("SD", m.sd_crt, 0.70711, 1e-5),
        ("GF", m.engagement, 0.8, 1e-12),
        ("IAF", m.inattention, 0.125, 1e-12),
        ("IMF", m.impulsivity, 0.125, 1e-12),
        ("EF", m.error, 0.25, 1e-12),
        ("CRF", m.correct_response, 0.4, 1e-12),
        ("PI", m.performance_index, 0.54, 1e-12),
    ];
    for (name, got, want, tol) in expect {
        let got = got.ok_or_else(|| format!("{name} absent"))?;
        ensure((got - want).abs() <= tol, || format!("{name} = {got}, expected {want} within {tol}"))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("M=2 SD={:.5} GF=0.8 IAF=IMF=0.125 EF=0.25 CRF=0.4 PI=0.54", m.sd_crt.unwrap()))
}

/// Random tally. `mode` forces the degenerate cases: 1 gives C=0, 2 gives
/// C=1, 3 gives C+I=0.
fn fuzz_tally(rng: &mut StdRng, mode: u32) -> (SessionTally, [u32; 4]) {
    let planned: u32 = rng.random_range(1..=30);
    let theta: f64 = rng.random_range(0.5..10.0);
    let weights: [f64; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];
    let total: f64 = weights.iter().sum::<f64>().max(1e-9);
    let mut records = Vec::new();
    let mut counts = [0u32; 4];
    for i in 0..planned {
        let mut kind = {
            let mut x = rng.random::<f64>() * total;
            let mut k = 3;
            for (j, w) in weights.iter().enumerate() {
                if x < *w {
                    k = j;
                    break;
                }
                x -= w;
            }
            k
        };
        match mode {
            1 if kind == 0 => kind = 1 + rng.random_range(0..3),
            2 if kind == 0 && counts[0] >= 1 => kind = 1 + rng.random_range(0..3),
            3 => kind = 3,
            _ => {}
        }
        if mode == 2 && i == planned - 1 && counts[0] == 0 {
            kind = 0;
        }
        counts[kind] += 1;
        let rt = theta * (1.0 - rng.random::<f64>());
        records.push(match kind {
            0 => TryRecord::correct(i, rt),
            1 => TryRecord::omission(i),
            2 => TryRecord::commission(i, rt),
            _ => TryRecord::uncompleted(i),
        });
    }
    let gt = rng.random_range(0.0..theta * planned as f64);
    (tally(&records, planned, theta, gt).expect("fuzzed records are valid"), counts)
}

fn identities() -> Outcome {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x1D);
    let mut checked_ef = 0;
    for n in 0..10_000u32 {
        let (t, counts) = fuzz_tally(&mut rng, n % 4);
        let m = compute_session_metrics(&t).map_err(|e| format!("tally {n}: {e}"))?;
        ensure(t.correct + t.omissions + t.commissions + t.uncompleted == t.planned_tries, || format!("tally {n}: counts do not sum to T"))?;
        ensure([t.correct, t.omissions, t.commissions, t.uncompleted] == counts, || format!("tally {n}: counts differ from the generated outcomes"))?;
        match (m.inattention, m.impulsivity, m.error) {
            (Some(a), Some(b), Some(e)) => {
                ensure(e == a + b, || format!("tally {n}: EF {e} != IAF {a} + IMF {b}"))?;
                checked_ef += 1;
            }
            (None, None, None) => {}
            other => return Err(format!("tally {n}: inconsistent presence {other:?}")),
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("0 violations; EF identity checked on {checked_ef} tallies"))
}

fn ranges() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x2E);
    let (mut c0, mut c1, mut idle) = (0, 0, 0);
    for n in 0..10_000u32 {
        let (t, _) = fuzz_tally(&mut rng, n % 4);
        let m = compute_session_metrics(&t).map_err(|e| format!("tally {n}: {e}"))?;
        let engaged = t.correct + t.omissions + t.commissions;
        c0 += (t.correct == 0) as u32;
        c1 += (t.correct == 1) as u32;
        idle += (engaged == 0) as u32;
        let presence = [
            ("M", m.mean_crt.is_some(), t.correct >= 1),
            ("SD", m.sd_crt.is_some(), t.correct >= 2),
            ("GF", m.engagement.is_some(), true),
            ("IAF", m.inattention.is_some(), engaged > 0),
            ("IMF", m.impulsivity.is_some(), engaged > 0),
            ("EF", m.error.is_some(), engaged > 0),
            ("CRF", m.correct_response.is_some(), t.correct >= 1),
            ("PI", m.performance_index.is_some(), t.correct >= 1),
        ];
        for (name, present, expected) in presence {
            ensure(present == expected, || format!("tally {n}: {name} presence {present}, expected {expected}"))?;
        }
        let unit = [m.engagement, m.inattention, m.impulsivity, m.error, m.correct_response, m.performance_index];
        for v in unit.into_iter().flatten() {
            ensure((0.0..=1.0).contains(&v), || format!("tally {n}: factor {v} outside [0,1]"))?;
        }
        if let Some(mean) = m.mean_crt {
            ensure(mean > 0.0 && mean <= t.theta, || format!("tally {n}: M {mean} outside (0, theta]"))?;
        }
        if let Some(sd) = m.sd_crt {
            ensure(sd >= 0.0, || format!("tally {n}: negative SD"))?;
        }
    }
    ensure(c0 > 0 && c1 > 0 && idle > 0, || format!("degenerate cases not all exercised: C=0 {c0}, C=1 {c1}, C+I=0 {idle}"))?;
    Ok(format!("0 violations; C=0 x{c0}, C<2 with C=1 x{c1}, C+I=0 x{idle}"))
}

/// Naive scorer straight from the definitions, sharing no code with the
/// metrics module.
fn reference(t: &SessionTally) -> [Option<f64>; 8] {
    let c = t.crt_list.len() as f64;
    let oe = t.omissions as f64;
    let ce = t.commissions as f64;
    let engaged = c + oe + ce;
    let mut sum = 0.0;
    for x in &t.crt_list {
        sum += x;
    }
    let mean = (c > 0.0).then(|| sum / c);
    let sd = (c > 1.0).then(|| {
        let mu = sum / c;
        let mut ss = 0.0;
        for x in &t.crt_list {
            ss += (x - mu) * (x - mu);
        }
        (ss / (c - 1.0)).sqrt()
    });
    let gf = Some(engaged / t.planned_tries as f64);
    let iaf = (engaged > 0.0).then(|| oe / engaged);
    let imf = (engaged > 0.0).then(|| ce / engaged);
    let ef = (engaged > 0.0).then(|| (oe + ce) / engaged);
    let crf = (c > 0.0).then(|| sum / (c * t.theta));
    let pi = match (crf, ef, gf) {
        (Some(r), Some(e), Some(g)) => Some(((1.0 - r) + (1.0 - e)) / 2.0 * g),
        _ => None,
    };
    [mean, sd, gf, iaf, imf, ef, crf, pi]
}

fn level_json() -> Value {
    let objects: Vec<Value> = (0..4)
        .map(|k| {
            json!({"object_id": format!("obj-{k}"), "shape": "cube", "base_size": 0.15,
                   "placement_region": {"min": [-1.0, 0.8, 1.0], "max": [1.0, 1.8, 2.5]}})
        })
        .collect();
    json!({"level_number": 1, "objects": objects, "max_time": 60.0, "try_time": 5.0,
           "tries_per_session": 10, "distractors_per_try": 2})
}

fn level() -> LevelDefinition {
    let game = validate_game(&json!({"id": "g", "type": "drag_and_drop", "levels": [level_json()]})).expect("valid game");
    game.levels[0].clone()
}

fn config(level: &LevelDefinition, seed: u64) -> SessionConfig {
    SessionConfig {
        session_id: format!("fuzz-{seed}"),
        patient_id: "p".into(),
        program_id: "prog".into(),
        level_number: level.level_number,
        planned_tries: level.tries_per_session,
        try_time: level.try_time,
        max_time: level.max_time,
        object_pool: level.objects.clone(),
        distractors_per_try: level.distractors_per_try,
        appearance_interval: level.appearance_interval,
        seed,
    }
}

/// Drives a session with random commands, some of them invalid. Rejected
/// commands must not touch the log.
fn drive(seed: u64, level: &LevelDefinition) -> Result<GameSession, String> {
    let mut rng = StdRng::seed_from_u64(seed ^ 0xABCD);
    let mut s = GameSession::start(config(level, seed)).map_err(|e| e.to_string())?;
    while !s.is_finished() {
        let before = s.events().len();
        let start = s.state().try_started_at;
        let deadline = s.deadline().expect("running session has a deadline");
        let target = s.state().current_target.clone().expect("try on screen");
        let presented = s.state().presented.clone();
        let try_index = s.state().current_try;
        let roll: f64 = rng.random();
        let accepted = if roll < 0.05 {
            s.abort(start + (deadline - start) * rng.random::<f64>()).is_ok()
        } else if roll < 0.45 {
            let at = start + (deadline - start) * (1.0 - rng.random::<f64>());
            s.record_response(&target, at, Some([0.0, 1.6, 0.0])).is_ok()
        } else if roll < 0.65 {
            let obj = &presented[rng.random_range(0..presented.len())];
            let at = start + (deadline - start) * (1.0 - rng.random::<f64>());
            s.record_response(obj, at, None).is_ok()
        } else if roll < 0.85 {
            s.deliver_timeout(try_index, deadline + rng.random::<f64>()).is_ok()
        } else {
            let rejected = match rng.random_range(0..4) {
                0 => s.record_response(&target, start, None).is_err(),
                1 => s.record_response(&target, deadline + 0.5, None).is_err(),
                2 => s.record_response("nope", start + 0.1, None).is_err(),
                _ => s.deliver_timeout(try_index, deadline - 0.25).is_err(),
            };
            ensure(rejected, || format!("seed {seed}: invalid command accepted"))?;
            ensure(s.events().len() == before, || format!("seed {seed}: rejected command changed the log"))?;
            false
        };
        if accepted {
            ensure(s.events().len() > before, || format!("seed {seed}: accepted command logged nothing"))?;
        }
    }
    Ok(s)
}

fn oracles() -> Outcome {
    let level = level();
    for seed in 0..1000u64 {
        let s = drive(seed, &level)?;
        let live = s.live_tally().ok_or("finished session has no tally")?;
        let replayed = replay(s.events(), level.try_time, level.tries_per_session).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(live == replayed, || format!("seed {seed}: replay {replayed:?} != live {live:?}"))?;
    }
    let mut rng = StdRng::seed_from_u64(0x3F);
    let mut worst: f64 = 0.0;
    for n in 0..10_000u32 {
        let (t, _) = fuzz_tally(&mut rng, n % 4);
        let m = compute_session_metrics(&t).map_err(|e| e.to_string())?;
        let got = &m.values()[..8];
        for (k, (a, b)) in got.iter().zip(reference(&t)).enumerate() {
            match (a, b) {
                (Some(a), Some(b)) => {
                    worst = worst.max((a - b).abs());
                    ensure((a - b).abs() <= 1e-12, || format!("tally {n}: {} = {a}, reference {b}", SessionMetrics::FIELDS[k]))?;
                }
                (None, None) => {}
                _ => return Err(format!("tally {n}: {} presence differs from the reference", SessionMetrics::FIELDS[k])),
            }
        }
    }
    Ok(format!("replay = live for 1,000 fuzzed sessions; 10,000 tallies within {worst:.1e} of the reference"))
}

fn pi_monotonicity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x4A);
    let eps = 0.01;
    let pi = |c: f64, e: f64, g: f64| performance_index(c, e, g).map_err(|x| x.to_string());
    let mut checks = 0;
    for n in 0..1000 {
        let (crf, ef, gf): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let base = pi(crf, ef, gf)?;
        if gf > 0.0 {
            // Step up when there is room, otherwise compare from below.
            let (lo, hi) = if crf + eps <= 1.0 { (crf, crf + eps) } else { (crf - eps, crf) };
            ensure(pi(hi, ef, gf)? < pi(lo, ef, gf)?, || format!("triple {n}: PI did not fall as CRF rose ({crf}, {ef}, {gf})"))?;
            let (lo, hi) = if ef + eps <= 1.0 { (ef, ef + eps) } else { (ef - eps, ef) };
            ensure(pi(crf, hi, gf)? < pi(crf, lo, gf)?, || format!("triple {n}: PI did not fall as EF rose ({crf}, {ef}, {gf})"))?;
            checks += 2;
        }
        if (2.0 - crf - ef) / 2.0 > 0.0 {
            let (lo, hi) = if gf + eps <= 1.0 { (gf, gf + eps) } else { (gf - eps, gf) };
            ensure(pi(crf, ef, hi)? > pi(crf, ef, lo)?, || format!("triple {n}: PI did not rise with GF ({crf}, {ef}, {gf})"))?;
            checks += 1;
        }
        ensure((0.0..=1.0).contains(&base), || format!("triple {n}: PI {base} outside [0,1]"))?;
    }
    Ok(format!("0 violations in {checks} perturbation checks"))
}

// ------------------------------------------------------------------- CLI

fn run_cli(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(BIN).args(args).output().map_err(|e| format!("cannot run {BIN}: {e}"))
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).expect("readable store") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn determinism() -> Outcome {
    let mut outputs = Vec::new();
    let mut trees = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let store = dir.path().to_str().unwrap();
        let out = run_cli(&["simulate", "--patients", "3", "--sessions", "4", "--seed", "7", "--store", store])?;
        ensure(out.status.success(), || format!("simulate failed: {}", String::from_utf8_lossy(&out.stderr)))?;
        outputs.push(out.stdout);
        trees.push(tree(dir.path()));
    }
    ensure(outputs[0] == outputs[1], || "summary tables differ".into())?;
    let logs = trees[0].keys().filter(|p| p.extension().is_some_and(|e| e == "log")).count();
    ensure(logs == 12, || format!("expected 12 event logs, found {logs}"))?;
    ensure(trees[0] == trees[1], || {
        let differing: Vec<_> = trees[0].iter().filter(|(k, v)| trees[1].get(*k) != Some(v)).map(|(k, _)| k.display().to_string()).collect();
        format!("store contents differ: {differing:?}")
    })?;
    Ok(format!("{} files and the summary table byte-identical across two fresh stores", trees[0].len()))
}

fn discrimination() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let grid = dir.path().join("grid.json");
    let cells = json!([
        {"attention": 0.2, "impulsivity": 0.1},
        {"attention": 0.9, "impulsivity": 0.1},
        {"attention": 0.8, "impulsivity": 0.8},
        {"attention": 0.8, "impulsivity": 0.1},
        {"attention": 0.8, "impulsivity": 0.1, "dropout_hazard": 0.3},
        {"attention": 0.8, "impulsivity": 0.1, "dropout_hazard": 0.0}
    ]);
    std::fs::write(&grid, cells.to_string()).map_err(|e| e.to_string())?;
    let out_csv = dir.path().join("sweep.csv");
    let out = run_cli(&[
        "sweep",
        "--grid",
        grid.to_str().unwrap(),
        "--sessions-per-cell",
        "1000",
        "--out",
        out_csv.to_str().unwrap(),
        "--seed",
        "11",
    ])?;
    ensure(out.status.success(), || format!("sweep failed: {}", String::from_utf8_lossy(&out.stderr)))?;
    let mut reader = csv::Reader::from_path(&out_csv).map_err(|e| e.to_string())?;
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    ensure(rows.len() == 6, || format!("expected 6 rows, got {}", rows.len()))?;
    let get = |row: usize, col: &str| -> Result<f64, String> {
        let i = headers.iter().position(|h| h == col).ok_or_else(|| format!("missing column {col}"))?;
        rows[row][i].parse::<f64>().map_err(|e| format!("{col} row {row}: {e}"))
    };
    for row in 0..6 {
        ensure(get(row, "sessions")? == 1000.0, || "cell did not run 1,000 sessions".into())?;
    }
    let iaf = (get(0, "IAF_mean")?, get(1, "IAF_mean")?);
    let imf = (get(2, "IMF_mean")?, get(3, "IMF_mean")?);
    let gf = (get(4, "GF_mean")?, get(5, "GF_mean")?);
    ensure(iaf.0 - iaf.1 > 0.1, || format!("IAF(0.2) {} vs IAF(0.9) {}", iaf.0, iaf.1))?;
    ensure(imf.0 - imf.1 > 0.1, || format!("IMF(0.8) {} vs IMF(0.1) {}", imf.0, imf.1))?;
    ensure(gf.1 - gf.0 > 0.1, || format!("GF(0.3) {} vs GF(0) {}", gf.0, gf.1))?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "IAF {:.3} > {:.3}, IMF {:.3} > {:.3}, GF {:.3} < {:.3}",
        iaf.0, iaf.1, imf.0, imf.1, gf.0, gf.1
    ))
}

// ------------------------------------------------------------------- HTTP

struct Server {
    child: Child,
    base: String,
    _stdout: BufReader<ChildStdout>,
}

impl Server {
    fn start(store: &Path) -> Result<Self, String> {
        let mut child = Command::new(BIN)
            .args(["serve", "--listen", "127.0.0.1:0", "--store", store.to_str().unwrap()])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut line = String::new();
        stdout.read_line(&mut line).map_err(|e| e.to_string())?;
        let url = line.trim().strip_prefix("listening on ").ok_or_else(|| format!("unexpected banner `{line}`"))?;
        Ok(Self { child, base: format!("{url}/api/v1"), _stdout: stdout })
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder().timeout(Duration::from_secs(10)).build().expect("http client")
}

fn call(
    c: &reqwest::blocking::Client,
    method: &str,
    url: &str,
    headers: &[(&str, &str)],
    body: Option<&Value>,
) -> Result<(u16, Value), String> {
    let method = reqwest::Method::from_bytes(method.as_bytes()).unwrap();
    let mut req = c.request(method, url);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    if let Some(b) = body {
        req = req.header("content-type", "application/json").body(b.to_string());
    }
    let resp = req.send().map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    let text = resp.text().map_err(|e| e.to_string())?;
    let value = if text.is_empty() { Value::Null } else { serde_json::from_str(&text).map_err(|e| format!("{e}: {text}"))? };
    Ok((status, value))
}

fn game_doc() -> Value {
    json!({"id": "g1", "type": "drag_and_drop", "levels": [level_json()]})
}

fn program_doc(advance: f64, regress: f64) -> Value {
    json!({"program_id": "prog", "session_specs": [{"game": "g1", "level": 1}], "duration_cap": 20.0,
           "progression_policy": {"advance_threshold": advance, "regress_threshold": regress, "min_sessions_at_level": 2}})
}

/// Device log for `session`: random outcomes, ending in completion, or in
/// an abort when `tries` is below ten.
fn device_log(session: &str, tries: u32, seed: u64) -> Vec<Value> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut push = |at: f64, kind: Value| {
        let seq = events.len();
        events.push(json!({"session_id": session, "seq": seq, "at": at, "kind": kind}));
    };
    push(0.0, json!({"type": "session_started", "digest": "0f".repeat(32), "patient_id": "p1", "program_id": "prog",
                     "level": 1, "planned_tries": 10, "try_time": 5.0, "max_time": 60.0}));
    let mut t = 0.0;
    for i in 0..tries {
        let placements: Vec<Value> = (0..3)
            .map(|k| json!({"object_id": format!("obj-{k}"), "position": [rng.random::<f64>(), 1.2, 2.0], "appearance_offset": 0.5 * k as f64}))
            .collect();
        push(t, json!({"type": "try_presented", "try_index": i, "target_object_id": "obj-0", "placements": placements}));
        let roll: f64 = rng.random();
        let rt = 5.0 * (1.0 - rng.random::<f64>());
        let (dt, kind) = if roll < 0.6 {
            (rt, json!({"type": "response_recorded", "try_index": i, "object_id": "obj-0", "response_time": rt, "player_position": [0.1, 1.6, 0.2]}))
        } else if roll < 0.8 {
            (rt, json!({"type": "response_recorded", "try_index": i, "object_id": "obj-2", "response_time": rt, "player_position": null}))
        } else {
            (5.0, json!({"type": "try_timed_out", "try_index": i}))
        };
        t += dt;
        push(t, kind);
    }
    if tries == 10 {
        push(t, json!({"type": "session_completed"}));
    } else {
        push(t, json!({"type": "session_aborted", "after_try_index": tries.checked_sub(1)}));
    }
    events
}

fn setup_documents(c: &reqwest::blocking::Client, base: &str) -> Result<(), String> {
    for (path, body) in [
        ("games", game_doc()),
        ("programs", program_doc(0.7, 0.3)),
        ("patients", json!({"id": "p1", "level": 1})),
        ("doctors", json!({"id": "sr", "experience": "senior", "involvement": "guide"})),
        ("doctors", json!({"id": "jr", "experience": "junior", "involvement": "monitor"})),
        ("treatments", json!({"id": "t1", "patient": "p1", "doctor": "sr", "game": "g1", "programs": ["prog"]})),
    ] {
        let (status, body) = call(c, "POST", &format!("{base}/{path}"), &[], Some(&body))?;
        ensure(status == 201, || format!("POST /{path}: {status} {body}"))?;
    }
    Ok(())
}

#[derive(Default)]
struct Acked {
    events: BTreeMap<String, Vec<Value>>,
    launches: Vec<String>,
    count: usize,
}

fn durability_and_contract() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let c = client();
    let server = Server::start(dir.path())?;
    let base = server.base.clone();
    setup_documents(&c, &base)?;

    // A device streams events one at a time and a launcher runs simulated
    // sessions, until the server is killed.
    let acked = Arc::new(Mutex::new(Acked::default()));
    let writer = {
        let (acked, base) = (acked.clone(), base.clone());
        thread::spawn(move || {
            let c = client();
            for n in 0u64.. {
                let id = format!("dev-{n}");
                for e in device_log(&id, if n % 3 == 2 { 6 } else { 10 }, n) {
                    match call(&c, "POST", &format!("{base}/sessions/{id}/events"), &[], Some(&e)) {
                        Ok((202, _)) => {
                            let mut a = acked.lock().unwrap();
                            a.events.entry(id.clone()).or_default().push(e);
                            a.count += 1;
                        }
                        _ => return,
                    }
                }
                match call(&c, "POST", &format!("{base}/sessions"), &[], Some(&json!({"patient_id": "p1", "program_id": "prog", "seed": n}))) {
                    Ok((201, body)) => {
                        let mut a = acked.lock().unwrap();
                        a.launches.push(body["session_id"].as_str().unwrap_or_default().to_string());
                        a.count += 1;
                    }
                    _ => return,
                }
            }
        })
    };
    let deadline = Instant::now() + Duration::from_secs(30);
    while acked.lock().unwrap().count < 150 {
        ensure(Instant::now() < deadline, || "server acknowledged too few writes before the kill".into())?;
        thread::sleep(Duration::from_millis(5));
    }
    server.kill();
    writer.join().map_err(|_| "writer thread panicked")?;
    let acked = std::mem::take(&mut *acked.lock().unwrap());

    let server = Server::start(dir.path())?;
    let base = server.base.clone();
    let sr = [("x-doctor-id", "sr")];
    let mut interrupted = None;
    for (id, sent) in &acked.events {
        let (status, stored) = call(&c, "GET", &format!("{base}/sessions/{id}/events"), &sr, None)?;
        ensure(status == 200, || format!("session {id} lost after restart ({status})"))?;
        let stored = stored.as_array().cloned().unwrap_or_default();
        ensure(stored.len() >= sent.len(), || format!("session {id}: {} acknowledged events, {} stored", sent.len(), stored.len()))?;
        ensure(stored[..sent.len()] == sent[..], || format!("session {id}: stored events differ from the acknowledged ones"))?;
        let terminal = sent.last().is_some_and(|e| matches!(e["kind"]["type"].as_str(), Some("session_completed" | "session_aborted")));
        if !terminal {
            interrupted = Some((id.clone(), stored.len()));
        }
    }
    for id in &acked.launches {
        let (status, meta) = call(&c, "GET", &format!("{base}/sessions/{id}"), &[], None)?;
        ensure(status == 200 && meta["sealed"] == true, || format!("launched session {id} lost or unsealed after restart"))?;
    }
    // The interrupted device session resumes where the store left off.
    if let Some((id, stored)) = &interrupted {
        let n: u64 = id.trim_start_matches("dev-").parse().unwrap();
        let full = device_log(id, if n % 3 == 2 { 6 } else { 10 }, n);
        if *stored < full.len() {
            let (status, body) = call(&c, "POST", &format!("{base}/sessions/{id}/events"), &[], Some(&json!(full[*stored..])))?;
            ensure(status == 202 && body["sealed"] == true, || format!("resuming {id}: {status} {body}"))?;
        }
    }
    // Every sealed session has been scored exactly once, including any
    // sealed just before the kill.
    let (_, report) = call(&c, "GET", &format!("{base}/patients/p1/report"), &sr, None)?;
    let sealed = report["sessions"].as_array().map_or(0, Vec::len);
    let engine_transitions = report["transitions"].as_array().map_or(0, |t| t.iter().filter(|r| r["source"] == "engine").count());
    ensure(sealed == engine_transitions, || format!("{sealed} sealed sessions but {engine_transitions} engine transitions"))?;
    ensure(report["in_progress"] == json!([]), || format!("sessions still open: {}", report["in_progress"]))?;

    let contract = contract(&c, &base)?;
    drop(server);
    Ok(format!(
        "{} acknowledged events in {} device sessions and {} launches survived SIGKILL; {contract}; no dashboard involved",
        acked.events.values().map(Vec::len).sum::<usize>(),
        acked.events.len(),
        acked.launches.len()
    ))
}

/// Every documented endpoint against its documented status codes, over
/// real HTTP.
fn contract(c: &reqwest::blocking::Client, base: &str) -> Result<String, String> {
    let mut checked = 0;
    let mut expect = |method: &str, path: &str, headers: &[(&str, &str)], body: Option<Value>, want: u16| -> Result<Value, String> {
        let (status, value) = call(c, method, &format!("{base}{path}"), headers, body.as_ref())?;
        ensure(status == want, || format!("{method} {path}: {status}, expected {want}: {value}"))?;
        if status >= 400 {
            ensure(value["status"] == want && value["code"].is_string() && value["message"].is_string(), || {
                format!("{method} {path}: error body {value} lacks status/code/message")
            })?;
        }
        checked += 1;
        Ok(value)
    };
    let sr = [("x-doctor-id", "sr")];
    let jr = [("x-doctor-id", "jr")];

    // Documents.
    expect("GET", "/patients", &[], None, 200)?;
    expect("POST", "/patients", &[], Some(json!({"id": "p2", "level": 1})), 201)?;
    expect("POST", "/patients", &[], Some(json!({"id": "p2", "level": 1})), 409)?;
    let bad = expect("POST", "/patients", &[], Some(json!({"id": "p3", "level": 0})), 400)?;
    ensure(bad["details"][0]["rule"] == "level.min", || format!("level 0 details: {bad}"))?;
    expect("POST", "/doctors", &[], Some(json!({"id": "d9", "experience": "expert", "involvement": "full"})), 201)?;
    expect("GET", "/doctors", &[], None, 200)?;
    expect("GET", "/games", &[], None, 200)?;
    expect("GET", "/games/g1", &[], None, 200)?;
    expect("GET", "/games/none", &[], None, 404)?;
    expect("GET", "/treatments", &[], None, 200)?;
    expect("GET", "/treatments/t1", &[], None, 200)?;
    expect("GET", "/doctors/sr", &[], None, 200)?;

    // Program updates.
    let current = expect("GET", "/programs/prog", &[], None, 200)?["version"].as_u64().unwrap_or(0).to_string();
    expect("PUT", "/programs/prog", &[], Some(program_doc(0.8, 0.2)), 428)?;
    expect("PUT", "/programs/prog", &[("if-match", "999")], Some(program_doc(0.8, 0.2)), 412)?;
    expect("PUT", "/programs/prog", &[("if-match", current.as_str())], Some(program_doc(0.3, 0.3)), 400)?;
    let updated = expect("PUT", "/programs/prog", &[("if-match", current.as_str())], Some(program_doc(0.8, 0.2)), 200)?;
    ensure(updated["version"].as_u64() == current.parse::<u64>().ok().map(|v| v + 1), || "program version did not bump".into())?;
    expect("PUT", "/programs/none", &[("if-match", "1")], Some(program_doc(0.8, 0.2)), 404)?;

    // Level override through a patient update.
    let v = expect("GET", "/patients/p2", &[], None, 200)?["version"].as_u64().unwrap_or(0).to_string();
    let p2 = Some(json!({"id": "p2", "level": 1, "preferences": ["music"]}));
    expect("PUT", "/patients/p2", &[("if-match", v.as_str())], p2, 200)?;
    expect("PUT", "/patients/p2", &[("if-match", "2")], Some(json!({"id": "p2", "level": 1})), 200)?;
    expect("PUT", "/patients/p2", &[("if-match", "3"), ("x-doctor-id", "jr")], Some(json!({"id": "p2", "level": 1})), 200)?;
    let p1v = expect("GET", "/patients/p1", &[], None, 200)?["version"].as_u64().unwrap_or(0).to_string();
    let cur_level = expect("GET", "/patients/p1", &[], None, 200)?["body"]["level"].as_u64().unwrap_or(1);
    let other = Some(json!({"id": "p1", "level": if cur_level == 1 { 2 } else { 1 }}));
    if cur_level == 1 {
        // A single-level game caps overrides at level 1.
        expect("PUT", "/patients/p1", &[("if-match", p1v.as_str()), ("x-doctor-id", "sr")], other.clone(), 400)?;
    }
    expect("PUT", "/patients/p1", &[("if-match", p1v.as_str())], other.clone(), 400)?;
    expect("PUT", "/patients/p1", &[("if-match", p1v.as_str()), ("x-doctor-id", "jr")], other, 403)?;
    expect("PUT", "/patients/p1", &[], Some(json!({"id": "p1", "level": 1})), 428)?;

    // Sessions.
    expect("GET", "/sessions", &[], None, 200)?;
    let launched = expect("POST", "/sessions", &[], Some(json!({"patient_id": "p2", "program_id": "prog", "seed": 42})), 201)?;
    let again = expect("POST", "/sessions", &[], Some(json!({"patient_id": "p2", "program_id": "prog", "seed": 42})), 201)?;
    ensure(launched["metrics"] == again["metrics"], || "seed 42 launched twice gave different metrics".into())?;
    expect("POST", "/sessions", &[], Some(json!({"patient_id": "nobody", "program_id": "prog"})), 404)?;
    expect("POST", "/sessions", &[], Some(json!({"patient_id": "p2", "program_id": "none"})), 404)?;
    expect("POST", "/sessions", &[], Some(json!({"nonsense": true})), 400)?;
    let sid = launched["session_id"].as_str().unwrap_or_default().to_string();
    expect("GET", &format!("/sessions/{sid}"), &[], None, 200)?;
    expect("GET", "/sessions/none", &[], None, 404)?;
    let m = expect("GET", &format!("/sessions/{sid}/metrics"), &[], None, 200)?;
    ensure(m == launched["metrics"], || "API metrics differ from the engine's".into())?;
    expect("GET", "/sessions/none/metrics", &[], None, 404)?;
    expect("GET", &format!("/sessions/{sid}/events"), &sr, None, 200)?;
    expect("GET", &format!("/sessions/{sid}/events"), &jr, None, 403)?;

    // Ingestion.
    let log = device_log("ct-1", 10, 99);
    expect("POST", "/sessions/ct-1/events", &[], Some(json!(log[..3])), 202)?;
    expect("POST", "/sessions/ct-1/events", &[], Some(json!(log[4..])), 409)?;
    expect("GET", "/sessions/ct-1/metrics", &[], None, 409)?;
    let mut broken = log[3].clone();
    broken["kind"]["response_time"] = json!(-1.0);
    if broken["kind"]["type"] == "response_recorded" {
        expect("POST", "/sessions/ct-1/events", &[], Some(json!([broken])), 400)?;
    }
    expect("POST", "/sessions/ct-1/events", &[], Some(json!("not an event")), 400)?;
    expect("POST", "/sessions/ct-1/events", &[], Some(json!(log[3..])), 202)?;
    expect("GET", "/sessions/ct-1/metrics", &[], None, 200)?;
    let mut stranger = device_log("ct-2", 1, 5);
    stranger[0]["kind"]["patient_id"] = json!("nobody");
    expect("POST", "/sessions/ct-2/events", &[], Some(json!(stranger)), 404)?;

    // Absent metrics are explicit nulls.
    let idle = device_log("ct-idle", 0, 1);
    expect("POST", "/sessions/ct-idle/events", &[], Some(json!(idle)), 202)?;
    let m = expect("GET", "/sessions/ct-idle/metrics", &[], None, 200)?;
    for key in ["M", "SD", "IAF", "IMF", "EF", "CRF", "PI"] {
        ensure(m.get(key) == Some(&Value::Null), || format!("{key} is not an explicit null in {m}"))?;
    }
    ensure(m["GF"] == 0.0, || format!("GF should be 0 for an empty session: {m}"))?;

    // Reports.
    let r = expect("GET", "/patients/p1/report", &jr, None, 200)?;
    ensure(r["pi_series"].as_array().is_some_and(|s| s.len() == r["sessions"].as_array().map_or(0, Vec::len)), || "PI series and sessions disagree".into())?;
    ensure(r["pi_series"].as_array().is_some_and(|s| s.iter().any(Value::is_null)), || "the empty session's PI is not null in the series".into())?;
    expect("GET", "/patients/p1/report", &[], None, 400)?;
    expect("GET", "/patients/p1/report?include=events", &jr, None, 403)?;
    expect("GET", "/patients/p1/report?include=events", &sr, None, 200)?;
    expect("GET", "/patients/nobody/report", &sr, None, 404)?;
    expect("POST", "/patients", &[], Some(json!({"id": "p4", "level": 1})), 201)?;
    let empty = expect("GET", "/patients/p4/report", &sr, None, 200)?;
    ensure(empty["pi_series"] == json!([]) && empty["sessions"] == json!([]), || format!("zero-session report: {empty}"))?;
    expect("GET", "/no/such/endpoint", &[], None, 404)?;
    Ok(format!("{checked} endpoint checks matched their documented status codes"))
}
