//! `artherapist`: run simulations and sweeps, score stored sessions and
//! start the HTTP service. Exit status is 0 on success, 1 on a runtime
//! failure and 2 on a usage error.

mod catalog;
mod commands;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use artherapist_core::simulator::BehaviorParams;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Parser)]
#[command(name = "artherapist", version, about = "Attention-training sessions: simulate, score, sweep and serve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create synthetic patients, play their sessions and print a summary.
    Simulate {
        #[arg(long, default_value_t = 1)]
        patients: u32,
        #[arg(long, default_value_t = 1)]
        sessions: u32,
        /// Master seed; a random one is chosen and printed when omitted.
        #[arg(long)]
        seed: Option<u64>,
        /// Probability of registering the target.
        #[arg(long, default_value_t = 0.8)]
        attention: f64,
        /// Probability of answering before identifying the target.
        #[arg(long, default_value_t = 0.1)]
        impulsivity: f64,
        /// Per-try probability of quitting.
        #[arg(long, default_value_t = 0.0)]
        dropout: f64,
        /// Location of the log response time, in log-seconds.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        rt_log_mean: f64,
        #[arg(long, default_value_t = 0.5)]
        rt_log_sd: f64,
        #[arg(long, env = "STORE_ROOT")]
        store: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Print the metrics of a sealed session.
    Metrics {
        #[arg(long)]
        session: String,
        #[arg(long, env = "STORE_ROOT")]
        store: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Aggregate metrics over a grid of behaviour parameters into a CSV file.
    Sweep {
        /// JSON list of behaviour parameter objects.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        sessions_per_cell: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Level of the built-in game to play.
        #[arg(long, default_value_t = 1)]
        level: u32,
    },
    /// Run the HTTP service until interrupted.
    Serve {
        #[arg(long, env = "ARTHERAPIST_LISTEN", default_value = "127.0.0.1:8080")]
        listen: String,
        #[arg(long, env = "STORE_ROOT")]
        store: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Simulate {
            patients,
            sessions,
            seed,
            attention,
            impulsivity,
            dropout,
            rt_log_mean,
            rt_log_sd,
            store,
            format,
        } => {
            let seed = seed.unwrap_or_else(rand::random);
            let behavior = BehaviorParams { attention, impulsivity, rt_log_mean, rt_log_sd, dropout_hazard: dropout, seed: 0 };
            if let Err(errors) = behavior.validate() {
                let lines: Vec<String> = errors
                    .iter()
                    .map(|e| format!("--{}: {}", flag_name(&e.field), e.message))
                    .collect();
                return Err(CliError::Usage(anyhow::anyhow!("{}", lines.join("; "))));
            }
            let store = commands::open(&store)?;
            let args = commands::SimulateArgs { patients, sessions, seed, behavior };
            let rows = commands::simulate(&store, &args)?;
            if format == Format::Table {
                writeln!(stdout, "seed {seed}").map_err(anyhow::Error::from)?;
            } else {
                eprintln!("seed {seed}");
            }
            commands::write_summary(&mut stdout, &rows, format)?;
        }
        Command::Metrics { session, store, format } => {
            let store = commands::open(&store)?;
            let m = commands::metrics(&store, &session)?;
            commands::write_metrics(&mut stdout, &session, &m, format)?;
        }
        Command::Sweep { grid, sessions_per_cell, out, seed, level } => {
            let rows = commands::run_sweep(&commands::SweepArgs { grid: &grid, sessions_per_cell, out: &out, seed, level })?;
            writeln!(stdout, "wrote {rows} rows to {}", out.display()).map_err(anyhow::Error::from)?;
        }
        Command::Serve { listen, store } => {
            drop(stdout);
            commands::serve(&listen, &store)?;
        }
    }
    Ok(())
}

/// Command-line flag for a behaviour parameter field.
fn flag_name(field: &str) -> String {
    match field {
        "dropout_hazard" => "dropout".into(),
        other => other.replace('_', "-"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
