use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csm_sim::run::{report_tables, with_threads};
use csm_sim::{
    parse_scenario, run_scenario, sweep, to_json, RunOptions, ScenarioError, SweepParam,
};

const THREADS_ENV: &str = "CSM_SIM_THREADS";

#[derive(Parser)]
#[command(
    name = "csm-sim",
    version,
    about = "Contexts/modalities measurement simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write a JSON report.
    Run {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of sampled trajectories.
        #[arg(long, default_value_t = 10_000)]
        trajectories: usize,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also enumerate every path exactly.
        #[arg(long)]
        exhaustive: bool,
        /// Report entropies in bits.
        #[arg(long)]
        bits: bool,
        /// Directory for CSV tables of the scenario's sweeps.
        #[arg(long)]
        tables: Option<PathBuf>,
    },
    /// Check the scenario's invariants; exits 1 if any residual exceeds the tolerance.
    Verify {
        file: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one parameter and write a CSV table.
    Sweep {
        file: PathBuf,
        /// One of g, m_count, phi.
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        /// Number of grid points, endpoints included.
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn threads_from_env() -> Result<Option<usize>, ScenarioError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(ScenarioError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(None),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), ScenarioError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Returns `Ok(false)` when verification ran but a check failed.
fn execute(command: Command) -> Result<bool, ScenarioError> {
    let threads = threads_from_env()?;
    match command {
        Command::Run {
            file,
            seed,
            trajectories,
            out,
            exhaustive,
            bits,
            tables,
        } => {
            let scenario = parse_scenario(&file)?;
            let options = RunOptions {
                exhaustive,
                threads,
                bits,
            };
            let report = run_scenario(&scenario, seed, trajectories, &options)?;
            if let Some(dir) = tables {
                std::fs::create_dir_all(&dir).map_err(|source| ScenarioError::Io {
                    path: dir.clone(),
                    source,
                })?;
                for (stem, table) in report_tables(&report) {
                    emit(Some(&dir.join(format!("{stem}.csv"))), &table.to_csv())?;
                }
            }
            emit(out.as_deref(), &to_json(&report))?;
            Ok(true)
        }
        Command::Verify {
            file,
            tolerance,
            out,
        } => {
            let scenario = parse_scenario(&file)?;
            let report = csm_sim::verify(&scenario, tolerance)?;
            emit(out.as_deref(), &to_json(&report))?;
            if let Some(c) = &report.first_failure {
                eprintln!(
                    "verification failed: {} residual {:e} exceeds tolerance {:e}",
                    c.name, c.residual, tolerance
                );
            }
            Ok(report.passed)
        }
        Command::Sweep {
            file,
            param,
            from,
            to,
            steps,
            out,
        } => {
            let param: SweepParam = param.parse()?;
            let scenario = parse_scenario(&file)?;
            let table = with_threads(threads, || sweep(&scenario, param, from, to, steps))??;
            emit(out.as_deref(), &table.to_csv())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
