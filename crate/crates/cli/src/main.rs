//! `topoflock` — scenario validation, dwell planning, switched
//! simulation, decentralized switching runs, and inequality checks, with
//! CSV/JSON outputs for external plotting.
//!
//! Exit codes: 0 success (including delta-consensus and asymptotic
//! progress), 1 configuration or validation error, 2 run reached the
//! horizon without progress. `TOPOFLOCK_LOG` (error|info|debug) controls
//! log verbosity on stderr.

mod commands;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};

use commands::CmdOutput;

/// A configuration-level failure; always maps to exit code 1.
#[derive(Debug)]
pub struct CliError {
    message: String,
}

impl CliError {
    pub fn parse(message: String) -> Self {
        CliError { message }
    }

    pub fn validation(err: topoflock_core::Error) -> Self {
        CliError {
            message: err.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Parser)]
#[command(
    name = "topoflock",
    version,
    about = "Switched second-order consensus harness"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Parallel workers for multi-scenario commands.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a scenario's topology set: connectivity, rational frequency
    /// ratios, distinct-spectrum member, spectra, periods, diameters.
    Validate {
        /// Emit the report as JSON instead of text.
        #[arg(long)]
        json: bool,
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
    },
    /// Search switching parameters and emit a dwell-time plan.
    Plan {
        scenario: PathBuf,
        /// Base dwell target (overrides the scenario's plan section).
        #[arg(long)]
        tau_hat: Option<f64>,
        /// Half-period multiplier.
        #[arg(long)]
        m: Option<u32>,
        /// Write the plan JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the switched system and write a trace CSV.
    Simulate {
        /// Keep one topology active the whole run (one-based index).
        #[arg(long)]
        fixed_mode: Option<usize>,
        /// Use a previously written plan JSON for the switching signal.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Integrate with fixed-step RK4 instead of the closed form.
        #[arg(long)]
        rk4: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
    },
    /// Run the decentralized topology-switching loop.
    Run {
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
    },
    /// Inequality checks: the contradiction function or a plan
    /// certificate.
    Verify {
        /// Sweep the contradiction function g(beta) for --kappa.
        #[arg(long)]
        prop1: bool,
        #[arg(long)]
        kappa: Option<u32>,
        #[arg(long, default_value_t = 10_000)]
        grid: usize,
        /// Evaluate the scalar certificate of this plan JSON against the
        /// scenario given as positional argument.
        #[arg(long)]
        certificate: Option<PathBuf>,
        scenario: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("TOPOFLOCK_LOG", "error"))
        .init();

    let cli = Cli::parse();
    let jobs = cli.jobs.max(1);

    let code = match cli.cmd {
        Cmd::Validate { json, scenarios } => {
            run_batch(&scenarios, jobs, |p| commands::cmd_validate(p, json))
        }
        Cmd::Plan {
            scenario,
            tau_hat,
            m,
            out,
        } => emit(commands::cmd_plan(&scenario, tau_hat, m, out.as_deref())),
        Cmd::Simulate {
            fixed_mode,
            plan,
            rk4,
            out_dir,
            scenarios,
        } => run_batch(&scenarios, jobs, |p| {
            commands::cmd_simulate(p, fixed_mode, plan.as_deref(), rk4, out_dir.as_deref())
        }),
        Cmd::Run { out_dir, scenarios } => run_batch(&scenarios, jobs, |p| {
            commands::cmd_run(p, out_dir.as_deref())
        }),
        Cmd::Verify {
            prop1,
            kappa,
            grid,
            certificate,
            scenario,
        } => match (prop1, certificate) {
            (true, None) => {
                let kappa = kappa.unwrap_or(1);
                emit(commands::cmd_verify_prop1(kappa, grid))
            }
            (false, Some(plan)) => match scenario {
                Some(sc) => emit(commands::cmd_verify_certificate(&plan, &sc)),
                None => {
                    eprintln!("error: --certificate needs a scenario argument");
                    1
                }
            },
            _ => {
                eprintln!("error: pass exactly one of --prop1 or --certificate <plan.json>");
                1
            }
        },
    };
    ExitCode::from(code as u8)
}

fn emit(result: Result<CmdOutput, CliError>) -> i32 {
    match result {
        Ok(out) => {
            print!("{}", out.text);
            out.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Processes scenarios with up to `jobs` worker threads, printing
/// per-scenario blocks in input order. Configuration errors dominate the
/// aggregate exit code; otherwise any horizon-without-progress result
/// surfaces as 2.
fn run_batch<F>(paths: &[PathBuf], jobs: usize, f: F) -> i32
where
    F: Fn(&Path) -> Result<CmdOutput, CliError> + Sync,
{
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CmdOutput, CliError>>>> =
        Mutex::new((0..paths.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..jobs.min(paths.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= paths.len() {
                    break;
                }
                let r = f(&paths[i]);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });

    let mut codes = Vec::new();
    for (path, result) in paths.iter().zip(results.into_inner().unwrap()) {
        match result.expect("every scenario processed") {
            Ok(out) => {
                print!("{}", out.text);
                codes.push(out.code);
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                codes.push(1);
            }
        }
    }
    if codes.contains(&1) {
        1
    } else if codes.contains(&2) {
        2
    } else {
        0
    }
}
