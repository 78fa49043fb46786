use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use tscale::dynamics::controls_to_csv;
use tscale::solver::solve;
use tscale::viability::check_egress;
use tscale::{recover_control, search_viable, solve_nabla_via_duality, Error, Mode, Scenario, Trajectory};

/// Calculus and viability on time scales.
#[derive(Parser)]
#[command(name = "tscale", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Route {
    Direct,
    Duality,
}

#[derive(Subcommand)]
enum Command {
    /// Sample every tube face and report strict-egress margins.
    CheckEgress {
        scenario: PathBuf,
        /// CSV of every sampled boundary point.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the fixed-control dynamics over the scenario window.
    Solve {
        scenario: PathBuf,
        /// Initial state, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        y0: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Nabla problems only: solve directly or through the dual scale.
        #[arg(long, value_enum, default_value = "direct")]
        route: Route,
    },
    /// Search the tube cross-section at t0 for a viable initial value.
    Search {
        scenario: PathBuf,
        /// Search even without a strict-egress certificate.
        #[arg(long)]
        override_egress: bool,
        /// JSON result.
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV of the best trajectory.
        #[arg(long)]
        traj_out: Option<PathBuf>,
    },
    /// Recover a control selection from a trajectory CSV.
    RecoverControl {
        scenario: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the scenario transformed to the dual time scale.
    Dualize {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in duality and solver checks.
    Selftest,
}

struct Run {
    outputs: Vec<PathBuf>,
    summary: Value,
    ok: bool,
}

impl Run {
    fn new(summary: Value) -> Self {
        Run { outputs: Vec::new(), summary, ok: true }
    }
}

#[derive(Debug)]
enum Failure {
    Domain(Error),
    Io(PathBuf, std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Domain(e) => write!(f, "{e}"),
            Failure::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

fn write(path: &Path, text: &str, run: &mut Run) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Io(path.to_path_buf(), e))?;
    run.outputs.push(path.to_path_buf());
    Ok(())
}

fn emit(path: Option<&Path>, text: &str, run: &mut Run) -> Result<(), Failure> {
    match path {
        Some(p) => write(p, text, run),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(command: &Command) -> Result<Run, Failure> {
    match command {
        Command::CheckEgress { scenario, out } => {
            let s = Scenario::load(scenario)?;
            let report = check_egress(&s.timescale, &s.dynamics()?, &s.tube, s.window, &s.egress_sampling())?;
            let worst = report.worst.as_ref().map(|w| {
                json!({"face": w.face.index, "side": w.face.side.to_string(), "t": w.t, "point": w.point, "margin": w.margin})
            });
            let mut run = Run::new(json!({
                "all_strict_egress": report.all_strict_egress,
                "samples": report.samples.len(),
                "worst": worst,
            }));
            if let Some(p) = out {
                write(p, &report.to_csv()?, &mut run)?;
            }
            Ok(run)
        }
        Command::Solve { scenario, y0, out, route } => {
            let s = Scenario::load(scenario)?;
            let horizon = s.timescale.restrict(s.window.0, s.window.1)?;
            let dynamics = s.dynamics()?;
            let traj = match (route, s.mode()) {
                (Route::Duality, Mode::Nabla) => solve_nabla_via_duality(&horizon, &dynamics, s.window.0, y0, &s.solve)?,
                (Route::Duality, Mode::Delta) => {
                    return Err(Error::ModeMismatch("the duality route solves nabla problems".into()).into())
                }
                (Route::Direct, _) => solve(&horizon, &dynamics, s.window.0, y0, &s.solve)?,
            };
            let mut run = Run::new(json!({"window": [s.window.0, s.window.1], "points": traj.grid().len(), "final": traj.last()}));
            emit(out.as_deref(), &traj.to_csv()?, &mut run)?;
            Ok(run)
        }
        Command::Search { scenario, override_egress, out, traj_out } => {
            let s = Scenario::load(scenario)?;
            let dynamics = s.dynamics()?;
            let mut opts = s.search;
            opts.override_egress = *override_egress;
            let result = search_viable(&s.problem(&dynamics), &s.egress_sampling(), &opts)?;
            let mut run = Run::new(result.to_json());
            if let Some(p) = out {
                let text = serde_json::to_string_pretty(&result.to_json()).expect("json value");
                write(p, &(text + "\n"), &mut run)?;
            }
            if let (Some(p), Some(traj)) = (traj_out, &result.trajectory) {
                write(p, &traj.to_csv()?, &mut run)?;
            }
            Ok(run)
        }
        Command::RecoverControl { scenario, traj, tol, out } => {
            let s = Scenario::load(scenario)?;
            let text = std::fs::read_to_string(traj).map_err(|e| Failure::Io(traj.clone(), e))?;
            let horizon = s.timescale.restrict(s.window.0, s.window.1)?;
            let trajectory = Trajectory::from_csv(&text, horizon, s.mode())?;
            let samples = recover_control(&s.system, &trajectory, *tol)?;
            let worst = samples.iter().map(|c| c.residual).fold(0.0, f64::max);
            let mut run = Run::new(json!({"points": samples.len(), "max_residual": worst}));
            emit(out.as_deref(), &controls_to_csv(&samples)?, &mut run)?;
            Ok(run)
        }
        Command::Dualize { scenario, out } => {
            let s = Scenario::load(scenario)?;
            let d = s.dual();
            d.validate()?;
            let mut run = Run::new(json!({"mode": d.mode().to_string(), "window": [d.window.0, d.window.1]}));
            write(out, &(d.to_json() + "\n"), &mut run)?;
            Ok(run)
        }
        Command::Selftest => {
            let checks = tscale::selftest::run();
            for c in &checks {
                let verdict = if c.passed { "pass" } else { "FAIL" };
                println!("{verdict} [{}] {}: {}", c.suite, c.name, c.detail);
            }
            let passed = checks.iter().filter(|c| c.passed).count();
            let mut run = Run::new(json!({"passed": passed, "failed": checks.len() - passed}));
            run.ok = passed == checks.len();
            Ok(run)
        }
    }
}

fn name(command: &Command) -> &'static str {
    match command {
        Command::CheckEgress { .. } => "check-egress",
        Command::Solve { .. } => "solve",
        Command::Search { .. } => "search",
        Command::RecoverControl { .. } => "recover-control",
        Command::Dualize { .. } => "dualize",
        Command::Selftest => "selftest",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    match execute(&cli.command) {
        Ok(run) => {
            let record = json!({
                "command": name(&cli.command),
                "outputs": run.outputs,
                "summary": run.summary,
                "wall_time_s": start.elapsed().as_secs_f64(),
            });
            eprintln!("{record}");
            if run.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
