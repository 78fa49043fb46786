//! Self-contained JSON description of one experiment: scale, window, control
//! system, fixed control, tube, and numeric options.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calculus::Mode;
use crate::dynamics::{ControlSet, ControlSystem, FixedDynamics};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::solver::SolveOptions;
use crate::timescale::TimeScale;
use crate::viability::{EgressSampling, SearchOptions, Tube, ViabilityProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub timescale: TimeScale,
    pub window: (f64, f64),
    pub system: ControlSystem,
    pub fixed_control: Vec<f64>,
    pub tube: Tube,
    pub solve: SolveOptions,
    pub search: SearchOptions,
    pub tangential_samples: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    timescale: Vec<(f64, f64)>,
    window: (f64, f64),
    mode: Mode,
    n: usize,
    m: usize,
    rhs: Vec<String>,
    controls: ControlsFile,
    fixed_control: Vec<f64>,
    tube: TubeFile,
    #[serde(default)]
    solve: SolveFile,
    #[serde(default)]
    search: SearchFile,
    #[serde(default)]
    egress: EgressFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum ControlsFile {
    Ball(f64),
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TubeFile {
    lower: Vec<String>,
    upper: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SolveFile {
    h_dense: f64,
    implicit_tol: f64,
    implicit_max_iter: usize,
    blowup_bound: f64,
}

impl Default for SolveFile {
    fn default() -> Self {
        let d = SolveOptions::default();
        SolveFile {
            h_dense: d.h_dense,
            implicit_tol: d.implicit_tol,
            implicit_max_iter: d.implicit_max_iter,
            blowup_bound: d.blowup_bound,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SearchFile {
    lattice_size: usize,
    refinement_levels: usize,
}

impl Default for SearchFile {
    fn default() -> Self {
        let d = SearchOptions::default();
        SearchFile { lattice_size: d.lattice_size, refinement_levels: d.refinement_levels }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EgressFile {
    tangential_samples: usize,
}

impl Default for EgressFile {
    fn default() -> Self {
        EgressFile { tangential_samples: EgressSampling::default().tangential_samples }
    }
}

fn parse_list(key: &str, items: &[String]) -> Result<Vec<Expr>> {
    items
        .iter()
        .enumerate()
        .map(|(k, s)| Expr::parse(s).map_err(|e| Error::Parse(format!("{key}[{k}] = {s:?}: {e}"))))
        .collect()
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Scenario::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Scenario::from_json(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn from_file(f: ScenarioFile) -> Result<Scenario> {
        let timescale = TimeScale::new(&f.timescale)?;
        let rhs = parse_list("rhs", &f.rhs)?;
        if rhs.len() != f.n {
            return Err(Error::Validation(format!("n = {} but rhs has {} components", f.n, rhs.len())));
        }
        let controls = match f.controls {
            ControlsFile::Ball(r) => ControlSet::ball(r, f.m)?,
            ControlsFile::Box { lo, hi } => ControlSet::cube(lo, hi)?,
        };
        if controls.dim() != f.m {
            return Err(Error::Validation(format!("m = {} but control set has dimension {}", f.m, controls.dim())));
        }
        let system = ControlSystem::new(rhs, controls, f.mode)?;
        let lower = parse_list("tube.lower", &f.tube.lower)?;
        let upper = parse_list("tube.upper", &f.tube.upper)?;
        if lower.len() != f.n || upper.len() != f.n {
            return Err(Error::Validation(format!("tube bounds must have {} components", f.n)));
        }
        let tube = Tube::new(lower, upper, f.mode)?;
        let scenario = Scenario {
            timescale,
            window: f.window,
            system,
            fixed_control: f.fixed_control,
            tube,
            solve: SolveOptions {
                h_dense: f.solve.h_dense,
                implicit_tol: f.solve.implicit_tol,
                implicit_max_iter: f.solve.implicit_max_iter,
                blowup_bound: f.solve.blowup_bound,
            },
            search: SearchOptions {
                lattice_size: f.search.lattice_size,
                refinement_levels: f.search.refinement_levels,
                override_egress: false,
            },
            tangential_samples: f.egress.tangential_samples,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Window membership, mode agreement, control feasibility, and
    /// `lower < upper` on every grid point of the window.
    pub fn validate(&self) -> Result<()> {
        let (t0, t1) = self.window;
        self.timescale.restrict(t0, t1)?;
        self.solve.validate()?;
        if self.system.mode() != self.tube.mode() {
            return Err(Error::Validation(format!(
                "system is {} but tube is {}",
                self.system.mode(),
                self.tube.mode()
            )));
        }
        if self.tube.n() != self.system.n() {
            return Err(Error::Validation("tube and system dimensions differ".into()));
        }
        self.system
            .fix_control(&self.fixed_control)
            .map_err(|e| Error::Validation(e.to_string()))?;
        if self.search.lattice_size == 0 || self.tangential_samples == 0 {
            return Err(Error::Validation("lattice_size and tangential_samples must be positive".into()));
        }
        self.tube.validate_on(&self.timescale.grid(t0, t1, self.solve.h_dense)?)
    }

    pub fn mode(&self) -> Mode {
        self.system.mode()
    }

    pub fn dynamics(&self) -> Result<FixedDynamics> {
        self.system.fix_control(&self.fixed_control)
    }

    pub fn egress_sampling(&self) -> EgressSampling {
        EgressSampling {
            h_dense: self.solve.h_dense,
            tangential_samples: self.tangential_samples,
            ..EgressSampling::default()
        }
    }

    pub fn problem<'a>(&'a self, dynamics: &'a FixedDynamics) -> ViabilityProblem<'a> {
        ViabilityProblem {
            ts: &self.timescale,
            dynamics,
            tube: &self.tube,
            window: self.window,
            solve: self.solve,
        }
    }

    /// The mirrored problem on the dual scale: window `[-t1, -t0]`, mode
    /// flipped, `rhs(s) = -g(-s, y, v)`, bounds reflected in time.
    pub fn dual(&self) -> Scenario {
        Scenario {
            timescale: self.timescale.dual(),
            window: (-self.window.1, -self.window.0),
            system: self.system.dual(),
            fixed_control: self.fixed_control.clone(),
            tube: self.tube.dual(),
            solve: self.solve,
            search: self.search,
            tangential_samples: self.tangential_samples,
        }
    }

    fn to_file(&self) -> ScenarioFile {
        let print = |v: &[Expr]| v.iter().map(|e| e.to_string()).collect::<Vec<_>>();
        let controls = match self.system.controls() {
            ControlSet::Ball { radius, .. } => ControlsFile::Ball(*radius),
            ControlSet::Box { lo, hi } => ControlsFile::Box { lo: lo.clone(), hi: hi.clone() },
        };
        ScenarioFile {
            timescale: self.timescale.pairs(),
            window: self.window,
            mode: self.mode(),
            n: self.system.n(),
            m: self.system.m(),
            rhs: print(self.system.rhs()),
            controls,
            fixed_control: self.fixed_control.clone(),
            tube: TubeFile { lower: print(self.tube.lower()), upper: print(self.tube.upper()) },
            solve: SolveFile {
                h_dense: self.solve.h_dense,
                implicit_tol: self.solve.implicit_tol,
                implicit_max_iter: self.solve.implicit_max_iter,
                blowup_bound: self.solve.blowup_bound,
            },
            search: SearchFile {
                lattice_size: self.search.lattice_size,
                refinement_levels: self.search.refinement_levels,
            },
            egress: EgressFile { tangential_samples: self.tangential_samples },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario fields are always serializable")
    }
}
