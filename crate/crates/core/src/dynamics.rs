//! Control systems `x^Δ = f(t, x, u)` / `y^∇ = g(t, y, v)`, their fixed-control
//! restrictions, the induced set-valued right-hand side, and recovery of a
//! control selection from a trajectory.

use rayon::prelude::*;

use crate::calculus::{Mode, ScaleFunction};
use crate::error::{Error, Result};
use crate::expr::{neg, Env, Expr, Var};
use crate::solver::{fmt17, Trajectory};

/// Slack allowed on the boundary of a control set.
pub const CONTROL_TOL: f64 = 1e-12;

/// Compact set of admissible control values.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSet {
    /// Closed Euclidean ball of the given radius centred at the origin.
    Ball { radius: f64, dim: usize },
    /// Closed box `lo ≤ v ≤ hi`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl ControlSet {
    pub fn ball(radius: f64, dim: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || dim == 0 {
            return Err(Error::InvalidControlSet(format!(
                "ball needs radius > 0 and dimension ≥ 1, got r = {radius}, m = {dim}"
            )));
        }
        Ok(ControlSet::Ball { radius, dim })
    }

    pub fn cube(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidControlSet("box bounds must have equal nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidControlSet("box needs lo < hi componentwise".into()));
        }
        Ok(ControlSet::Box { lo, hi })
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Ball { dim, .. } => *dim,
            ControlSet::Box { lo, .. } => lo.len(),
        }
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        if v.len() != self.dim() {
            return false;
        }
        match self {
            ControlSet::Ball { radius, .. } => norm(v) <= radius + CONTROL_TOL,
            ControlSet::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(x, (a, b))| *x >= a - CONTROL_TOL && *x <= b + CONTROL_TOL),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        match self {
            ControlSet::Ball { radius, .. } => {
                let r = norm(v);
                if r <= *radius {
                    v.to_vec()
                } else {
                    v.iter().map(|x| x * radius / r).collect()
                }
            }
            ControlSet::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(x, (a, b))| x.clamp(*a, *b))
                .collect(),
        }
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ControlSet::Ball { radius, dim } => (vec![-radius; *dim], vec![*radius; *dim]),
            ControlSet::Box { lo, hi } => (lo.clone(), hi.clone()),
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// A control system: `n` right-hand side components over `t, y1..yn, v1..vm`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSystem {
    rhs: Vec<Expr>,
    controls: ControlSet,
    mode: Mode,
}

impl ControlSystem {
    pub fn new(rhs: Vec<Expr>, controls: ControlSet, mode: Mode) -> Result<Self> {
        let n = rhs.len();
        let m = controls.dim();
        if n == 0 {
            return Err(Error::Validation("system needs at least one component".into()));
        }
        for (i, e) in rhs.iter().enumerate() {
            let mut bad = None;
            e.visit_vars(&mut |v| match v {
                Var::Y(k) if k > n => bad = Some(v),
                Var::V(k) if k > m => bad = Some(v),
                _ => {}
            });
            if let Some(v) = bad {
                return Err(Error::Validation(format!(
                    "rhs component {} uses undeclared variable {v} (n = {n}, m = {m})",
                    i + 1
                )));
            }
        }
        Ok(ControlSystem { rhs, controls, mode })
    }

    pub fn parse(rhs: &[&str], controls: ControlSet, mode: Mode) -> Result<Self> {
        let rhs = rhs.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
        Self::new(rhs, controls, mode)
    }

    pub fn n(&self) -> usize {
        self.rhs.len()
    }

    pub fn m(&self) -> usize {
        self.controls.dim()
    }

    pub fn rhs(&self) -> &[Expr] {
        &self.rhs
    }

    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn eval(&self, t: f64, y: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n() {
            return Err(Error::Dimension { expected: self.n(), got: y.len() });
        }
        let env = Env::new(t, y, v);
        self.rhs.iter().map(|e| e.eval(&env)).collect()
    }

    /// The system on the dual scale: `x^Δ̂(s) = -g(-s, x, v)` (and conversely).
    pub fn dual(&self) -> ControlSystem {
        ControlSystem {
            rhs: self.rhs.iter().map(|e| neg(e.reflect_time())).collect(),
            controls: self.controls.clone(),
            mode: self.mode.flip(),
        }
    }

    pub fn fix_control(&self, v: &[f64]) -> Result<FixedDynamics> {
        if !self.controls.contains(v) {
            return Err(Error::InfeasibleControl(v.to_vec()));
        }
        Ok(FixedDynamics::build(self.clone(), v.to_vec()))
    }

    pub fn inclusion(&self) -> InclusionRhs<'_> {
        InclusionRhs { system: self }
    }

    /// True when the rhs equals `base(t, y) + v` (requires `n == m`).
    fn is_identity_affine(&self) -> bool {
        if self.n() != self.m() {
            return false;
        }
        self.rhs.iter().enumerate().all(|(i, e)| {
            (0..self.m()).all(|j| {
                let want = if i == j { 1.0 } else { 0.0 };
                matches!(e.diff(Var::V(j + 1)).map(|d| d.constant_value()), Ok(Some(c)) if c == want)
            })
        })
    }

    /// The control minimizing `‖d - f(t, y, v)‖₂` over the control set, and
    /// the minimum itself.
    fn best_control(&self, t: f64, y: &[f64], d: &[f64], affine: bool) -> Result<(Vec<f64>, f64)> {
        let residual = |v: &[f64]| -> Result<f64> { Ok(distance(d, &self.eval(t, y, v)?)) };
        if affine {
            let base = self.eval(t, y, &vec![0.0; self.m()])?;
            let target: Vec<f64> = d.iter().zip(&base).map(|(a, b)| a - b).collect();
            let v = self.controls.project(&target);
            let r = residual(&v)?;
            return Ok((v, r));
        }
        grid_minimize(&self.controls, residual)
    }
}

const SEARCH_SIDE: usize = 32;
const SEARCH_REFINEMENTS: usize = 3;

/// Lattice minimization over the control set, refined around the incumbent.
fn grid_minimize(
    set: &ControlSet,
    objective: impl Fn(&[f64]) -> Result<f64>,
) -> Result<(Vec<f64>, f64)> {
    let (mut lo, mut hi) = set.bounding_box();
    let m = lo.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..=SEARCH_REFINEMENTS {
        let mut idx = vec![0usize; m];
        loop {
            let point: Vec<f64> = (0..m)
                .map(|k| lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / (SEARCH_SIDE - 1) as f64)
                .collect();
            let v = set.project(&point);
            if let Ok(r) = objective(&v) {
                if best.as_ref().is_none_or(|(_, b)| r < *b) {
                    best = Some((v, r));
                }
            }
            let mut k = 0;
            while k < m {
                idx[k] += 1;
                if idx[k] < SEARCH_SIDE {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == m {
                break;
            }
        }
        let Some((centre, _)) = &best else { break };
        for k in 0..m {
            let cell = (hi[k] - lo[k]) / (SEARCH_SIDE - 1) as f64;
            lo[k] = centre[k] - cell;
            hi[k] = centre[k] + cell;
        }
    }
    best.ok_or_else(|| Error::Domain("rhs undefined for every sampled control".into()))
}

/// A control system with the control frozen at `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedDynamics {
    system: ControlSystem,
    v: Vec<f64>,
    /// `∂f_i/∂y_j`, absent when some component is not differentiable.
    jacobian: Option<Vec<Vec<Expr>>>,
}

impl FixedDynamics {
    fn build(system: ControlSystem, v: Vec<f64>) -> Self {
        let n = system.n();
        let jacobian = system
            .rhs
            .iter()
            .map(|e| (1..=n).map(|j| e.diff(Var::Y(j))).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()
            .ok();
        FixedDynamics { system, v, jacobian }
    }

    /// Symbolic Jacobian `∂f/∂y` at `(t, y)`, if available.
    pub fn jacobian(&self, t: f64, y: &[f64]) -> Option<Result<Vec<Vec<f64>>>> {
        let rows = self.jacobian.as_ref()?;
        let env = Env::new(t, y, &self.v);
        Some(
            rows.iter()
                .map(|row| row.iter().map(|e| e.eval(&env)).collect())
                .collect(),
        )
    }
    pub fn system(&self) -> &ControlSystem {
        &self.system
    }

    pub fn control(&self) -> &[f64] {
        &self.v
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    pub fn mode(&self) -> Mode {
        self.system.mode
    }

    pub fn eval(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        self.system.eval(t, y, &self.v)
    }

    /// Same control, dual system.
    pub fn dual(&self) -> FixedDynamics {
        FixedDynamics::build(self.system.dual(), self.v.clone())
    }
}

/// The set-valued map `(t, y) ↦ {f(t, y, v) : v ∈ U}`.
#[derive(Debug, Clone, Copy)]
pub struct InclusionRhs<'a> {
    system: &'a ControlSystem,
}

impl InclusionRhs<'_> {
    /// Distance from `d` to the image set, with a minimizing control.
    pub fn distance(&self, t: f64, y: &[f64], d: &[f64]) -> Result<(Vec<f64>, f64)> {
        let affine = self.system.is_identity_affine();
        self.system.best_control(t, y, d, affine)
    }

    pub fn contains(&self, t: f64, y: &[f64], d: &[f64], tol: f64) -> Result<bool> {
        Ok(self.distance(t, y, d)?.1 <= tol)
    }
}

/// A recovered control value at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSample {
    pub t: f64,
    pub v: Vec<f64>,
    pub residual: f64,
}

/// CSV with header `t,v1,...,vm,residual`.
pub fn controls_to_csv(samples: &[ControlSample]) -> Result<String> {
    let m = samples.first().map_or(0, |s| s.v.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|j| format!("v{j}")));
    header.push("residual".into());
    crate::solver::write_csv(
        &header,
        samples.iter().map(|s| {
            let mut row = vec![fmt17(s.t)];
            row.extend(s.v.iter().map(|x| fmt17(*x)));
            row.push(fmt17(s.residual));
            row
        }),
    )
}

/// Time-scale derivative of each trajectory component at every grid point
/// where it is defined (`T^κ` for delta, `T_κ` for nabla).
pub fn trajectory_derivatives(traj: &Trajectory) -> Result<Vec<(usize, Vec<f64>)>> {
    let n = traj.dim();
    let comps = (0..n)
        .map(|i| {
            let values = traj.states().iter().map(|s| s[i]).collect();
            ScaleFunction::from_samples(traj.scale().clone(), traj.grid().to_vec(), values)
        })
        .collect::<Result<Vec<_>>>()?;
    let kappa = traj.mode().kappa();
    traj.grid()
        .iter()
        .enumerate()
        .filter(|(_, &t)| traj.scale().in_kappa(t, kappa))
        .map(|(k, &t)| {
            let d = comps
                .iter()
                .map(|f| f.derivative(t, traj.mode()).map(|d| d.value))
                .collect::<Result<Vec<_>>>()?;
            Ok((k, d))
        })
        .collect()
}

/// Recovers a control selection along a trajectory: at every grid point the
/// control minimizing `‖D(t) - f(t, y(t), v)‖₂`, where `D` is the trajectory's
/// time-scale derivative. Fails at the first point whose minimum exceeds `tol`.
pub fn recover_control(sys: &ControlSystem, traj: &Trajectory, tol: f64) -> Result<Vec<ControlSample>> {
    if traj.mode() != sys.mode() {
        return Err(Error::ModeMismatch(format!(
            "trajectory is {} but system is {}",
            traj.mode(),
            sys.mode()
        )));
    }
    if traj.dim() != sys.n() {
        return Err(Error::Dimension { expected: sys.n(), got: traj.dim() });
    }
    let derivs = trajectory_derivatives(traj)?;
    let affine = sys.is_identity_affine();
    let results: Vec<Result<ControlSample>> = derivs
        .par_iter()
        .map(|(k, d)| {
            let t = traj.grid()[*k];
            let (v, residual) = sys.best_control(t, &traj.states()[*k], d, affine)?;
            if residual > tol {
                return Err(Error::NoFeasibleControl { t, best_residual: residual });
            }
            Ok(ControlSample { t, v, residual })
        })
        .collect();
    results.into_iter().collect()
}
