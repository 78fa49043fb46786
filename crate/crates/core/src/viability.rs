//! Tube constraints `lower_i(t) < y_i < upper_i(t)`, strict-egress checks on
//! their boundary faces, and a lattice search for initial values whose
//! trajectories stay in the closed tube.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::calculus::{Mode, ScaleFunction};
use crate::dynamics::FixedDynamics;
use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::solver::{self, SolveOptions, Trajectory};
use crate::timescale::TimeScale;

/// Per-coordinate bounds in `t`. For nabla problems `lower = γ`, `upper = β`;
/// for delta problems `lower = b`, `upper = c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tube {
    lower: Vec<Expr>,
    upper: Vec<Expr>,
    mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Lower,
    Upper,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Lower => "lower",
            Side::Upper => "upper",
        })
    }
}

/// A boundary face `{y_i = lower_i(t)}` or `{y_i = upper_i(t)}`; `index` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Face {
    pub index: usize,
    pub side: Side,
}

impl Tube {
    pub fn new(lower: Vec<Expr>, upper: Vec<Expr>, mode: Mode) -> Result<Tube> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Validation("tube needs matching nonempty lower/upper lists".into()));
        }
        for e in lower.iter().chain(&upper) {
            let mut only_t = true;
            e.visit_vars(&mut |v| only_t &= v == Var::T);
            if !only_t {
                return Err(Error::Validation(format!("tube bound `{e}` may only depend on t")));
            }
        }
        Ok(Tube { lower, upper, mode })
    }

    pub fn parse(lower: &[&str], upper: &[&str], mode: Mode) -> Result<Tube> {
        let p = |v: &[&str]| v.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>();
        Tube::new(p(lower)?, p(upper)?, mode)
    }

    pub fn n(&self) -> usize {
        self.lower.len()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn lower(&self) -> &[Expr] {
        &self.lower
    }

    pub fn upper(&self) -> &[Expr] {
        &self.upper
    }

    pub fn faces(&self) -> Vec<Face> {
        (1..=self.n())
            .flat_map(|index| [Side::Lower, Side::Upper].map(|side| Face { index, side }))
            .collect()
    }

    pub fn bound(&self, face: Face) -> &Expr {
        match face.side {
            Side::Lower => &self.lower[face.index - 1],
            Side::Upper => &self.upper[face.index - 1],
        }
    }

    /// `(lower(t), upper(t))`.
    pub fn bounds_at(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let env = Env::time(t);
        let lo = self.lower.iter().map(|e| e.eval(&env)).collect::<Result<Vec<_>>>()?;
        let hi = self.upper.iter().map(|e| e.eval(&env)).collect::<Result<Vec<_>>>()?;
        Ok((lo, hi))
    }

    /// Checks `lower_i(t) < upper_i(t)` at every given time.
    pub fn validate_on(&self, times: &[f64]) -> Result<()> {
        for &t in times {
            let (lo, hi) = self.bounds_at(t)?;
            if let Some(i) = (0..self.n()).find(|&i| !(lo[i] < hi[i])) {
                return Err(Error::Validation(format!(
                    "tube lower bound {} is not below upper bound {} for y{} at t = {t}",
                    lo[i],
                    hi[i],
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Signed distance to the tube boundary: positive inside, zero on a face,
    /// negative outside.
    pub fn margin(&self, t: f64, y: &[f64]) -> Result<f64> {
        if y.len() != self.n() {
            return Err(Error::Dimension { expected: self.n(), got: y.len() });
        }
        let (lo, hi) = self.bounds_at(t)?;
        Ok((0..self.n())
            .map(|i| (hi[i] - y[i]).min(y[i] - lo[i]))
            .fold(f64::INFINITY, f64::min))
    }

    /// Bounds reflected in time (`b*(s) = b(-s)`), mode flipped. A curve `y`
    /// lies in this tube iff its dual lies in the dual tube.
    pub fn dual(&self) -> Tube {
        Tube {
            lower: self.lower.iter().map(Expr::reflect_time).collect(),
            upper: self.upper.iter().map(Expr::reflect_time).collect(),
            mode: self.mode.flip(),
        }
    }
}

/// Smallest tube margin along a trajectory.
pub fn trajectory_margin(tube: &Tube, traj: &Trajectory) -> Result<f64> {
    traj.grid()
        .iter()
        .zip(traj.states())
        .map(|(&t, y)| tube.margin(t, y))
        .try_fold(f64::INFINITY, |m, r| r.map(|x| m.min(x)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgressSampling {
    /// Mesh for dense parts of the window; isolated points are always sampled.
    pub h_dense: f64,
    /// Lattice points per free coordinate, strictly inside that coordinate's bounds.
    pub tangential_samples: usize,
    /// Rounds of lattice halving around the worst sample.
    pub refinements: usize,
}

impl Default for EgressSampling {
    fn default() -> Self {
        EgressSampling { h_dense: 1e-3, tangential_samples: 9, refinements: 3 }
    }
}

/// One sampled boundary point and its egress margin.
#[derive(Debug, Clone, PartialEq)]
pub struct EgressSample {
    pub face: Face,
    pub t: f64,
    /// The full boundary point; coordinate `face.index` sits on the bound.
    pub point: Vec<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgressReport {
    pub samples: Vec<EgressSample>,
    pub all_strict_egress: bool,
    pub worst: Option<EgressSample>,
}

impl EgressReport {
    fn from_samples(samples: Vec<EgressSample>) -> Self {
        let worst = samples
            .iter()
            .min_by(|a, b| a.margin.total_cmp(&b.margin))
            .cloned();
        let all_strict_egress = !samples.is_empty() && samples.iter().all(|s| s.margin > 0.0);
        EgressReport { samples, all_strict_egress, worst }
    }

    /// CSV with header `face,side,t,y1,...,yn,margin`.
    pub fn to_csv(&self) -> Result<String> {
        let n = self.samples.first().map_or(0, |s| s.point.len());
        let mut header = vec!["face".to_string(), "side".into(), "t".into()];
        header.extend((1..=n).map(|i| format!("y{i}")));
        header.push("margin".into());
        solver::write_csv(
            &header,
            self.samples.iter().map(|s| {
                let mut row = vec![s.face.index.to_string(), s.face.side.to_string(), solver::fmt17(s.t)];
                row.extend(s.point.iter().map(|x| solver::fmt17(*x)));
                row.push(solver::fmt17(s.margin));
                row
            }),
        )
    }
}

/// Evenly spaced values strictly inside `(lo, hi)`.
fn interior_lattice(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| lo + (hi - lo) * (k + 1) as f64 / (count + 1) as f64)
        .collect()
}

/// Cartesian product of per-coordinate value lists.
fn product(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&x| {
                    let mut p = prefix.clone();
                    p.push(x);
                    p
                })
            })
            .collect()
    })
}

struct FaceContext<'a> {
    dynamics: &'a FixedDynamics,
    tube: &'a Tube,
    bound_fns: Vec<(Face, ScaleFunction)>,
    mode: Mode,
}

impl FaceContext<'_> {
    /// Margin of the boundary point with free coordinates `free` (in order,
    /// skipping `face.index`). Lower face: `bound' - f_i`; upper face:
    /// `f_i - bound'`, with the time-scale derivative of the moving bound.
    fn samples_at(&self, t: f64, face_no: usize, frees: &[Vec<f64>]) -> Result<Vec<EgressSample>> {
        let (face, bound) = &self.bound_fns[face_no];
        let i = face.index - 1;
        let b = bound.value(t)?;
        let db = bound.derivative(t, self.mode)?.value;
        frees
            .iter()
            .map(|free| {
                let mut point = Vec::with_capacity(self.tube.n());
                point.extend_from_slice(&free[..i]);
                point.push(b);
                point.extend_from_slice(&free[i..]);
                let fi = self.dynamics.eval(t, &point)?[i];
                let margin = match face.side {
                    Side::Lower => db - fi,
                    Side::Upper => fi - db,
                };
                Ok(EgressSample { face: *face, t, point, margin })
            })
            .collect()
    }

    fn free_axes(&self, t: f64, face: Face, count: usize) -> Result<Vec<Vec<f64>>> {
        let (lo, hi) = self.tube.bounds_at(t)?;
        Ok((0..self.tube.n())
            .filter(|&j| j != face.index - 1)
            .map(|j| interior_lattice(lo[j], hi[j], count))
            .collect())
    }

    /// Lattice around `centre` with spacing `step`, kept strictly inside the bounds.
    fn refined_axes(&self, t: f64, face: Face, centre: &[f64], step: &[f64], count: usize) -> Result<Vec<Vec<f64>>> {
        let (lo, hi) = self.tube.bounds_at(t)?;
        let free: Vec<usize> = (0..self.tube.n()).filter(|&j| j != face.index - 1).collect();
        Ok(free
            .iter()
            .zip(step)
            .map(|(&j, &h)| {
                let half = (count as f64 - 1.0) / 2.0;
                (0..count)
                    .map(|k| centre[j] + (k as f64 - half) * h)
                    .filter(|&x| x > lo[j] && x < hi[j])
                    .collect()
            })
            .collect())
    }
}

/// Samples every face of the tube over the window and evaluates the strict
/// egress margin at each boundary point. Sample times are the window grid
/// restricted to the kappa trim on which the bound derivatives exist.
pub fn check_egress(
    ts: &TimeScale,
    dynamics: &FixedDynamics,
    tube: &Tube,
    window: (f64, f64),
    sampling: &EgressSampling,
) -> Result<EgressReport> {
    if dynamics.mode() != tube.mode() {
        return Err(Error::ModeMismatch(format!(
            "dynamics are {} but tube is {}",
            dynamics.mode(),
            tube.mode()
        )));
    }
    if dynamics.n() != tube.n() {
        return Err(Error::Dimension { expected: dynamics.n(), got: tube.n() });
    }
    if sampling.tangential_samples == 0 {
        return Err(Error::Validation("tangential_samples must be positive".into()));
    }
    let mode = tube.mode();
    let times: Vec<f64> = ts
        .grid(window.0, window.1, sampling.h_dense)?
        .into_iter()
        .filter(|&t| ts.in_kappa(t, mode.kappa()))
        .collect();
    let ctx = FaceContext {
        dynamics,
        tube,
        bound_fns: tube
            .faces()
            .into_iter()
            .map(|f| (f, ScaleFunction::from_expr(ts.clone(), tube.bound(f).clone())))
            .collect(),
        mode,
    };
    let count = sampling.tangential_samples;

    let per_time: Vec<Result<Vec<EgressSample>>> = times
        .par_iter()
        .map(|&t| {
            let mut out = Vec::new();
            for (k, (face, _)) in ctx.bound_fns.iter().enumerate() {
                let frees = product(&ctx.free_axes(t, *face, count)?);
                out.extend(ctx.samples_at(t, k, &frees)?);
            }
            Ok(out)
        })
        .collect();
    let mut samples = Vec::new();
    for r in per_time {
        samples.extend(r?);
    }

    // Resample the free coordinates more finely around the worst point.
    if tube.n() > 1 {
        if let Some(worst) = samples.iter().min_by(|a, b| a.margin.total_cmp(&b.margin)).cloned() {
            let face_no = ctx.bound_fns.iter().position(|(f, _)| *f == worst.face).unwrap_or(0);
            let (lo, hi) = tube.bounds_at(worst.t)?;
            let mut step: Vec<f64> = (0..tube.n())
                .filter(|&j| j != worst.face.index - 1)
                .map(|j| (hi[j] - lo[j]) / (count + 1) as f64)
                .collect();
            let mut centre = worst.point.clone();
            for _ in 0..sampling.refinements {
                step.iter_mut().for_each(|h| *h /= 2.0);
                let axes = ctx.refined_axes(worst.t, worst.face, &centre, &step, count)?;
                let fresh = ctx.samples_at(worst.t, face_no, &product(&axes))?;
                if let Some(better) = fresh.iter().min_by(|a, b| a.margin.total_cmp(&b.margin)) {
                    centre = better.point.clone();
                }
                samples.extend(fresh);
            }
        }
    }
    Ok(EgressReport::from_samples(samples))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub lattice_size: usize,
    pub refinement_levels: usize,
    /// Skip the strict-egress precondition.
    pub override_egress: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { lattice_size: 9, refinement_levels: 12, override_egress: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViabilityResult {
    pub found: bool,
    pub y_bar: Vec<f64>,
    /// Absent when even the best candidate could not be integrated.
    pub trajectory: Option<Trajectory>,
    pub min_tube_margin: f64,
    pub evaluations: usize,
    pub refinement_levels: usize,
}

impl ViabilityResult {
    /// `{found, y_bar, min_tube_margin, evaluations}`; a margin of −∞ becomes `null`.
    pub fn to_json(&self) -> serde_json::Value {
        let margin = if self.min_tube_margin.is_finite() {
            serde_json::json!(self.min_tube_margin)
        } else {
            serde_json::Value::Null
        };
        serde_json::json!({
            "found": self.found,
            "y_bar": self.y_bar,
            "min_tube_margin": margin,
            "evaluations": self.evaluations,
        })
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Everything needed to integrate and score one candidate initial value.
pub struct ViabilityProblem<'a> {
    pub ts: &'a TimeScale,
    pub dynamics: &'a FixedDynamics,
    pub tube: &'a Tube,
    pub window: (f64, f64),
    pub solve: SolveOptions,
}

impl ViabilityProblem<'_> {
    fn horizon(&self) -> Result<TimeScale> {
        self.ts.restrict(self.window.0, self.window.1)
    }

    /// Integrates from `y0` and returns the trajectory with its tube margin.
    pub fn evaluate(&self, y0: &[f64]) -> Result<(Trajectory, f64)> {
        let horizon = self.horizon()?;
        let traj = solver::solve(&horizon, self.dynamics, self.window.0, y0, &self.solve)?;
        let margin = trajectory_margin(self.tube, &traj)?;
        Ok((traj, margin))
    }

    fn fitness(&self, y0: &[f64]) -> f64 {
        self.evaluate(y0).map_or(f64::NEG_INFINITY, |(_, m)| m)
    }
}

/// Multi-resolution lattice search over the tube cross-section at `t0` for an
/// initial value whose trajectory keeps a nonnegative tube margin.
pub fn search_viable(
    problem: &ViabilityProblem<'_>,
    sampling: &EgressSampling,
    opts: &SearchOptions,
) -> Result<ViabilityResult> {
    if problem.dynamics.mode() != problem.tube.mode() {
        return Err(Error::ModeMismatch("dynamics and tube modes differ".into()));
    }
    if opts.lattice_size == 0 {
        return Err(Error::Validation("lattice_size must be positive".into()));
    }
    if !opts.override_egress {
        let report = check_egress(problem.ts, problem.dynamics, problem.tube, problem.window, sampling)?;
        if !report.all_strict_egress {
            return Err(Error::NoEgressCertificate);
        }
    }
    let t0 = problem.ts.snap(problem.window.0)?;
    let (lo, hi) = problem.tube.bounds_at(t0)?;
    let n = problem.tube.n();
    let count = opts.lattice_size;
    let mut step: Vec<f64> = (0..n).map(|i| (hi[i] - lo[i]) / (count + 1) as f64).collect();
    let mut axes: Vec<Vec<f64>> = (0..n).map(|i| interior_lattice(lo[i], hi[i], count)).collect();

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut evaluations = 0;
    for level in 0..=opts.refinement_levels {
        let candidates = product(&axes);
        evaluations += candidates.len();
        let scored: Vec<(Vec<f64>, f64)> = candidates
            .into_par_iter()
            .map(|y0| {
                let f = problem.fitness(&y0);
                (y0, f)
            })
            .collect();
        for (y0, f) in scored {
            let better = match &best {
                None => true,
                Some((by, bf)) => f > *bf || (f == *bf && lex_cmp(&y0, by).is_lt()),
            };
            if better {
                best = Some((y0, f));
            }
        }
        if level == opts.refinement_levels {
            break;
        }
        let (centre, _) = best.as_ref().expect("lattice is nonempty");
        step.iter_mut().for_each(|h| *h /= 2.0);
        let half = (count as f64 - 1.0) / 2.0;
        axes = (0..n)
            .map(|i| {
                let mut axis: Vec<f64> = (0..count)
                    .map(|k| (centre[i] + (k as f64 - half) * step[i]).clamp(lo[i], hi[i]))
                    .collect();
                axis.dedup();
                axis
            })
            .collect();
    }

    let (y_bar, _) = best.expect("at least one level was searched");
    let (trajectory, min_tube_margin) = match problem.evaluate(&y_bar) {
        Ok((traj, m)) => (Some(traj), m),
        Err(_) => (None, f64::NEG_INFINITY),
    };
    Ok(ViabilityResult {
        found: min_tube_margin >= 0.0,
        y_bar,
        trajectory,
        min_tube_margin,
        evaluations,
        refinement_levels: opts.refinement_levels,
    })
}
