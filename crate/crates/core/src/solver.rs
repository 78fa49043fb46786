//! Initial value problems on time scales.
//!
//! Scattered steps invert the derivative definition exactly: the delta step
//! is the explicit update `x(σ) = x + μ f(t, x)`, the nabla step solves
//! `y(t) = y(ρ) + ν g(t, y(t))`. Dense pieces are integrated with classical
//! RK4 on the mesh produced by [`TimeScale::grid`].

use nalgebra::{DMatrix, DVector};

use crate::calculus::Mode;
use crate::dynamics::FixedDynamics;
use crate::error::{Error, Result};
use crate::timescale::TimeScale;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub h_dense: f64,
    pub implicit_tol: f64,
    pub implicit_max_iter: usize,
    pub blowup_bound: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            h_dense: 1e-3,
            implicit_tol: 1e-12,
            implicit_max_iter: 50,
            blowup_bound: 1e12,
        }
    }
}

impl SolveOptions {
    pub fn with_h(h_dense: f64) -> Self {
        SolveOptions { h_dense, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.h_dense > 0.0
            && self.h_dense.is_finite()
            && self.implicit_tol > 0.0
            && self.implicit_max_iter > 0
            && self.blowup_bound > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("solve options must be positive: {self:?}")))
        }
    }
}

/// States on a grid of time-scale members.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    scale: TimeScale,
    grid: Vec<f64>,
    states: Vec<Vec<f64>>,
    mode: Mode,
}

impl Trajectory {
    /// `scale` is the time scale the trajectory lives on; every grid point must
    /// belong to it.
    pub fn new(scale: TimeScale, grid: Vec<f64>, states: Vec<Vec<f64>>, mode: Mode) -> Result<Self> {
        if grid.is_empty() || grid.len() != states.len() {
            return Err(Error::Dimension { expected: grid.len(), got: states.len() });
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("trajectory grid must increase strictly".into()));
        }
        let n = states[0].len();
        if let Some(bad) = states.iter().find(|s| s.len() != n) {
            return Err(Error::Dimension { expected: n, got: bad.len() });
        }
        for &t in &grid {
            scale.snap(t)?;
        }
        Ok(Trajectory { scale, grid, states, mode })
    }

    pub fn scale(&self) -> &TimeScale {
        &self.scale
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn last(&self) -> &[f64] {
        &self.states[self.states.len() - 1]
    }

    /// State at a grid point.
    pub fn at(&self, t: f64) -> Option<&[f64]> {
        let i = self.grid.partition_point(|&x| x < t - crate::timescale::MEMBERSHIP_TOL);
        (i < self.grid.len() && (self.grid[i] - t).abs() <= crate::timescale::MEMBERSHIP_TOL)
            .then(|| self.states[i].as_slice())
    }

    /// The same trajectory seen on the dual scale: `x(s) = y(-s)`, mode flipped.
    pub fn dual(&self) -> Trajectory {
        Trajectory {
            scale: self.scale.dual(),
            grid: self.grid.iter().rev().map(|t| -t).collect(),
            states: self.states.iter().rev().cloned().collect(),
            mode: self.mode.flip(),
        }
    }

    /// CSV with header `t,y1,...,yn`, 17 significant digits.
    pub fn to_csv(&self) -> Result<String> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("y{i}")));
        write_csv(
            &header,
            self.grid.iter().zip(&self.states).map(|(t, y)| {
                let mut row = vec![fmt17(*t)];
                row.extend(y.iter().map(|v| fmt17(*v)));
                row
            }),
        )
    }

    pub fn from_csv(text: &str, scale: TimeScale, mode: Mode) -> Result<Trajectory> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(io_err)?.clone();
        if header.get(0) != Some("t") || header.len() < 2 {
            return Err(Error::Parse("trajectory CSV must start with `t,y1,...`".into()));
        }
        let mut grid = Vec::new();
        let mut states = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(io_err)?;
            let nums = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))?;
            grid.push(nums[0]);
            states.push(nums[1..].to_vec());
        }
        Trajectory::new(scale, grid, states, mode)
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Writes a header and rows of numbers as CSV text.
pub(crate) fn write_csv(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(&row).map_err(io_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// Seventeen significant digits, enough to round-trip an `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn check_mode(dynamics: &FixedDynamics, mode: Mode) -> Result<()> {
    if dynamics.mode() != mode {
        return Err(Error::ModeMismatch(format!(
            "expected {mode} dynamics, got {}",
            dynamics.mode()
        )));
    }
    Ok(())
}

fn check_state(t: f64, y: &[f64], opts: &SolveOptions) -> Result<()> {
    if y.iter().any(|v| !v.is_finite() || v.abs() > opts.blowup_bound) {
        return Err(Error::BlowUp(t));
    }
    Ok(())
}

fn horizon(ts: &TimeScale, t0: f64, y0: &[f64], n: usize, opts: &SolveOptions) -> Result<(TimeScale, Vec<f64>)> {
    opts.validate()?;
    if y0.len() != n {
        return Err(Error::Dimension { expected: n, got: y0.len() });
    }
    let scale = ts.restrict(t0, ts.sup())?;
    let grid = scale.full_grid(opts.h_dense)?;
    Ok((scale, grid))
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(yi, xi)| yi + a * xi).collect()
}

/// One classical RK4 step of `y' = f(t, y)` from `t` with (possibly negative) step `h`.
fn rk4_step(f: &impl Fn(f64, &[f64]) -> Result<Vec<f64>>, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let k1 = f(t, y)?;
    let k2 = f(t + h / 2.0, &axpy(h / 2.0, &k1, y))?;
    let k3 = f(t + h / 2.0, &axpy(h / 2.0, &k2, y))?;
    let k4 = f(t + h, &axpy(h, &k3, y))?;
    Ok(y.iter()
        .enumerate()
        .map(|(i, yi)| yi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `∂G/∂y` for an implicit step; `None` means use finite differences.
type JacobianFn<'a> = Option<&'a dyn Fn(&[f64]) -> Option<Result<Vec<Vec<f64>>>>>;

/// Solves `y = prev + step * G(y)`: fixed-point iteration from `prev`, then
/// damped Newton. Convergence means `‖y - prev - step G(y)‖∞ ≤ tol · max(1, ‖y‖∞)`.
pub(crate) fn implicit_step(
    t: f64,
    prev: &[f64],
    step: f64,
    g: &impl Fn(&[f64]) -> Result<Vec<f64>>,
    dg: JacobianFn<'_>,
    opts: &SolveOptions,
) -> Result<Vec<f64>> {
    let residual = |y: &[f64]| -> Result<Vec<f64>> {
        let gy = g(y)?;
        Ok(y.iter().zip(prev).zip(&gy).map(|((yi, pi), gi)| yi - pi - step * gi).collect())
    };
    let converged = |y: &[f64], r: &[f64]| sup_norm(r) <= opts.implicit_tol * sup_norm(y).max(1.0);

    let mut y = prev.to_vec();
    let mut seed = prev.to_vec();
    for _ in 0..opts.implicit_max_iter {
        let r = match residual(&y) {
            Ok(r) if r.iter().all(|x| x.is_finite()) => r,
            _ => break,
        };
        if converged(&y, &r) {
            return Ok(polish(y, r, &residual));
        }
        seed = y.clone();
        y = y.iter().zip(&r).map(|(yi, ri)| yi - ri).collect();
    }

    // Newton on F(y) = y - prev - step G(y).
    let n = prev.len();
    let mut y = if seed.iter().all(|x| x.is_finite()) { seed } else { prev.to_vec() };
    if sup_norm(&y) > opts.blowup_bound {
        y = prev.to_vec();
    }
    for _ in 0..opts.implicit_max_iter {
        let r = residual(&y)?;
        if converged(&y, &r) {
            return Ok(y);
        }
        let mut jac = DMatrix::<f64>::identity(n, n);
        match dg.and_then(|d| d(&y)) {
            Some(exact) => {
                let exact = exact?;
                for i in 0..n {
                    for j in 0..n {
                        jac[(i, j)] -= step * exact[i][j];
                    }
                }
            }
            None => {
                for j in 0..n {
                    let dx = 1e-7 * y[j].abs().max(1.0);
                    let mut plus = y.clone();
                    let mut minus = y.clone();
                    plus[j] += dx;
                    minus[j] -= dx;
                    let gp = g(&plus)?;
                    let gm = g(&minus)?;
                    for i in 0..n {
                        jac[(i, j)] -= step * (gp[i] - gm[i]) / (2.0 * dx);
                    }
                }
            }
        }
        let lu = jac.lu();
        let min_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |m, p| m.min(p.abs()));
        if !(min_pivot >= 1e-12) {
            return Err(Error::NonRegressive(t));
        }
        let rhs = DVector::from_iterator(n, r.iter().map(|x| -x));
        let dy = lu.solve(&rhs).ok_or(Error::NonRegressive(t))?;
        let r_norm = sup_norm(&r);
        let mut alpha = 1.0;
        let mut next = None;
        while alpha >= 1.0 / 1024.0 {
            let trial: Vec<f64> = y.iter().zip(dy.iter()).map(|(a, d)| a + alpha * d).collect();
            if let Ok(rt) = residual(&trial) {
                if sup_norm(&rt) < r_norm {
                    next = Some(trial);
                    break;
                }
            }
            alpha /= 2.0;
        }
        match next {
            Some(trial) => y = trial,
            None => break,
        }
    }
    Err(Error::ImplicitSolveFailed(t))
}

/// A few extra fixed-point updates after convergence, kept while they
/// reduce the residual.
fn polish(
    mut y: Vec<f64>,
    mut r: Vec<f64>,
    residual: &impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Vec<f64> {
    for _ in 0..4 {
        let trial: Vec<f64> = y.iter().zip(&r).map(|(yi, ri)| yi - ri).collect();
        match residual(&trial) {
            Ok(rt) if sup_norm(&rt) < sup_norm(&r) => {
                y = trial;
                r = rt;
            }
            _ => break,
        }
    }
    y
}

/// `x^Δ = f_u(t, x)`, `x(t0) = x0`, over `[t0, sup T]`.
pub fn solve_delta_ivp(
    ts: &TimeScale,
    dynamics: &FixedDynamics,
    t0: f64,
    x0: &[f64],
    opts: &SolveOptions,
) -> Result<Trajectory> {
    check_mode(dynamics, Mode::Delta)?;
    let (scale, grid) = horizon(ts, t0, x0, dynamics.n(), opts)?;
    let f = |t: f64, x: &[f64]| dynamics.eval(t, x);
    let mut states = Vec::with_capacity(grid.len());
    let mut x = x0.to_vec();
    check_state(grid[0], &x, opts)?;
    states.push(x.clone());
    for w in grid.windows(2) {
        let (t, next) = (w[0], w[1]);
        let info = scale.classify(t)?;
        x = if info.is_right_scattered() {
            axpy(info.mu, &f(t, &x)?, &x)
        } else {
            rk4_step(&f, t, &x, next - t)?
        };
        check_state(next, &x, opts)?;
        states.push(x.clone());
    }
    Trajectory::new(scale, grid, states, Mode::Delta)
}

/// `y^∇ = g_v(t, y)`, `y(t0) = y0`, stepping forward in `T` with implicit
/// steps at left-scattered points.
pub fn solve_nabla_ivp_direct(
    ts: &TimeScale,
    dynamics: &FixedDynamics,
    t0: f64,
    y0: &[f64],
    opts: &SolveOptions,
) -> Result<Trajectory> {
    check_mode(dynamics, Mode::Nabla)?;
    let (scale, grid) = horizon(ts, t0, y0, dynamics.n(), opts)?;
    let g = |t: f64, y: &[f64]| dynamics.eval(t, y);
    let mut states = Vec::with_capacity(grid.len());
    let mut y = y0.to_vec();
    check_state(grid[0], &y, opts)?;
    states.push(y.clone());
    for w in grid.windows(2) {
        let (prev_t, t) = (w[0], w[1]);
        let info = scale.classify(t)?;
        y = if info.is_left_scattered() {
            let dg = |z: &[f64]| dynamics.jacobian(t, z);
            implicit_step(t, &y, info.nu, &|z: &[f64]| g(t, z), Some(&dg), opts)?
        } else {
            rk4_step(&g, prev_t, &y, t - prev_t)?
        };
        check_state(t, &y, opts)?;
        states.push(y.clone());
    }
    Trajectory::new(scale, grid, states, Mode::Nabla)
}

/// The nabla problem solved through its dual: `x(s) = y(-s)` satisfies
/// `x^Δ̂(s) = -g(-s, x(s))` on `T*` with terminal value `x(-t0) = y0`. The dual
/// delta problem is stepped backward from `-t0` and the result mapped back.
pub fn solve_nabla_via_duality(
    ts: &TimeScale,
    dynamics: &FixedDynamics,
    t0: f64,
    y0: &[f64],
    opts: &SolveOptions,
) -> Result<Trajectory> {
    check_mode(dynamics, Mode::Nabla)?;
    let (scale, grid) = horizon(ts, t0, y0, dynamics.n(), opts)?;
    let dual_scale = scale.dual();
    let dual_dynamics = dynamics.dual();
    // Mirror of the primal mesh, so mapping back reproduces it bit for bit.
    let dual_grid: Vec<f64> = grid.iter().rev().map(|t| -t).collect();
    let f = |s: f64, x: &[f64]| dual_dynamics.eval(s, x);

    let last = dual_grid.len() - 1;
    let mut dual_states = vec![Vec::new(); dual_grid.len()];
    let mut x = y0.to_vec();
    check_state(-dual_grid[last], &x, opts)?;
    dual_states[last] = x.clone();
    for k in (1..=last).rev() {
        let (s, s_next) = (dual_grid[k - 1], dual_grid[k]);
        let info = dual_scale.classify(s)?;
        x = if info.is_right_scattered() {
            // x(σ̂(s)) = x(s) + μ̂(s) f(s, x(s)), solved for x(s).
            let neg_f = |z: &[f64]| f(s, z).map(|v| v.into_iter().map(|c| -c).collect());
            let neg_df = |z: &[f64]| {
                dual_dynamics
                    .jacobian(s, z)
                    .map(|j| j.map(|rows| rows.into_iter().map(|r| r.into_iter().map(|c| -c).collect()).collect()))
            };
            implicit_step(-s, &x, info.mu, &neg_f, Some(&neg_df), opts)?
        } else {
            rk4_step(&f, s_next, &x, -(s_next - s))?
        };
        check_state(-s, &x, opts)?;
        dual_states[k - 1] = x.clone();
    }
    let dual = Trajectory::new(dual_scale, dual_grid, dual_states, Mode::Delta)?;
    Ok(dual.dual())
}

/// Dispatches on the dynamics' mode (direct route for nabla).
pub fn solve(
    ts: &TimeScale,
    dynamics: &FixedDynamics,
    t0: f64,
    y0: &[f64],
    opts: &SolveOptions,
) -> Result<Trajectory> {
    match dynamics.mode() {
        Mode::Delta => solve_delta_ivp(ts, dynamics, t0, y0, opts),
        Mode::Nabla => solve_nabla_ivp_direct(ts, dynamics, t0, y0, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ControlSet, ControlSystem};

    fn linear(lambda: f64, mode: Mode) -> FixedDynamics {
        ControlSystem::parse(&[&format!("{lambda}*y1")], ControlSet::ball(1.0, 1).unwrap(), mode)
            .unwrap()
            .fix_control(&[0.0])
            .unwrap()
    }

    fn h_integers(h: f64, count: usize) -> TimeScale {
        TimeScale::uniform_points(0.0, h, count).unwrap()
    }

    #[test]
    fn delta_recurrence_closed_form() {
        let ts = h_integers(0.1, 11);
        let tr = solve_delta_ivp(&ts, &linear(1.0, Mode::Delta), 0.0, &[1.0], &SolveOptions::default()).unwrap();
        for (n, y) in tr.states().iter().enumerate() {
            assert!((y[0] - 1.1f64.powi(n as i32)).abs() <= 1e-12);
        }
    }

    #[test]
    fn nabla_recurrence_closed_form() {
        let ts = h_integers(0.1, 11);
        let dynamics = linear(1.0, Mode::Nabla);
        let opts = SolveOptions::default();
        let direct = solve_nabla_ivp_direct(&ts, &dynamics, 0.0, &[1.0], &opts).unwrap();
        let dual = solve_nabla_via_duality(&ts, &dynamics, 0.0, &[1.0], &opts).unwrap();
        for (n, (a, b)) in direct.states().iter().zip(dual.states()).enumerate() {
            let exact = 0.9f64.powi(-(n as i32));
            assert!((a[0] - exact).abs() <= 1e-12, "{n}: {} vs {exact}", a[0]);
            assert!((a[0] - b[0]).abs() <= 1e-12);
        }
        assert_eq!(
            dual.grid().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            direct.grid().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn non_regressive_step_detected() {
        let ts = TimeScale::from_points(&[0.0, 1.0, 2.0]).unwrap();
        let r = solve_nabla_ivp_direct(&ts, &linear(1.0, Mode::Nabla), 0.0, &[1.0], &SolveOptions::default());
        assert_eq!(r.unwrap_err(), Error::NonRegressive(1.0));
    }

    #[test]
    fn stiff_step_falls_back_to_newton() {
        // ν·λ = 5: fixed-point iteration diverges, Newton converges to y/(1 - 5).
        let ts = TimeScale::from_points(&[0.0, 1.0]).unwrap();
        let tr = solve_nabla_ivp_direct(&ts, &linear(5.0, Mode::Nabla), 0.0, &[1.0], &SolveOptions::default()).unwrap();
        assert!((tr.last()[0] + 0.25).abs() < 1e-12);
    }

    #[test]
    fn blow_up_reported() {
        let ts = TimeScale::new(&[(0.0, 10.0)]).unwrap();
        let dynamics = ControlSystem::parse(&["y1^2"], ControlSet::ball(1.0, 1).unwrap(), Mode::Delta)
            .unwrap()
            .fix_control(&[0.0])
            .unwrap();
        let r = solve_delta_ivp(&ts, &dynamics, 0.0, &[1.0], &SolveOptions::with_h(1e-2));
        assert!(matches!(r, Err(Error::BlowUp(t)) if t > 0.9 && t < 1.1));
    }

    #[test]
    fn mode_mismatch_rejected() {
        let ts = h_integers(1.0, 3);
        let r = solve_delta_ivp(&ts, &linear(1.0, Mode::Nabla), 0.0, &[1.0], &SolveOptions::default());
        assert!(matches!(r, Err(Error::ModeMismatch(_))));
        let r = solve_delta_ivp(&ts, &linear(1.0, Mode::Delta), 2.0, &[1.0], &SolveOptions::default());
        assert!(matches!(r, Err(Error::BadWindow(..))));
    }

    #[test]
    fn csv_round_trip() {
        let ts = TimeScale::new(&[(0.0, 1.0), (1.5, 1.5)]).unwrap();
        let tr = solve_delta_ivp(&ts, &linear(-0.3, Mode::Delta), 0.0, &[0.7], &SolveOptions::with_h(0.1)).unwrap();
        let text = tr.to_csv().unwrap();
        assert!(text.starts_with("t,y1\n"));
        let back = Trajectory::from_csv(&text, tr.scale().clone(), Mode::Delta).unwrap();
        assert_eq!(back, tr);
    }
}
