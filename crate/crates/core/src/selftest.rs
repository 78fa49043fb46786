//! Quick built-in checks of the duality identities and solver closed forms.

use crate::calculus::{check_derivative_duality, Mode, ScaleFunction};
use crate::dynamics::{ControlSet, ControlSystem, FixedDynamics};
use crate::error::Result;
use crate::expr::Expr;
use crate::solver::{self, SolveOptions, Trajectory};
use crate::timescale::{Kappa, TimeScale};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(suite: &'static str, name: impl Into<String>, outcome: Result<(bool, String)>) -> Check {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, e.to_string()));
    Check { suite, name: name.into(), passed, detail }
}

fn scales() -> Vec<TimeScale> {
    [
        vec![(0.0, 1.0), (2.0, 2.0), (3.0, 3.0)],
        vec![(0.0, 0.0), (0.5, 0.5), (1.0, 2.0)],
        vec![(-1.0, -0.5), (0.25, 0.25), (1.0, 1.5), (3.0, 3.0)],
        vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)],
    ]
    .iter()
    .map(|p| TimeScale::new(p).expect("fixed scales are valid"))
    .collect()
}

fn jump_duality(ts: &TimeScale) -> Result<(bool, String)> {
    let dual = ts.dual();
    let mut ok = dual.dual() == *ts;
    ok &= ts.trim_kappa(Kappa::Upper)?.dual() == dual.trim_kappa(Kappa::Lower)?;
    ok &= ts.trim_kappa(Kappa::Lower)?.dual() == dual.trim_kappa(Kappa::Upper)?;
    for s in dual.full_grid(0.25)? {
        let p = dual.classify(s)?;
        let q = ts.classify(-s)?;
        ok &= p.sigma == -q.rho && p.rho == -q.sigma && p.mu == q.nu && p.nu == q.mu;
    }
    Ok((ok, format!("{:?}", ts.pairs())))
}

fn derivative_duality(ts: &TimeScale, text: &str) -> Result<(bool, String)> {
    let f = ScaleFunction::from_expr(ts.clone(), Expr::parse(text)?);
    let rows = check_derivative_duality(&f, &ts.full_grid(0.25)?)?;
    let worst = rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let ok = rows
        .iter()
        .all(|r| if r.scattered { r.residual == 0.0 } else { r.residual.abs() <= 1e-6 });
    Ok((ok, format!("max |residual| {worst:e}")))
}

fn linear(lambda: f64, mode: Mode) -> Result<FixedDynamics> {
    ControlSystem::parse(&[&format!("{lambda}*y1")], ControlSet::ball(1.0, 1)?, mode)?.fix_control(&[0.0])
}

fn close(got: f64, want: f64, rel: f64) -> (bool, String) {
    ((got - want).abs() <= rel * want.abs(), format!("got {got}, want {want}"))
}

/// Runs every check; each failure is reported rather than propagated.
pub fn run() -> Vec<Check> {
    let mut out = Vec::new();
    for (k, ts) in scales().iter().enumerate() {
        out.push(check("duality", format!("jump operators, scale {k}"), jump_duality(ts)));
        for text in ["t^2", "t^3 - 2*t", "sin(t)", "exp(t/2)"] {
            out.push(check("duality", format!("derivative of {text}, scale {k}"), derivative_duality(ts, text)));
        }
    }

    let hz = TimeScale::uniform_points(0.0, 0.1, 11).expect("valid");
    out.push(check(
        "solver",
        "delta on hZ: (1 + h)^10",
        linear(1.0, Mode::Delta)
            .and_then(|d| solver::solve_delta_ivp(&hz, &d, 0.0, &[1.0], &SolveOptions::default()))
            .map(|tr| close(tr.last()[0], 1.1f64.powi(10), 1e-12)),
    ));
    type Route = fn(&TimeScale, &FixedDynamics, f64, &[f64], &SolveOptions) -> Result<Trajectory>;
    let routes: [(&str, Route); 2] = [
        ("direct", solver::solve_nabla_ivp_direct),
        ("via duality", solver::solve_nabla_via_duality),
    ];
    for (name, route) in routes {
        out.push(check(
            "solver",
            format!("nabla on hZ ({name}): (1 - h)^-10"),
            linear(1.0, Mode::Nabla)
                .and_then(|d| route(&hz, &d, 0.0, &[1.0], &SolveOptions::default()))
                .map(|tr| close(tr.last()[0], 0.9f64.powi(-10), 1e-12)),
        ));
    }
    let unit = TimeScale::new(&[(0.0, 1.0)]).expect("valid");
    out.push(check(
        "solver",
        "dense exponential: e",
        linear(1.0, Mode::Delta)
            .and_then(|d| solver::solve_delta_ivp(&unit, &d, 0.0, &[1.0], &SolveOptions::default()))
            .map(|tr| close(tr.last()[0], std::f64::consts::E, 1e-6)),
    ));
    let mixed = TimeScale::new(&[(0.0, 1.0), (1.5, 1.5)]).expect("valid");
    out.push(check(
        "solver",
        "mixed scale: 1.5 e",
        linear(1.0, Mode::Delta)
            .and_then(|d| solver::solve_delta_ivp(&mixed, &d, 0.0, &[1.0], &SolveOptions::default()))
            .map(|tr| close(tr.last()[0], 1.5 * std::f64::consts::E, 1e-6)),
    ));
    out
}
