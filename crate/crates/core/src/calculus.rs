//! Delta and nabla derivatives of functions on a time scale, and the dual
//! function `f*(s) = f(-s)`.
//!
//! At scattered points the derivative is the difference quotient and nothing
//! else. At dense points expression-form functions are differentiated
//! symbolically; sample-form functions use a finite-difference stencil built
//! only from samples inside the same segment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::timescale::{Kappa, TimeScale, MEMBERSHIP_TOL};

/// Delta (forward) or nabla (backward) calculus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Delta,
    Nabla,
}

impl Mode {
    pub fn flip(self) -> Mode {
        match self {
            Mode::Delta => Mode::Nabla,
            Mode::Nabla => Mode::Delta,
        }
    }

    /// The kappa trim on which derivatives of this mode are defined.
    pub fn kappa(self) -> Kappa {
        match self {
            Mode::Delta => Kappa::Upper,
            Mode::Nabla => Kappa::Lower,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Delta => "delta",
            Mode::Nabla => "nabla",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ScatteredQuotient,
    DenseSymbolic,
    DenseNumeric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeValue {
    pub value: f64,
    pub mode: Mode,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq)]
enum Form {
    Expr {
        expr: Expr,
        /// `None` when the expression is not symbolically differentiable.
        dt: Option<Expr>,
    },
    Samples {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

/// A real function on a time scale, given by a formula in `t` or by samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleFunction {
    scale: TimeScale,
    form: Form,
}

impl ScaleFunction {
    pub fn from_expr(scale: TimeScale, expr: Expr) -> Self {
        let dt = expr.diff(Var::T).ok();
        ScaleFunction { scale, form: Form::Expr { expr, dt } }
    }

    /// Samples at strictly increasing members of `scale`.
    pub fn from_samples(scale: TimeScale, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Dimension { expected: times.len(), got: values.len() });
        }
        for &t in &times {
            scale.snap(t)?;
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("sample times must increase".into()));
        }
        Ok(ScaleFunction { scale, form: Form::Samples { times, values } })
    }

    pub fn scale(&self) -> &TimeScale {
        &self.scale
    }

    pub fn expr(&self) -> Option<&Expr> {
        match &self.form {
            Form::Expr { expr, .. } => Some(expr),
            Form::Samples { .. } => None,
        }
    }

    /// `(t, value)` pairs of a sample-form function.
    pub fn samples(&self) -> Option<Vec<(f64, f64)>> {
        match &self.form {
            Form::Samples { times, values } => {
                Some(times.iter().copied().zip(values.iter().copied()).collect())
            }
            Form::Expr { .. } => None,
        }
    }

    fn sample_index(times: &[f64], t: f64) -> Option<usize> {
        let i = times.partition_point(|&x| x < t - MEMBERSHIP_TOL);
        (i < times.len() && (times[i] - t).abs() <= MEMBERSHIP_TOL).then_some(i)
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        match &self.form {
            Form::Expr { expr, .. } => expr.eval(&Env::time(t)),
            Form::Samples { times, values } => Self::sample_index(times, t)
                .map(|i| values[i])
                .ok_or(Error::MissingSample(t)),
        }
    }

    pub fn delta_derivative(&self, t: f64) -> Result<DerivativeValue> {
        self.derivative(t, Mode::Delta)
    }

    pub fn nabla_derivative(&self, t: f64) -> Result<DerivativeValue> {
        self.derivative(t, Mode::Nabla)
    }

    pub fn derivative(&self, t: f64, mode: Mode) -> Result<DerivativeValue> {
        let info = self.scale.classify(t)?;
        if !self.scale.in_kappa(info.t, mode.kappa()) {
            return Err(Error::OutsideKappa(t));
        }
        let t = info.t;
        let scattered = match mode {
            Mode::Delta => info.is_right_scattered(),
            Mode::Nabla => info.is_left_scattered(),
        };
        if scattered {
            let value = match mode {
                Mode::Delta => (self.value(info.sigma)? - self.value(t)?) / info.mu,
                Mode::Nabla => (self.value(t)? - self.value(info.rho)?) / info.nu,
            };
            return Ok(DerivativeValue { value, mode, method: Method::ScatteredQuotient });
        }
        match &self.form {
            Form::Expr { expr, dt } => {
                let dt = dt
                    .as_ref()
                    .ok_or_else(|| Error::NotDifferentiable(expr.to_string()))?;
                Ok(DerivativeValue {
                    value: dt.eval(&Env::time(t))?,
                    mode,
                    method: Method::DenseSymbolic,
                })
            }
            Form::Samples { times, values } => Ok(DerivativeValue {
                value: self.dense_numeric(times, values, t)?,
                mode,
                method: Method::DenseNumeric,
            }),
        }
    }

    fn dense_numeric(&self, times: &[f64], values: &[f64], t: f64) -> Result<f64> {
        let i = Self::sample_index(times, t).ok_or(Error::MissingSample(t))?;
        let (k, _) = self.scale.locate(t).ok_or(Error::NotMember(t))?;
        let seg = self.scale.segments()[k];
        let lo = times.partition_point(|&x| x < seg.lo - MEMBERSHIP_TOL);
        let hi = times.partition_point(|&x| x <= seg.hi + MEMBERSHIP_TOL);
        dense_stencil_derivative(&times[lo..hi], &values[lo..hi], i - lo)
            .ok_or(Error::MissingSample(t))
    }
}

/// Number of nodes used by the dense finite-difference stencil.
const STENCIL: usize = 7;

/// First derivative at `times[i]` from up to seven neighbouring samples.
pub(crate) fn dense_stencil_derivative(times: &[f64], values: &[f64], i: usize) -> Option<f64> {
    let len = times.len();
    if len < 2 {
        return None;
    }
    let width = STENCIL.min(len);
    let start = i.saturating_sub(width / 2).min(len - width);
    let nodes = &times[start..start + width];
    let weights = first_derivative_weights(times[i], nodes);
    Some(
        weights
            .iter()
            .zip(&values[start..start + width])
            .map(|(w, f)| w * f)
            .sum(),
    )
}

/// Fornberg's recursion for finite-difference weights, first derivative only.
fn first_derivative_weights(x0: f64, nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    // c[j][k]: weight of node j for the k-th derivative, k = 0, 1.
    let mut c = vec![[0.0f64; 2]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                c[i][1] = c1 * (c[i - 1][0] - c5 * c[i - 1][1]) / c2;
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            c[j][1] = (c4 * c[j][1] - c[j][0]) / c3;
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|w| w[1]).collect()
}

/// `f*(s) = f(-s)` on the dual scale.
pub fn dualize_function(f: &ScaleFunction) -> ScaleFunction {
    let scale = f.scale.dual();
    match &f.form {
        Form::Expr { expr, .. } => ScaleFunction::from_expr(scale, expr.reflect_time()),
        Form::Samples { times, values } => ScaleFunction {
            scale,
            form: Form::Samples {
                times: times.iter().rev().map(|t| -t).collect(),
                values: values.iter().rev().copied().collect(),
            },
        },
    }
}

/// One line of a derivative-duality report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityRow {
    pub t: f64,
    /// `Delta` checks `f^Δ(t) + (f*)^∇̂(-t)`, `Nabla` checks `f^∇(t) + (f*)^Δ̂(-t)`.
    pub mode: Mode,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub scattered: bool,
}

/// CSV with header `t,mode,lhs,rhs,residual`.
pub fn duality_rows_to_csv(rows: &[DualityRow]) -> Result<String> {
    use crate::solver::fmt17;
    let header = ["t", "mode", "lhs", "rhs", "residual"].map(String::from);
    crate::solver::write_csv(
        &header,
        rows.iter()
            .map(|r| vec![fmt17(r.t), r.mode.to_string(), fmt17(r.lhs), fmt17(r.rhs), fmt17(r.residual)]),
    )
}

/// Evaluates the derivative-duality identities at each point. A point is checked
/// in every direction whose kappa trim contains it.
pub fn check_derivative_duality(f: &ScaleFunction, points: &[f64]) -> Result<Vec<DualityRow>> {
    let dual = dualize_function(f);
    let mut rows = Vec::new();
    for &t in points {
        let mut any = false;
        for mode in [Mode::Delta, Mode::Nabla] {
            if !f.scale.in_kappa(t, mode.kappa()) {
                continue;
            }
            any = true;
            let lhs = f.derivative(t, mode)?;
            let rhs = dual.derivative(-t, mode.flip())?;
            rows.push(DualityRow {
                t,
                mode,
                lhs: lhs.value,
                rhs: rhs.value,
                residual: lhs.value + rhs.value,
                scattered: lhs.method == Method::ScatteredQuotient,
            });
        }
        if !any {
            return Err(Error::OutsideKappa(t));
        }
    }
    Ok(rows)
}
