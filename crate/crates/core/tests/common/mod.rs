#![allow(dead_code)]

use tscale::{ControlSet, ControlSystem, FixedDynamics, Mode, TimeScale};

/// Functions of `t` alone, defined on the whole real line.
pub const T_CORPUS: [&str; 24] = [
    "t",
    "t^2",
    "t^3",
    "t^3 - 2*t + 1",
    "3*t^4 - t^2",
    "t^5/5 - t",
    "(t - 1)*(t + 2)",
    "(1 + t)^3",
    "-t^2 + 7",
    "0.5*t^2 - 0.25*t",
    "sin(t)",
    "cos(t)",
    "sin(2*t) + cos(t)",
    "t*sin(t)",
    "cos(t^2)",
    "sin(t)^2",
    "exp(t)",
    "exp(-t)",
    "exp(t/2)*cos(t)",
    "t^2*exp(-t^2)",
    "sin(t)*cos(3*t)",
    "t - sin(t)",
    "1/(1 + t^2)",
    "4",
];

/// Expressions over `t`, `y1..y3` and `v1..v2` exercising the whole grammar.
pub const GENERAL_CORPUS: [&str; 56] = [
    "1",
    "0.5",
    "1e-3",
    "2.5e2",
    "t",
    "y1",
    "v2",
    "-t",
    "--t",
    "-(t + 1)",
    "1/t",
    "t + 1",
    "t - 1 - 2",
    "t - (1 - 2)",
    "t * y1 / 2",
    "t / (y1 * 2)",
    "t / y1 / 2",
    "2^3^2",
    "(2^3)^2",
    "-t^2",
    "(-t)^2",
    "t^-1",
    "t^(-2)",
    "y1^0.5",
    "t^(1/2)",
    "2*t^5*y1 + cos(t*y2) + y2^8 + v1",
    "2*t^6*y2 + cos(t*y1) + y1^7 + v2",
    "cos(t)",
    "sin(t*y1)",
    "exp(-t)",
    "log(t)",
    "abs(y1 - y2)",
    "sqrt(t^2 + 1)",
    "sin(cos(exp(t)))",
    "-sin(t)",
    "-(-(t))",
    "y1 - -y2",
    "y1 * -y2",
    "y1 / -y2",
    "3*(y1 + y2)*(y1 - y2)",
    "(y1 + y2)/(y1 - y2)",
    "1 - t + t^2 - t^3",
    "(1 - t)*(1 + t)",
    "t*(t*(t*(t + 1) + 1) + 1)",
    "exp(t)*sin(t) - exp(-t)*cos(t)",
    "log(1 + t^2)",
    "abs(t)",
    "v1 + v2*y3",
    "y3^3 - 3*y3",
    "2 * (3 * (4 * t))",
    "((t))",
    "  t   +   y1  ",
    "-1/t",
    "1/t^2",
    "(t + y1)^2 - (t - y1)^2",
    "cos(t)^2 + sin(t)^2",
];

pub fn example_system(mode: Mode) -> ControlSystem {
    ControlSystem::parse(
        &["2*t^5*y1 + cos(t*y2) + y2^8 + v1", "2*t^6*y2 + cos(t*y1) + y1^7 + v2"],
        ControlSet::ball(1.0, 2).unwrap(),
        mode,
    )
    .unwrap()
}

pub fn example(mode: Mode) -> FixedDynamics {
    example_system(mode).fix_control(&[0.5, 0.5]).unwrap()
}

pub fn linear(lambda: f64, mode: Mode) -> FixedDynamics {
    ControlSystem::parse(&[&format!("{lambda}*y1 + v1")], ControlSet::ball(1.0, 1).unwrap(), mode)
        .unwrap()
        .fix_control(&[0.0])
        .unwrap()
}

/// `count` points `t0, t0 + h, ...`.
pub fn points(t0: f64, h: f64, count: usize) -> TimeScale {
    TimeScale::uniform_points(t0, h, count).unwrap()
}

/// Deterministic mixed scales with rational endpoints: intervals, isolated
/// points, and combinations of both.
pub fn mixed_scales(count: usize) -> Vec<TimeScale> {
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut next = move |m: u64| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state % m
    };
    (0..count)
        .map(|_| {
            let den = [1.0, 2.0, 4.0, 5.0, 8.0][next(5) as usize];
            let mut at = next(41) as i64 - 20;
            let pieces = 1 + next(5);
            let mut pairs = Vec::new();
            for _ in 0..pieces {
                let len = if next(3) == 0 { 0 } else { 1 + next(6) as i64 };
                pairs.push((at as f64 / den, (at + len) as f64 / den));
                at += len + 1 + next(4) as i64;
            }
            TimeScale::new(&pairs).unwrap()
        })
        .collect()
}

/// Scale endpoints plus a few interior points of every dense segment.
pub fn sample_points(ts: &TimeScale) -> Vec<f64> {
    let mut out = Vec::new();
    for (a, b) in ts.pairs() {
        out.push(a);
        if b > a {
            for k in 1..4 {
                out.push(a + (b - a) * k as f64 / 4.0);
            }
            out.push(b);
        }
    }
    out
}
