//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line with
//! its measured numbers and runtime; the process exits nonzero if any fails.

mod common;

use std::time::{Duration, Instant};

use tscale::calculus::{check_derivative_duality, ScaleFunction};
use tscale::solver::solve;
use tscale::viability::{check_egress, search_viable, Side};
use tscale::{
    recover_control, solve_delta_ivp, solve_nabla_ivp_direct, solve_nabla_via_duality, Env, Error, Expr, Kappa, Mode,
    Scenario, SolveOptions, TimeScale, Trajectory,
};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome { passed, detail: detail.into() }
    }
}

fn scenario(name: &str) -> Scenario {
    Scenario::load(format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn jump_duality() -> Outcome {
    let scales = common::mixed_scales(200);
    let mut points = 0;
    let mut failures = Vec::new();
    for (k, ts) in scales.iter().enumerate() {
        let dual = ts.dual();
        if dual.dual() != *ts {
            failures.push(format!("scale {k}: double dual differs"));
        }
        if ts.trim_kappa(Kappa::Upper).map(|s| s.dual()) != dual.trim_kappa(Kappa::Lower) {
            failures.push(format!("scale {k}: upper trim does not dualize"));
        }
        if ts.trim_kappa(Kappa::Lower).map(|s| s.dual()) != dual.trim_kappa(Kappa::Upper) {
            failures.push(format!("scale {k}: lower trim does not dualize"));
        }
        for s in common::sample_points(&dual) {
            points += 1;
            let (hat, orig) = (dual.classify(s).unwrap(), ts.classify(-s).unwrap());
            if hat.sigma != -orig.rho || hat.rho != -orig.sigma || hat.mu != orig.nu || hat.nu != orig.mu {
                failures.push(format!("scale {k}: jump duality fails at s = {s}"));
            }
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!("{} scales, {points} points, {} violations {:?}", scales.len(), failures.len(), failures.first()),
    )
}

fn derivative_duality() -> Outcome {
    let scales = common::mixed_scales(25);
    let (mut scattered_max, mut dense_max, mut rows) = (0.0f64, 0.0f64, 0);
    for ts in &scales {
        let pts: Vec<f64> = common::sample_points(ts)
            .into_iter()
            .filter(|&t| ts.in_kappa(t, Kappa::Upper) || ts.in_kappa(t, Kappa::Lower))
            .collect();
        for text in common::T_CORPUS {
            let f = ScaleFunction::from_expr(ts.clone(), Expr::parse(text).unwrap());
            for r in check_derivative_duality(&f, &pts).unwrap() {
                rows += 1;
                if r.scattered {
                    scattered_max = scattered_max.max(r.residual.abs());
                } else {
                    dense_max = dense_max.max(r.residual.abs());
                }
            }
        }
    }
    Outcome::new(
        scattered_max == 0.0 && dense_max <= 1e-6,
        format!(
            "{} expressions x {} scales, {rows} identities; max scattered residual {scattered_max:e}, max dense residual {dense_max:e}",
            common::T_CORPUS.len(),
            scales.len()
        ),
    )
}

fn solver_oracles() -> Outcome {
    let opts = SolveOptions::default();
    let mut worst_hz = 0.0f64;
    for (h, count) in [(0.1, 11), (0.25, 9)] {
        let ts = common::points(0.0, h, count);
        for lambda in [1.0, -2.0, 0.5] {
            let delta = solve_delta_ivp(&ts, &common::linear(lambda, Mode::Delta), 0.0, &[1.0], &opts).unwrap();
            for (n, y) in delta.states().iter().enumerate() {
                worst_hz = worst_hz.max((y[0] - (1.0 + h * lambda).powi(n as i32)).abs());
            }
            let g = common::linear(lambda, Mode::Nabla);
            for traj in [
                solve_nabla_ivp_direct(&ts, &g, 0.0, &[1.0], &opts).unwrap(),
                solve_nabla_via_duality(&ts, &g, 0.0, &[1.0], &opts).unwrap(),
            ] {
                for (n, y) in traj.states().iter().enumerate() {
                    worst_hz = worst_hz.max((y[0] - (1.0 - h * lambda).powi(-(n as i32))).abs());
                }
            }
        }
    }
    let e = std::f64::consts::E;
    let unit = TimeScale::new(&[(0.0, 1.0)]).unwrap();
    let dense = solve_delta_ivp(&unit, &common::linear(1.0, Mode::Delta), 0.0, &[1.0], &opts).unwrap();
    let dense_rel = (dense.last()[0] - e).abs() / e;
    let mixed = TimeScale::new(&[(0.0, 1.0), (1.5, 1.5)]).unwrap();
    let comp = solve_delta_ivp(&mixed, &common::linear(1.0, Mode::Delta), 0.0, &[1.0], &opts).unwrap();
    let mixed_rel = (comp.last()[0] - 1.5 * e).abs() / (1.5 * e);

    let f = common::example(Mode::Delta);
    let short = TimeScale::new(&[(1.0, 1.1)]).unwrap();
    let end = |h: f64| solve(&short, &f, 1.0, &[0.0, 0.0], &SolveOptions::with_h(h)).unwrap().last().to_vec();
    let reference = end(0.01 / 8.0);
    let err = |h: f64| end(h).iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let factor = err(0.01) / err(0.005);

    Outcome::new(
        worst_hz <= 1e-12 && dense_rel <= 1e-6 && mixed_rel <= 1e-6 && (8.0..=32.0).contains(&factor),
        format!(
            "hZ closed forms max abs error {worst_hz:e}; x(1) rel error {dense_rel:e}; 1.5e rel error {mixed_rel:e}; RK4 halving factor {factor:.2}"
        ),
    )
}

/// Solver-produced trajectories of the bundled corpus, in both routes for nabla.
fn corpus_trajectories() -> Vec<(String, tscale::ControlSystem, Trajectory, Option<Trajectory>)> {
    let opts = SolveOptions::default();
    let mut out = Vec::new();
    let discrete = scenario("worked_example_discrete.json");
    let dynamics = discrete.dynamics().unwrap();
    let found = search_viable(&discrete.problem(&dynamics), &discrete.egress_sampling(), &discrete.search).unwrap();
    let cases: Vec<(&str, Vec<f64>)> = vec![
        ("worked_example_discrete.json", found.y_bar.clone()),
        ("worked_example_discrete.json", vec![0.0, 0.0]),
        ("worked_example_discrete.json", vec![0.3, -0.5]),
        ("worked_example_coarse.json", vec![0.1, -0.1]),
        ("worked_example_coarse.json", vec![-0.4, 0.2]),
        ("worked_example_mixed.json", vec![0.0, 0.0]),
        ("linear_outward.json", vec![0.02]),
    ];
    for (name, y0) in cases {
        let s = scenario(name);
        let horizon = s.timescale.restrict(s.window.0, s.window.1).unwrap();
        let g = s.dynamics().unwrap();
        let direct = solve_nabla_ivp_direct(&horizon, &g, s.window.0, &y0, &s.solve).unwrap();
        let dual = solve_nabla_via_duality(&horizon, &g, s.window.0, &y0, &s.solve).unwrap();
        out.push((format!("{name} from {y0:?}"), s.system.clone(), direct, Some(dual)));
    }
    let dense = TimeScale::new(&[(1.0, 1.2)]).unwrap();
    let g = common::example(Mode::Nabla);
    out.push((
        "example on [1, 1.2] from [0, 0]".into(),
        common::example_system(Mode::Nabla),
        solve_nabla_ivp_direct(&dense, &g, 1.0, &[0.0, 0.0], &opts).unwrap(),
        Some(solve_nabla_via_duality(&dense, &g, 1.0, &[0.0, 0.0], &opts).unwrap()),
    ));
    for (name, ts) in [
        ("delta example on {1, 1.02, ..., 1.2}", common::points(1.0, 0.02, 11)),
        ("delta example on [1, 1.2]", dense.clone()),
    ] {
        let f = common::example(Mode::Delta);
        out.push((
            name.into(),
            common::example_system(Mode::Delta),
            solve_delta_ivp(&ts, &f, 1.0, &[0.1, -0.1], &opts).unwrap(),
            None,
        ));
    }
    out
}

fn route_agreement() -> Outcome {
    let mut worst = 0.0f64;
    let mut grids_equal = true;
    let mut compared = 0;
    for (_, _, direct, dual) in corpus_trajectories() {
        let Some(dual) = dual else { continue };
        compared += 1;
        grids_equal &= direct.grid() == dual.grid();
        for (a, b) in direct.states().iter().zip(dual.states()) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    Outcome::new(
        grids_equal && worst <= 1e-9,
        format!("{compared} nabla trajectories; grids identical: {grids_equal}; max |direct - dual| {worst:e}"),
    )
}

fn example_egress() -> Outcome {
    let s = scenario("worked_example.json");
    let dynamics = s.dynamics().unwrap();
    let report = check_egress(&s.timescale, &dynamics, &s.tube, s.window, &s.egress_sampling()).unwrap();
    let inv_t = ScaleFunction::from_expr(s.timescale.clone(), Expr::parse("1/t").unwrap());
    let chain = |face: usize, side: Side| -> Expr {
        let text = match (face, side) {
            (1, Side::Upper) => "2*t^4 - 1 - t^(-8) + 1/2",
            (2, Side::Upper) => "2*t^5 - 1 - t^(-7) + 1/2",
            (1, Side::Lower) => "2*t^4 - 1 - t^(-8) - 1/2",
            _ => "2*t^5 - 1 - t^(-7) - 1/2",
        };
        Expr::parse(text).unwrap()
    };
    let mut below_chain = 0;
    let mut tightest = f64::INFINITY;
    for sample in &report.samples {
        let bound = chain(sample.face.index, sample.face.side).eval(&Env::time(sample.t)).unwrap()
            - inv_t.nabla_derivative(sample.t).unwrap().value;
        tightest = tightest.min(sample.margin - bound);
        if sample.margin < bound {
            below_chain += 1;
        }
    }
    let times = report.samples.iter().map(|x| x.t.to_bits()).collect::<std::collections::BTreeSet<_>>().len();
    let min_margin = report.worst.as_ref().map_or(f64::NAN, |w| w.margin);
    Outcome::new(
        report.all_strict_egress && below_chain == 0,
        format!(
            "{} boundary samples at {times} times; min margin {min_margin:.6}; samples below the analytic bound: {below_chain}; min (margin - bound) {tightest:e}",
            report.samples.len()
        ),
    )
}

fn example_viability() -> Outcome {
    let s = scenario("worked_example_discrete.json");
    let dynamics = s.dynamics().unwrap();
    let result = search_viable(&s.problem(&dynamics), &s.egress_sampling(), &s.search).unwrap();
    let traj = result.trajectory.as_ref().unwrap();
    let inside = traj
        .grid()
        .iter()
        .zip(traj.states())
        .all(|(t, y)| y.iter().all(|v| v.abs() <= 1.0 / t));
    Outcome::new(
        result.found && result.min_tube_margin >= 0.0 && result.evaluations <= 1_000_000 && inside,
        format!(
            "found = {}, y_bar = {:?}, min tube margin {:.6}, {} evaluations, closed tube at all {} grid points: {inside}",
            result.found,
            result.y_bar,
            result.min_tube_margin,
            result.evaluations,
            traj.grid().len()
        ),
    )
}

fn filippov_recovery() -> Outcome {
    let mut recovered = 0;
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut negatives = 0;
    let corpus = corpus_trajectories();
    for (name, sys, direct, dual) in &corpus {
        for traj in std::iter::once(direct).chain(dual.iter()) {
            match recover_control(sys, traj, 1e-8) {
                Ok(samples) => {
                    recovered += 1;
                    worst = samples.iter().map(|c| c.residual).fold(worst, f64::max);
                }
                Err(e) => failures.push(format!("{name}: {e}")),
            }
            let t0 = traj.grid()[0];
            let perturbed: Vec<Vec<f64>> = traj
                .grid()
                .iter()
                .zip(traj.states())
                .map(|(t, y)| {
                    let mut y = y.clone();
                    y[0] += 10.0 * (t - t0);
                    y
                })
                .collect();
            let bad = Trajectory::new(traj.scale().clone(), traj.grid().to_vec(), perturbed, traj.mode()).unwrap();
            match recover_control(sys, &bad, 1e-8) {
                Err(Error::NoFeasibleControl { .. }) => negatives += 1,
                other => failures.push(format!("{name}: perturbed trajectory gave {:?}", other.map(|v| v.len()))),
            }
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{recovered} trajectories recovered, max residual {worst:e}; {negatives} perturbed trajectories rejected; failures {failures:?}"
        ),
    )
}

fn negative_egress() -> Outcome {
    let ts = TimeScale::new(&[(0.0, 1.0)]).unwrap();
    let dynamics = tscale::ControlSystem::parse(&["-y1 + v1"], tscale::ControlSet::ball(1.0, 1).unwrap(), Mode::Nabla)
        .unwrap()
        .fix_control(&[0.0])
        .unwrap();
    let tube = tscale::Tube::parse(&["-1"], &["1"], Mode::Nabla).unwrap();
    let report =
        check_egress(&ts, &dynamics, &tube, (0.0, 1.0), &tscale::EgressSampling::default()).unwrap();
    let Some(worst) = report.worst.clone() else {
        return Outcome::new(false, "no samples");
    };
    let bound = tube.bound(worst.face).eval(&Env::time(worst.t)).unwrap();
    let on_face = worst.point[worst.face.index - 1] == bound;
    Outcome::new(
        !report.all_strict_egress && on_face && worst.margin < 0.0,
        format!(
            "all_strict_egress = {}; worst margin {} on face {} {} at t = {}, y = {:?}",
            report.all_strict_egress, worst.margin, worst.face.index, worst.face.side, worst.t, worst.point
        ),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("jump operator duality on randomized scales", Duration::from_secs(5), jump_duality),
        ("derivative duality on expression corpus", Duration::from_secs(10), derivative_duality),
        ("solver oracles", Duration::from_secs(10), solver_oracles),
        ("direct and duality routes agree", Duration::from_secs(10), route_agreement),
        ("worked example egress margins", Duration::from_secs(5), example_egress),
        ("worked example viability on the discrete scale", Duration::from_secs(60), example_viability),
        ("control recovery", Duration::from_secs(5), filippov_recovery),
        ("inward field is not egress", Duration::from_secs(1), negative_egress),
    ];
    let mut failed = 0;
    for (k, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let passed = outcome.passed && elapsed < *limit;
        if !passed {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name} ({:.3} s of {} s): {}",
            k + 1,
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs(),
            outcome.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
