//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured numbers. Run with
//! `cargo test -p ecoplan --test acceptance -- --nocapture` to see them.

use std::time::Instant;

use ecoplan::model::Signal;
use ecoplan::planner::{min_energy, min_time, pareto, plan_fixed_horizon};
use ecoplan::recovery::{check_feasibility, recover, Tolerances};
use ecoplan::scenarios;
use ecoplan::solver::{assess_feasibility, cold_start, solve, SolveStatus, SolverSettings};
use ecoplan::transcription::transcribe;
use ecoplan::validation::{cruise_oracle, random_feasible_schedules};

fn settings() -> SolverSettings {
    SolverSettings::default()
}

/// Criterion 1: the relaxation is tight. On every bundled scenario at
/// N = 1000 the recovered trajectory satisfies each original constraint to
/// 1e-6 relative, preserves the terminal energy bit for bit, and the whole
/// pipeline stays well under the 30 s budget.
#[test]
fn criterion_1_tightness() {
    for (name, sc) in scenarios::all() {
        let clock = Instant::now();
        let problem = transcribe(&sc, 1000).unwrap();
        let outcome = solve(&problem, &settings()).unwrap();
        assert_eq!(
            outcome.report.status,
            SolveStatus::Optimal,
            "{name}: {}",
            outcome.report.message
        );
        let relaxed = outcome.trajectory.unwrap();
        let recovered = recover(&relaxed, &sc).unwrap();
        let elapsed = clock.elapsed().as_secs_f64();

        assert_eq!(
            relaxed.terminal_energy().to_bits(),
            recovered.terminal_energy().to_bits(),
            "{name}: objective must be preserved bitwise"
        );
        let tol = Tolerances::default();
        let report = check_feasibility(&recovered, &sc, &tol);
        let worst = report.max_relative_violation();
        assert!(
            report.passes(&tol),
            "{name}: worst relative violation {worst:.3e}"
        );
        assert!(elapsed < 30.0, "{name}: took {elapsed:.1} s");
        println!(
            "PASS criterion 1 ({name}): worst violation {worst:.2e} rel, {elapsed:.2} s"
        );
    }
}

/// Criterion 2: the relaxed optimum dominates every feasible trajectory.
/// 100 seeded random feasible simulations per scenario never beat the
/// solver's terminal energy by more than 1e-4 of the initial store.
#[test]
fn criterion_2_relaxation_dominance() {
    for (name, sc) in scenarios::all() {
        let problem = transcribe(&sc, 1000).unwrap();
        let outcome = solve(&problem, &settings()).unwrap();
        let best = outcome.report.objective;

        let samples = random_feasible_schedules(&sc, 100, 0xD0517).unwrap();
        assert!(
            samples.samples.len() >= 100,
            "{name}: sampler produced only {} of 100 ({} tries)",
            samples.samples.len(),
            samples.tries
        );
        let mut worst_excess = f64::NEG_INFINITY;
        for (_, traj) in &samples.samples {
            worst_excess = worst_excess.max(traj.terminal_energy() - best);
        }
        assert!(
            worst_excess <= 1e-4 * sc.e_init,
            "{name}: a random trajectory beat the solver by {worst_excess:.3e} J"
        );
        println!(
            "PASS criterion 2 ({name}): {} samples, worst excess {worst_excess:.2e} J",
            samples.samples.len()
        );
    }
}

/// Criterion 3: analytic pin-down. With the speed pinned to 20 m/s the
/// consumption has the closed form T * f(drag + rolling) = 111.04 kJ.
#[test]
fn criterion_3_pinned_consumption() {
    let sc = scenarios::pinned_cruise();
    let plan = plan_fixed_horizon(&sc, 1000, &settings()).unwrap();
    let consumption = plan.consumption(&sc);
    let expected = 111_041.3;
    let rel = (consumption - expected).abs() / expected;
    assert!(
        rel < 0.005,
        "consumption {consumption:.1} J vs {expected:.1} J ({rel:.2e} rel)"
    );
    println!("PASS criterion 3: consumption {:.2} kJ ({rel:.2e} rel)", consumption / 1e3);
}

/// Criterion 4: the minimum-energy plan on a long flat run cruises at the
/// speed the independent steady-state oracle picks, within 2%.
#[test]
fn criterion_4_cruise_consistency() {
    let sc = scenarios::long_flat();
    let v_star = cruise_oracle(&sc.vehicle, &sc.engine).unwrap();
    let me = min_energy(&sc, 500, &settings(), 5.0).unwrap();
    let traj = &me.plan.recovered;
    let n = traj.grid.n;
    let lo = n / 5;
    let hi = n - n / 5;
    let mut mid: Vec<f64> = traj.v[lo..=hi].to_vec();
    mid.sort_by(|a, b| a.total_cmp(b));
    let median = mid[mid.len() / 2];
    let rel = (median - v_star).abs() / v_star;
    assert!(
        rel < 0.02,
        "median cruise speed {median:.3} m/s vs oracle {v_star:.3} m/s ({rel:.2e})"
    );
    println!(
        "PASS criterion 4: median speed {median:.2} m/s vs v* {v_star:.2} m/s ({rel:.2e} rel), T_opt {:.0} s",
        me.t_opt
    );
}

/// Criterion 5: at the minimum feasible horizon of an energy-limited run the
/// store is drained, and bisection agrees with an exhaustive 0.1 s scan.
#[test]
fn criterion_5_min_time_depletion() {
    let sc = scenarios::energy_bound();
    let n = 400;
    let t_tol = 0.1;
    let mt = min_time(&sc, n, &settings(), t_tol).unwrap();

    let depletion = mt.plan.recovered.terminal_energy() - sc.e_min;
    assert!(
        depletion <= 1e-3 * sc.e_init,
        "terminal energy {depletion:.3e} J above the floor at T* = {}",
        mt.t_star
    );

    // Exhaustive scan oracle at 0.1 s steps around the bisection answer.
    let mut t = mt.t_star - 3.0;
    let scan_star = loop {
        let problem = transcribe(&sc.with_horizon(t), n).unwrap();
        if assess_feasibility(&problem, &settings()).unwrap().feasible {
            break t;
        }
        t += 0.1;
        assert!(t < mt.t_star + 3.0, "scan found no feasible horizon");
    };
    let diff = (scan_star - mt.t_star).abs();
    assert!(
        diff <= 0.2,
        "bisection {} vs scan {scan_star} differ by {diff:.2} s",
        mt.t_star
    );
    println!(
        "PASS criterion 5: T* = {:.2} s, scan {:.2} s (diff {diff:.2} s), residual energy {:.1} J",
        mt.t_star, scan_star, depletion
    );
}

/// Criterion 6: with at least 15% slack over the minimum time, the plan ends
/// with a coasting interval: drive power below 1% of its peak over a final
/// contiguous span of at least 5% of the horizon.
#[test]
fn criterion_6_coasting_interval() {
    let sc = scenarios::paperlike();
    let mt = min_time(&sc, 400, &settings(), 0.5).unwrap();
    assert!(
        sc.horizon >= 1.15 * mt.t_star,
        "horizon {} lacks 15% slack over T* = {}",
        sc.horizon,
        mt.t_star
    );
    let plan = plan_fixed_horizon(&sc, 1000, &settings()).unwrap();
    let traj = &plan.recovered;
    let peak = traj.p_drv.iter().cloned().fold(0.0f64, f64::max);
    let n = traj.grid.n;
    let mut span = 0;
    for j in (0..n).rev() {
        if traj.p_drv[j] < 0.01 * peak {
            span += 1;
        } else {
            break;
        }
    }
    let frac = span as f64 / n as f64;
    assert!(
        frac >= 0.05,
        "coasting tail covers only {frac:.3} of the horizon (peak {peak:.0} W)"
    );
    println!(
        "PASS criterion 6: final coast spans {:.1}% of T (peak drive {:.1} kW, T* {:.1} s)",
        100.0 * frac,
        peak / 1e3,
        mt.t_star
    );
}

/// Criterion 7: the consumption/time sweep falls to an interior optimum and
/// rises after it (idle losses make long horizons wasteful).
#[test]
fn criterion_7_pareto_shape() {
    let sc = scenarios::paperlike();
    let horizons: Vec<f64> = (0..20).map(|i| 215.0 + 15.0 * i as f64).collect();
    let points = pareto(&sc, 400, &settings(), &horizons).unwrap();
    let tol = 1e-3 * sc.e_init;

    let consumptions: Vec<f64> = points
        .iter()
        .map(|p| {
            assert_eq!(p.status, SolveStatus::Optimal, "T = {}", p.horizon);
            p.consumption.unwrap()
        })
        .collect();
    let (argmin, _) = consumptions
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    assert!(
        argmin > 0 && argmin < consumptions.len() - 1,
        "optimum must be interior, got index {argmin}"
    );
    for w in 0..argmin {
        assert!(
            consumptions[w + 1] <= consumptions[w] + tol,
            "not nonincreasing before the optimum at T = {}",
            horizons[w + 1]
        );
    }
    for w in argmin..consumptions.len() - 1 {
        assert!(
            consumptions[w + 1] >= consumptions[w] - tol,
            "not nondecreasing after the optimum at T = {}",
            horizons[w + 1]
        );
    }
    println!(
        "PASS criterion 7: sweep monotone around T_opt = {:.0} s ({:.1} kJ)",
        horizons[argmin],
        consumptions[argmin] / 1e3
    );
}

/// Criterion 8: solver health. Residuals at optimal status, analytic
/// derivatives against finite differences at random interior points, the
/// N = 1000 solve within its iteration caps, and near-linear cost in N.
#[test]
fn criterion_8_solver_health() {
    let sc = scenarios::paperlike();
    let cfg = settings();

    let problem = transcribe(&sc, 1000).unwrap();
    let clock = Instant::now();
    let outcome = solve(&problem, &cfg).unwrap();
    let t1000 = clock.elapsed().as_secs_f64();
    let report = &outcome.report;
    assert_eq!(report.status, SolveStatus::Optimal);
    assert!(report.newton_iterations <= cfg.max_total_iterations);
    assert!(
        report.duality_gap <= cfg.eps_gap * report.objective.abs().max(1.0),
        "gap {} J",
        report.duality_gap
    );
    assert!(
        report.max_equality_residual <= 1e-6 * problem.scales.x,
        "equality residual {}",
        report.max_equality_residual
    );
    assert!(
        report.max_inequality_violation <= 0.0,
        "interior iterate expected, violation {}",
        report.max_inequality_violation
    );
    assert!(report.stationarity <= 1e-6, "stationarity {}", report.stationarity);

    // Finite differences against the analytic derivatives at random
    // perturbations of the interior start.
    let base = cold_start(&problem);
    let mut state = 0xACC3u64;
    let mut unit = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut checked = 0usize;
    for _ in 0..20 {
        let mut z = base.clone();
        for k in 1..=problem.grid.n {
            let lay = problem.layout;
            z[lay.v(k)] *= 0.95 + 0.1 * unit();
            z[lay.kin(k)] *= 0.95 + 0.1 * unit();
            z[lay.e(k)] *= 0.999 + 0.002 * unit();
        }
        for j in 0..problem.grid.n {
            z[problem.layout.p(j)] *= 0.9 + 0.2 * unit();
        }
        // Spot-check a deterministic spread of constraints.
        for step in 0..40 {
            let ci = (step * 131 + 7) % problem.constraints.len();
            let (_, grad, _) = match problem.constraint_derivatives(ci, &z) {
                Ok(d) => d,
                Err(_) => continue,
            };
            for &(i, g) in &grad {
                let h = 2e-6 * problem.scales.of_var(&problem.layout, i).max(1.0);
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h;
                zm[i] -= h;
                let (vp, vm) = match (
                    problem.constraints[ci].value(&zp),
                    problem.constraints[ci].value(&zm),
                ) {
                    (Ok(a), Ok(b)) => (a, b),
                    _ => continue,
                };
                let fd = (vp - vm) / (2.0 * h);
                let tol = 1e-5 * g.abs().max(fd.abs()).max(1e-7);
                assert!(
                    (g - fd).abs() <= tol,
                    "constraint {ci} d/dz[{i}]: {g} vs fd {fd}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 500, "only {checked} derivative checks ran");

    // Near-linear scaling: doubling N less than triples the wall time.
    let problem2 = transcribe(&sc, 2000).unwrap();
    let clock = Instant::now();
    let outcome2 = solve(&problem2, &cfg).unwrap();
    let t2000 = clock.elapsed().as_secs_f64();
    assert_eq!(outcome2.report.status, SolveStatus::Optimal);
    let ratio = t2000 / t1000.max(1e-9);
    assert!(ratio < 3.0, "doubling N scaled wall time by {ratio:.2}");
    println!(
        "PASS criterion 8: gap {:.2e} J, stationarity {:.2e}, {checked} derivative checks, \
         N 1000->2000 time ratio {ratio:.2}",
        report.duality_gap, report.stationarity
    );
}

/// Criterion 9: self-convergence of the discretization between N = 500 and
/// N = 2000 on the bundled scenarios.
#[test]
fn criterion_9_self_convergence() {
    for (name, sc) in scenarios::all() {
        let coarse = plan_fixed_horizon(&sc, 500, &settings()).unwrap().consumption(&sc);
        let fine = plan_fixed_horizon(&sc, 2000, &settings()).unwrap().consumption(&sc);
        let rel = (coarse - fine).abs() / fine.abs().max(1.0);
        assert!(
            rel < 0.002,
            "{name}: consumption moved {rel:.3e} between N = 500 and N = 2000"
        );
        println!("PASS criterion 9 ({name}): N-refinement moves consumption {rel:.2e}");
    }
}

/// Criterion 10: extensions. Constant solar input strictly lowers
/// consumption; a constant climbing loss strictly raises it.
#[test]
fn criterion_10_extensions() {
    let n = 400;
    let base = plan_fixed_horizon(&scenarios::paperlike(), n, &settings())
        .unwrap()
        .consumption(&scenarios::paperlike());

    let mut sunny = scenarios::paperlike();
    sunny.solar = Some(Signal::constant(3000.0));
    let with_solar = plan_fixed_horizon(&sunny, n, &settings())
        .unwrap()
        .consumption(&sunny);
    assert!(
        with_solar < base - 1e3,
        "solar should cut consumption: {with_solar:.0} vs {base:.0} J"
    );

    let mut hilly = scenarios::paperlike();
    hilly.terrain = Some(Signal::constant(-2000.0));
    let with_climb = plan_fixed_horizon(&hilly, n, &settings())
        .unwrap()
        .consumption(&hilly);
    assert!(
        with_climb > base + 1e3,
        "climbing should raise consumption: {with_climb:.0} vs {base:.0} J"
    );
    println!(
        "PASS criterion 10: consumption {:.1} kJ base, {:.1} kJ with solar, {:.1} kJ climbing",
        base / 1e3,
        with_solar / 1e3,
        with_climb / 1e3
    );
}
