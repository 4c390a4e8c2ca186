//! High-level drivers: plan at a fixed horizon, find the minimum feasible
//! horizon, find the consumption-minimizing horizon, and sweep the
//! energy/time trade-off curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate, Scenario};
use crate::recovery::{check_feasibility, recover, FeasibilityReport, Tolerances, Trajectory};
use crate::solver::{
    assess_feasibility, solve_with, SolveReport, SolveStatus, SolverSettings, StartPoint,
};
use crate::transcription::transcribe;

/// A solved, recovered and certified plan.
#[derive(Debug, Clone)]
pub struct Plan {
    pub recovered: Trajectory,
    pub relaxed: Trajectory,
    pub report: SolveReport,
    pub feasibility: FeasibilityReport,
}

impl Plan {
    pub fn consumption(&self, scenario: &Scenario) -> f64 {
        scenario.e_init - self.recovered.terminal_energy()
    }
}

/// One probe of a horizon search, for reporting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchProbe {
    pub horizon: f64,
    pub feasible: bool,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct MinTimeResult {
    pub t_star: f64,
    pub plan: Plan,
    pub probes: Vec<SearchProbe>,
    pub used_scan_fallback: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyProbe {
    pub horizon: f64,
    pub consumption: f64,
}

#[derive(Debug, Clone)]
pub struct MinEnergyResult {
    pub t_opt: f64,
    pub t_star: f64,
    pub t_cap: f64,
    pub plan: Plan,
    pub probes: Vec<EnergyProbe>,
    pub used_scan_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct ParetoPoint {
    pub horizon: f64,
    pub status: SolveStatus,
    /// Energy drawn from the store (J); present when the solve was optimal.
    pub consumption: Option<f64>,
    pub trajectory: Option<Trajectory>,
}

/// Transcribe, solve, recover and certify at the scenario's own horizon.
/// Fails loudly when the recovered trajectory misses its tolerances.
pub fn plan_fixed_horizon(
    scenario: &Scenario,
    n: usize,
    settings: &SolverSettings,
) -> Result<Plan> {
    let scenario = validate(scenario.clone())?;
    plan_unvalidated(&scenario, n, settings, None)
}

fn plan_unvalidated(
    scenario: &Scenario,
    n: usize,
    settings: &SolverSettings,
    warm: Option<&Trajectory>,
) -> Result<Plan> {
    let problem = transcribe(scenario, n)?;
    let start = warm.map(|trajectory| StartPoint {
        trajectory,
        barrier_parameter: None,
    });
    let outcome = solve_with(&problem, settings, start)?;
    let (relaxed, report) = outcome.into_optimal()?;
    let recovered = recover(&relaxed, scenario)?;
    let tol = Tolerances {
        rel: settings.eps_feas.max(1e-9),
        ..Tolerances::default()
    };
    let feasibility = check_feasibility(&recovered, scenario, &tol);
    if !feasibility.passes(&tol) {
        let worst = feasibility
            .entries
            .iter()
            .max_by(|a, b| a.relative().total_cmp(&b.relative()))
            .expect("nonempty report");
        return Err(Error::Numerical(format!(
            "recovered trajectory violates {} by {:.3e} (relative {:.3e})",
            worst.name,
            worst.violation,
            worst.relative()
        )));
    }
    Ok(Plan {
        recovered,
        relaxed,
        report,
        feasibility,
    })
}

fn horizon_feasible(
    scenario: &Scenario,
    horizon: f64,
    n: usize,
    settings: &SolverSettings,
    probes: &mut Vec<SearchProbe>,
) -> Result<bool> {
    let sc = scenario.with_horizon(horizon);
    let problem = transcribe(&sc, n)?;
    let fa = assess_feasibility(&problem, settings)?;
    probes.push(SearchProbe {
        horizon,
        feasible: fa.feasible,
        margin: fa.margin,
    });
    Ok(fa.feasible)
}

/// Kinematic lower bound on the travel time: distance over the speed cap.
pub fn horizon_lower_bound(scenario: &Scenario) -> f64 {
    (scenario.x_end - scenario.x_init) / scenario.v_max.max_value().max(1e-9)
}

/// Smallest horizon for which the problem is feasible, by bisection over the
/// feasibility probe. If the probes ever flip from feasible back to
/// infeasible while bracketing upward, the search falls back to a forward
/// scan at `t_tol` resolution.
pub fn min_time(
    scenario: &Scenario,
    n: usize,
    settings: &SolverSettings,
    t_tol: f64,
) -> Result<MinTimeResult> {
    if !(t_tol > 0.0) {
        return Err(Error::Input(format!(
            "time tolerance must be positive, got {t_tol}"
        )));
    }
    let scenario = validate(scenario.clone())?;
    let t_lo_kin = horizon_lower_bound(&scenario);
    let mut probes = Vec::new();

    // Bracket upward from the kinematic bound.
    let mut t_lo = t_lo_kin;
    let mut t = t_lo_kin.max(t_tol) * 1.05;
    let mut t_hi = None;
    for _ in 0..48 {
        if horizon_feasible(&scenario, t, n, settings, &mut probes)? {
            t_hi = Some(t);
            break;
        }
        t_lo = t;
        t = t_lo_kin + 2.0 * (t - t_lo_kin).max(t_tol);
    }
    let mut t_hi = t_hi.ok_or_else(|| {
        Error::Infeasible(format!(
            "no feasible horizon found up to {t:.1} s (energy budget too small?)"
        ))
    })?;

    while t_hi - t_lo > t_tol {
        let mid = 0.5 * (t_lo + t_hi);
        if horizon_feasible(&scenario, mid, n, settings, &mut probes)? {
            t_hi = mid;
        } else {
            t_lo = mid;
        }
    }

    // Monotonicity guard: sorted by horizon, feasibility must flip once.
    let mut sorted = probes.clone();
    sorted.sort_by(|a, b| a.horizon.total_cmp(&b.horizon));
    let flips = sorted
        .windows(2)
        .filter(|w| w[0].feasible != w[1].feasible)
        .count();
    let mut used_scan_fallback = false;
    if flips > 1 {
        used_scan_fallback = true;
        let mut t = t_lo_kin.max(t_tol);
        loop {
            if horizon_feasible(&scenario, t, n, settings, &mut probes)? {
                t_hi = t;
                break;
            }
            t += t_tol;
            if t > t_lo_kin.max(1.0) * 1e4 {
                return Err(Error::Planning("scan-mode horizon search exhausted".into()));
            }
        }
    }

    let plan = plan_unvalidated(&scenario.with_horizon(t_hi), n, settings, None)?;
    Ok(MinTimeResult {
        t_star: t_hi,
        plan,
        probes,
        used_scan_fallback,
    })
}

/// Horizon that minimizes consumption, by golden-section search over the
/// feasible window, with a coarse unimodality probe and a scan fallback.
pub fn min_energy(
    scenario: &Scenario,
    n: usize,
    settings: &SolverSettings,
    t_tol: f64,
) -> Result<MinEnergyResult> {
    if !(t_tol > 0.0) {
        return Err(Error::Input(format!(
            "time tolerance must be positive, got {t_tol}"
        )));
    }
    let scenario = validate(scenario.clone())?;
    let mt = min_time(&scenario, n, settings, t_tol)?;
    let t_star = mt.t_star;

    // Largest feasible horizon: double until infeasible, then bisect.
    let mut fprobes = Vec::new();
    let mut last_good = t_star;
    let mut t = (t_star * 1.5).max(t_star + t_tol);
    let mut first_bad = None;
    for _ in 0..24 {
        if horizon_feasible(&scenario, t, n, settings, &mut fprobes)? {
            last_good = t;
            t *= 2.0;
        } else {
            first_bad = Some(t);
            break;
        }
    }
    let t_cap = match first_bad {
        Some(mut bad) => {
            let mut good = last_good;
            while bad - good > t_tol.max(1e-2 * good) {
                let mid = 0.5 * (good + bad);
                if horizon_feasible(&scenario, mid, n, settings, &mut fprobes)? {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            good
        }
        None => last_good,
    };

    let mut probes: Vec<EnergyProbe> = Vec::new();
    let mut last_traj: Option<Trajectory> = Some(mt.plan.relaxed.clone());
    let mut consumption_at = |t: f64, warm: &mut Option<Trajectory>| -> Result<f64> {
        if let Some(p) = probes.iter().find(|p| (p.horizon - t).abs() < 1e-9) {
            return Ok(p.consumption);
        }
        let plan = plan_unvalidated(&scenario.with_horizon(t), n, settings, warm.as_ref())?;
        let c = plan.consumption(&scenario);
        *warm = Some(plan.relaxed);
        probes.push(EnergyProbe {
            horizon: t,
            consumption: c,
        });
        Ok(c)
    };

    // Coarse unimodality probe.
    let coarse = 9usize;
    let mut coarse_vals = Vec::with_capacity(coarse);
    for i in 0..coarse {
        let t = t_star + (t_cap - t_star) * i as f64 / (coarse - 1) as f64;
        coarse_vals.push((t, consumption_at(t, &mut last_traj)?));
    }
    let tol_c = 1e-3 * scenario.e_init.abs().max(1.0);
    let argmin = coarse_vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut violations = 0;
    for (i, w) in coarse_vals.windows(2).enumerate() {
        let rising = w[1].1 > w[0].1 + tol_c;
        let falling = w[1].1 < w[0].1 - tol_c;
        if i < argmin && rising {
            violations += 1;
        }
        if i >= argmin && falling {
            violations += 1;
        }
    }

    let mut used_scan_fallback = false;
    let t_opt = if violations >= 3 {
        used_scan_fallback = true;
        coarse_vals[argmin].0
    } else {
        // Golden section around the coarse minimum.
        let lo_i = argmin.saturating_sub(1);
        let hi_i = (argmin + 1).min(coarse - 1);
        let invphi = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (coarse_vals[lo_i].0, coarse_vals[hi_i].0);
        let mut c = b - invphi * (b - a);
        let mut d = a + invphi * (b - a);
        let mut fc = consumption_at(c, &mut last_traj)?;
        let mut fd = consumption_at(d, &mut last_traj)?;
        while b - a > t_tol {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - invphi * (b - a);
                fc = consumption_at(c, &mut last_traj)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + invphi * (b - a);
                fd = consumption_at(d, &mut last_traj)?;
            }
        }
        0.5 * (a + b)
    };

    let plan = plan_unvalidated(&scenario.with_horizon(t_opt), n, settings, last_traj.as_ref())?;
    probes.sort_by(|p, q| p.horizon.total_cmp(&q.horizon));
    Ok(MinEnergyResult {
        t_opt,
        t_star,
        t_cap,
        plan,
        probes,
        used_scan_fallback,
    })
}

/// Solve one plan per horizon, warm-starting each from its predecessor.
/// Infeasible horizons are marked, not fatal.
pub fn pareto(
    scenario: &Scenario,
    n: usize,
    settings: &SolverSettings,
    horizons: &[f64],
) -> Result<Vec<ParetoPoint>> {
    let scenario = validate(scenario.clone())?;
    if horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input("horizons must be sorted ascending".into()));
    }
    let mut points = Vec::with_capacity(horizons.len());
    let mut warm: Option<Trajectory> = None;
    for &t in horizons {
        let sc = scenario.with_horizon(t);
        let problem = transcribe(&sc, n)?;
        let start = warm.as_ref().map(|trajectory| StartPoint {
            trajectory,
            barrier_parameter: None,
        });
        let outcome = solve_with(&problem, settings, start)?;
        match outcome.report.status {
            SolveStatus::Optimal => {
                let relaxed = outcome.trajectory.expect("optimal solve has an iterate");
                let recovered = recover(&relaxed, &sc)?;
                warm = Some(relaxed);
                points.push(ParetoPoint {
                    horizon: t,
                    status: SolveStatus::Optimal,
                    consumption: Some(sc.e_init - recovered.terminal_energy()),
                    trajectory: Some(recovered),
                });
            }
            status => {
                points.push(ParetoPoint {
                    horizon: t,
                    status,
                    consumption: None,
                    trajectory: None,
                });
            }
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn pinned_plan_hits_the_closed_form_consumption() {
        let sc = scenarios::pinned_cruise();
        let plan = plan_fixed_horizon(&sc, 120, &settings()).unwrap();
        let c = plan.consumption(&sc);
        assert!(
            (c - 111_041.3).abs() < 0.005 * 111_041.3,
            "consumption {c} J"
        );
        assert!(plan.feasibility.passes(&Tolerances::default()));
    }

    #[test]
    fn horizons_below_minimum_time_are_infeasible() {
        let sc = scenarios::energy_bound();
        let mt = min_time(&sc, 120, &settings(), 1.0).unwrap();
        let shorter = sc.with_horizon(0.9 * mt.t_star);
        let err = plan_fixed_horizon(&shorter, 120, &settings());
        assert!(err.is_err(), "planning below T* must fail");
    }

    #[test]
    fn min_time_matches_accelerate_then_cruise_kinematics() {
        // Energy-unconstrained flat run: closed form T* = v/a + (D - v^2/(2a))/v.
        let mut sc = scenarios::long_flat();
        sc.x_end = 5000.0;
        sc.e_init = 1e9;
        sc.e_max = 1e9;
        sc.horizon = 400.0;
        let v = 40.0;
        let a = 1.5;
        let closed_form = v / a + (sc.x_end - v * v / (2.0 * a)) / v;
        let t_tol = 1.0;
        let mt = min_time(&sc, 300, &settings(), t_tol).unwrap();
        assert!(
            (mt.t_star - closed_form).abs() <= t_tol + 0.8,
            "bisection {} vs kinematic {closed_form}",
            mt.t_star
        );
        assert!(!mt.used_scan_fallback);
        // All probes below T* are infeasible, all above feasible.
        let mut sorted = mt.probes.clone();
        sorted.sort_by(|x, y| x.horizon.total_cmp(&y.horizon));
        let flips = sorted
            .windows(2)
            .filter(|w| w[0].feasible != w[1].feasible)
            .count();
        assert!(flips <= 1, "feasibility should flip once");
    }

    #[test]
    fn min_energy_is_interior_and_beats_the_endpoints() {
        let sc = scenarios::energy_bound();
        let me = min_energy(&sc, 120, &settings(), 2.0).unwrap();
        assert!(me.t_opt > me.t_star + 1.0, "T_opt should exceed T*");
        assert!(me.t_opt < me.t_cap - 1.0, "T_opt should be interior");
        let c_opt = me.plan.consumption(&sc);
        let at_star = plan_fixed_horizon(&sc.with_horizon(me.t_star), 120, &settings())
            .unwrap()
            .consumption(&sc);
        let at_cap = plan_fixed_horizon(&sc.with_horizon(0.98 * me.t_cap), 120, &settings())
            .unwrap()
            .consumption(&sc);
        assert!(c_opt <= at_star + 1e-3 * sc.e_init);
        assert!(c_opt <= at_cap + 1e-3 * sc.e_init);
    }

    #[test]
    fn pareto_points_match_dedicated_plans() {
        let sc = scenarios::energy_bound();
        let horizons = [270.0, 300.0, 340.0];
        let pts = pareto(&sc, 100, &settings(), &horizons).unwrap();
        for pt in &pts {
            assert_eq!(pt.status, SolveStatus::Optimal);
            let direct = plan_fixed_horizon(&sc.with_horizon(pt.horizon), 100, &settings())
                .unwrap()
                .consumption(&sc);
            let warm = pt.consumption.unwrap();
            assert!(
                (warm - direct).abs() <= 1e-5 * direct.abs().max(1.0),
                "warm {warm} vs cold {direct} at T = {}",
                pt.horizon
            );
        }
    }

    #[test]
    fn pareto_marks_infeasible_horizons() {
        let sc = scenarios::energy_bound();
        let pts = pareto(&sc, 80, &settings(), &[150.0, 300.0]).unwrap();
        assert_eq!(pts[0].status, SolveStatus::Infeasible);
        assert!(pts[0].consumption.is_none());
        assert_eq!(pts[1].status, SolveStatus::Optimal);
    }

    #[test]
    fn rejects_unsorted_horizons_and_bad_tolerances() {
        let sc = scenarios::energy_bound();
        assert!(pareto(&sc, 80, &settings(), &[260.0, 250.0]).is_err());
        assert!(min_time(&sc, 80, &settings(), 0.0).is_err());
        assert!(min_energy(&sc, 80, &settings(), -1.0).is_err());
    }
}
