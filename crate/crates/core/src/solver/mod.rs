//! Log-barrier interior-point solver for the discretized relaxed problem.
//!
//! The four initial conditions are eliminated as fixed values; the position
//! chain equalities stay in the Newton KKT system with one multiplier per
//! interval. Interleaving each node's states with the preceding interval
//! power and its chain multiplier keeps the KKT matrix banded (the blocks
//! couple adjacent nodes only), so each Newton step costs time linear in the
//! grid size.
//!
//! Feasibility questions are answered by a phase-I problem that minimizes a
//! single slack added to every (family-scaled) inequality; infeasibility is
//! only ever declared from its certified optimum, never from stalled line
//! searches.

mod band;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recovery::{Trajectory, TrajectoryKind};
use crate::transcription::{ConstraintTag, DiscretizedProblem};
use band::BandMatrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Relative duality-gap tolerance.
    pub eps_gap: f64,
    /// Relative constraint tolerance.
    pub eps_feas: f64,
    /// Barrier multiplier between outer iterations.
    pub mu: f64,
    /// Newton cap per centering step.
    pub max_newton: usize,
    /// Armijo slope fraction for backtracking.
    pub armijo_slope: f64,
    /// Backtracking shrink factor.
    pub backtrack_shrink: f64,
    /// Total Newton budget across phase-I and the main barrier.
    pub max_total_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            eps_gap: 1e-6,
            eps_feas: 1e-6,
            mu: 10.0,
            max_newton: 50,
            armijo_slope: 0.01,
            backtrack_shrink: 0.5,
            max_total_iterations: 2000,
        }
    }
}

impl SolverSettings {
    fn validate(&self) -> Result<()> {
        if !(self.eps_gap > 0.0 && self.eps_feas > 0.0) {
            return Err(Error::Input("solver tolerances must be positive".into()));
        }
        if !(self.mu > 1.0) {
            return Err(Error::Input("barrier multiplier must exceed 1".into()));
        }
        if !(self.backtrack_shrink > 0.0 && self.backtrack_shrink < 1.0) {
            return Err(Error::Input("backtracking shrink must be in (0,1)".into()));
        }
        if !(self.armijo_slope > 0.0 && self.armijo_slope < 0.5) {
            return Err(Error::Input("Armijo slope must be in (0, 0.5)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Terminal internal energy (J).
    pub objective: f64,
    /// Duality gap estimate (J).
    pub duality_gap: f64,
    /// Worst equality residual (raw units).
    pub max_equality_residual: f64,
    /// Worst inequality violation, zero when strictly interior (raw units).
    pub max_inequality_violation: f64,
    /// Scaled KKT stationarity residual at the final center.
    pub stationarity: f64,
    pub newton_iterations: usize,
    pub phase1_iterations: usize,
    pub outer_iterations: usize,
    pub final_barrier_parameter: f64,
    /// Scaled duality gap after each outer iteration.
    pub gap_history: Vec<f64>,
    /// Scaled objective upper bound after each outer iteration.
    pub bound_history: Vec<f64>,
    pub wall_time_s: f64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    /// Final iterate as a relaxed trajectory; absent when infeasible.
    pub trajectory: Option<Trajectory>,
    pub report: SolveReport,
}

impl SolveOutcome {
    /// Unwrap an optimal solve; any other status becomes an error.
    pub fn into_optimal(self) -> Result<(Trajectory, SolveReport)> {
        match self.report.status {
            SolveStatus::Optimal => {
                let traj = self.trajectory.ok_or_else(|| {
                    Error::Numerical("optimal status without a trajectory".into())
                })?;
                Ok((traj, self.report))
            }
            SolveStatus::Infeasible => Err(Error::Infeasible(self.report.message.clone())),
            s => Err(Error::Numerical(format!(
                "solve ended with status {s:?}: {}",
                self.report.message
            ))),
        }
    }
}

/// Result of the phase-I feasibility probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityAssessment {
    pub feasible: bool,
    /// Margin in family-scaled units: positive means every inequality can
    /// hold with that much slack; negative measures the least violation.
    pub margin: f64,
    /// Scaled duality gap of the phase-I optimum (margin accuracy).
    pub gap: f64,
    pub newton_iterations: usize,
}

/// Previous solution used to seed a solve.
#[derive(Debug, Clone, Copy)]
pub struct StartPoint<'a> {
    pub trajectory: &'a Trajectory,
    /// Resume the barrier at this parameter (use the previous report's
    /// `final_barrier_parameter` when re-solving the same problem).
    pub barrier_parameter: Option<f64>,
}

/// Solve to the settings' tolerances from a cold start.
pub fn solve(problem: &DiscretizedProblem, settings: &SolverSettings) -> Result<SolveOutcome> {
    solve_with(problem, settings, None)
}

/// Solve, optionally seeded with a previous trajectory.
pub fn solve_with(
    problem: &DiscretizedProblem,
    settings: &SolverSettings,
    start: Option<StartPoint<'_>>,
) -> Result<SolveOutcome> {
    settings.validate()?;
    let clock = Instant::now();
    let mut ws = Workspace::new(problem, settings.clone());

    if let Some(msg) = ws.fixed_support_violation() {
        return Ok(ws.infeasible_outcome(msg, 0, clock));
    }

    let mut t0 = 1.0;
    let mut z0: Option<Vec<f64>> = None;
    if let Some(sp) = &start {
        let cand = warm_start(problem, sp.trajectory);
        if is_strictly_interior(problem, &cand) {
            if let Some(tb) = sp.barrier_parameter {
                t0 = tb.max(1.0);
            }
            z0 = Some(cand);
        }
    }
    let mut phase1_iters = 0;
    let z0 = match z0 {
        Some(z) => z,
        None => {
            let cand = cold_start(problem);
            if is_strictly_interior(problem, &cand) {
                cand
            } else {
                let p1 = ws.phase_one(cand, false)?;
                phase1_iters = p1.newtons;
                if p1.slack < 0.0 {
                    p1.z
                } else if p1.certified_infeasible() {
                    return Ok(ws.infeasible_outcome(
                        format!(
                            "phase-I slack stays positive (margin {:.3e}, gap {:.3e})",
                            -p1.slack, p1.gap
                        ),
                        phase1_iters,
                        clock,
                    ));
                } else {
                    return Ok(ws.failure_outcome(
                        format!(
                            "phase-I undecided at slack {:.3e} with gap {:.3e}",
                            p1.slack, p1.gap
                        ),
                        phase1_iters,
                        clock,
                    ));
                }
            }
        }
    };

    ws.run_barrier(z0, t0, phase1_iters, clock)
}

/// Certify feasibility or infeasibility by minimizing a common slack over
/// all inequalities subject to the equality constraints.
pub fn assess_feasibility(
    problem: &DiscretizedProblem,
    settings: &SolverSettings,
) -> Result<FeasibilityAssessment> {
    settings.validate()?;
    let mut ws = Workspace::new(problem, settings.clone());
    if let Some(_msg) = ws.fixed_support_violation() {
        return Ok(FeasibilityAssessment {
            feasible: false,
            margin: f64::NEG_INFINITY,
            gap: 0.0,
            newton_iterations: 0,
        });
    }
    let z0 = cold_start(problem);
    let p1 = ws.phase_one(z0, true)?;
    // A negative slack exhibits an interior point even when the slack
    // itself is not resolved to tolerance.
    if !p1.converged && !(p1.slack < 0.0) {
        return Err(Error::Numerical(format!(
            "phase-I did not converge (slack {:.3e}, gap {:.3e})",
            p1.slack, p1.gap
        )));
    }
    Ok(FeasibilityAssessment {
        feasible: p1.slack < 0.0,
        margin: -p1.slack,
        gap: p1.gap,
        newton_iterations: p1.newtons,
    })
}

/// Default strictly-interior candidate. Speeds start mid-corridor,
/// slew-limited by the acceleration bound, then blend toward the fastest
/// admissible profile until the distance target clears. Kinetic energy gets
/// a small headroom above `(1/2) m v^2` (capped near launch so the
/// acceleration cone stays slack), drive power covers the kinetic balance
/// with margin, and the internal energy decays slightly faster than the
/// engine rate.
pub fn cold_start(problem: &DiscretizedProblem) -> Vec<f64> {
    let n = problem.grid.n;
    let h = problem.grid.h;
    let lay = problem.layout;
    let sc = &problem.scenario;
    let m = sc.vehicle.mass;
    let loss = crate::model::LossCoefficients::of(&sc.vehicle);

    let mut z = vec![0.0; problem.num_vars()];
    z[lay.x(0)] = problem.initial_state[0];
    z[lay.v(0)] = problem.initial_state[1];
    z[lay.kin(0)] = problem.initial_state[2];
    z[lay.e(0)] = problem.initial_state[3];

    let slew = |v: &mut [f64], frac: f64| {
        for k in 1..=n {
            let cap = v[k - 1] + frac * problem.a_max_right[k - 1].max(0.0) * h;
            if v[k] > cap {
                v[k] = cap;
            }
        }
        for k in (1..n).rev() {
            let cap = v[k + 1] + frac * problem.a_max_right[k].max(0.0) * h;
            if v[k] > cap {
                v[k] = cap;
            }
        }
    };
    let clamp_corridor = |v: &mut [f64]| {
        for k in 1..=n {
            let lo = problem.v_min_nodes[k];
            let hi = problem.v_max_nodes[k];
            if hi > lo {
                let d = 1e-3 * (hi - lo);
                v[k] = v[k].clamp(lo + d, hi - d);
            } else {
                v[k] = lo;
            }
        }
    };
    let distance = |v: &[f64]| -> f64 { (0..n).map(|k| 0.5 * h * (v[k] + v[k + 1])).sum() };

    let mut v_mid = vec![sc.v_init; n + 1];
    for k in 1..=n {
        v_mid[k] = problem.v_min_nodes[k] + 0.5 * (problem.v_max_nodes[k] - problem.v_min_nodes[k]);
    }
    slew(&mut v_mid, 0.5);
    clamp_corridor(&mut v_mid);

    let mut v_fast = vec![sc.v_init; n + 1];
    for k in 1..=n {
        v_fast[k] = problem.v_max_nodes[k];
    }
    slew(&mut v_fast, 0.9);
    clamp_corridor(&mut v_fast);

    // Cover the distance target with the slowest sufficient blend.
    let need = (sc.x_end - sc.x_init) + 2e-3 * problem.scales.x;
    let mut v = v_mid.clone();
    if distance(&v) < need && distance(&v_fast) > distance(&v_mid) {
        let blend = |theta: f64| -> Vec<f64> {
            v_mid
                .iter()
                .zip(&v_fast)
                .map(|(&a, &b)| a + theta * (b - a))
                .collect()
        };
        let (mut lo_t, mut hi_t) = (0.0, 1.0);
        if distance(&v_fast) >= need {
            for _ in 0..30 {
                let mid = 0.5 * (lo_t + hi_t);
                if distance(&blend(mid)) >= need {
                    hi_t = mid;
                } else {
                    lo_t = mid;
                }
            }
        }
        v = blend(hi_t);
        clamp_corridor(&mut v);
    }
    for k in 1..=n {
        z[lay.v(k)] = v[k];
    }

    // Kinetic energy: headroom tapered near launch, then slew-limited so the
    // acceleration cone keeps slack.
    for k in 1..=n {
        let hi = problem.v_max_nodes[k];
        let k_lo = 0.5 * m * v[k] * v[k];
        let k_hi = 0.5 * m * hi * hi;
        // Lean headroom: surplus kinetic energy costs real drive power.
        let headroom = (0.02 * (k_hi - k_lo)).min(0.1 * k_lo + 1e3);
        z[lay.kin(k)] = (k_lo + headroom).max(2.0 * problem.kinetic_floor);
    }
    for k in 0..n {
        let k0 = z[lay.kin(k)];
        let cap = k0
            + 0.5 * problem.a_max_right[k].max(0.0) * h * (2.0 * m * k0.max(1e-6)).sqrt();
        let lo_next = 0.5 * m * v[k + 1] * v[k + 1];
        if z[lay.kin(k + 1)] > cap {
            z[lay.kin(k + 1)] = cap.max(lo_next * (1.0 + 1e-6) + problem.kinetic_floor);
        }
    }

    let rate_hi = sc.engine.rate_at_p_max();
    let dp = (1e-3 * problem.scales.p).max(1.0);
    for j in 0..n {
        let k0 = z[lay.kin(j)];
        let k1 = z[lay.kin(j + 1)];
        let need = (k1 - k0) / h + 0.5 * (loss.loss(k0.max(0.0)) + loss.loss(k1.max(0.0)))
            - problem.terrain_mid[j];
        let mut pj = (need + dp).max(sc.engine.p_min + dp);
        if sc.engine.p_max.is_finite() {
            pj = pj.min(sc.engine.p_max - 0.2 * dp);
        }
        z[lay.p(j)] = pj;

        let f_pj = sc.engine.rate_unchecked(pj.clamp(sc.engine.p_min, sc.engine.p_max));
        let mut de = (1e-4 * problem.scales.p).max(0.1);
        if rate_hi.is_finite() {
            de = de.min(0.45 * (rate_hi - f_pj).max(0.0));
        }
        z[lay.e(j + 1)] = z[lay.e(j)] + h * (problem.solar_mid[j] - f_pj - de);
    }

    for k in 0..n {
        z[lay.x(k + 1)] = z[lay.x(k)] + 0.5 * h * (z[lay.v(k)] + z[lay.v(k + 1)]);
    }
    z
}

/// Seed a solve from a previous trajectory of any resolution or horizon:
/// resample in normalized time, then project into the strict interior. Falls
/// back to the cold start when projection fails.
pub fn warm_start(problem: &DiscretizedProblem, prev: &Trajectory) -> Vec<f64> {
    let direct = resample_to_point(problem, prev);
    if is_strictly_interior(problem, &direct) {
        return direct;
    }
    if let Some(projected) = project_interior(problem, &direct) {
        if is_strictly_interior(problem, &projected) {
            return projected;
        }
    }
    cold_start(problem)
}

fn resample_to_point(problem: &DiscretizedProblem, prev: &Trajectory) -> Vec<f64> {
    let n = problem.grid.n;
    let np = prev.grid.n;
    let lay = problem.layout;
    let mut z = vec![0.0; problem.num_vars()];
    z[lay.x(0)] = problem.initial_state[0];
    z[lay.v(0)] = problem.initial_state[1];
    z[lay.kin(0)] = problem.initial_state[2];
    z[lay.e(0)] = problem.initial_state[3];

    let sample = |arr: &[f64], tau: f64| -> f64 {
        let pos = tau * np as f64;
        let i = (pos.floor() as usize).min(np.saturating_sub(1));
        let theta = (pos - i as f64).clamp(0.0, 1.0);
        arr[i] * (1.0 - theta) + arr[(i + 1).min(np)] * theta
    };
    for k in 1..=n {
        let tau = k as f64 / n as f64;
        z[lay.v(k)] = sample(&prev.v, tau);
        z[lay.kin(k)] = sample(&prev.kinetic, tau);
        z[lay.e(k)] = sample(&prev.energy, tau);
    }
    for j in 0..n {
        let tau = (j as f64 + 0.5) / n as f64;
        let i = ((tau * np as f64).floor() as usize).min(np.saturating_sub(1));
        z[lay.p(j)] = prev.p_drv[i];
    }
    rebuild_chain(problem, &mut z);
    z
}

fn rebuild_chain(problem: &DiscretizedProblem, z: &mut [f64]) {
    let lay = problem.layout;
    let h = problem.grid.h;
    for k in 0..problem.grid.n {
        z[lay.x(k + 1)] = z[lay.x(k)] + 0.5 * h * (z[lay.v(k)] + z[lay.v(k + 1)]);
    }
}

fn project_interior(problem: &DiscretizedProblem, cand: &[f64]) -> Option<Vec<f64>> {
    let n = problem.grid.n;
    let h = problem.grid.h;
    let lay = problem.layout;
    let sc = &problem.scenario;
    let m = sc.vehicle.mass;
    let loss = crate::model::LossCoefficients::of(&sc.vehicle);
    let mut z = cand.to_vec();

    for k in 1..=n {
        let lo = problem.v_min_nodes[k];
        let hi = problem.v_max_nodes[k];
        if !(hi > lo) {
            return None;
        }
        let d = 1e-3 * (hi - lo);
        let v = z[lay.v(k)].clamp(lo + d, hi - d);
        z[lay.v(k)] = v;
        let k_lo = 0.5 * m * v * v * (1.0 + 1e-3) + 2.0 * problem.kinetic_floor;
        let k_hi = 0.5 * m * hi * hi * (1.0 - 1e-4);
        if k_lo >= k_hi {
            return None;
        }
        z[lay.kin(k)] = z[lay.kin(k)].clamp(k_lo, k_hi);
    }

    let rate_hi = sc.engine.rate_at_p_max();
    let dp = 1e-3 * problem.scales.p;
    for j in 0..n {
        let k0 = z[lay.kin(j)];
        let k1 = z[lay.kin(j + 1)];
        let need = (k1 - k0) / h + 0.5 * (loss.loss(k0.max(0.0)) + loss.loss(k1.max(0.0)))
            - problem.terrain_mid[j];
        let mut pj = z[lay.p(j)].max(need + dp).max(sc.engine.p_min + dp);
        if sc.engine.p_max.is_finite() {
            if pj > sc.engine.p_max - dp {
                pj = sc.engine.p_max - dp;
            }
            if pj < need {
                return None;
            }
        }
        z[lay.p(j)] = pj;
        let f_pj = sc.engine.rate_unchecked(pj.clamp(sc.engine.p_min, sc.engine.p_max));
        let mut de = 1e-3 * problem.scales.p;
        if rate_hi.is_finite() {
            de = de.min(0.45 * (rate_hi - f_pj).max(0.0));
        }
        let e_next = z[lay.e(j)] + h * (problem.solar_mid[j] - f_pj - de);
        if e_next <= sc.e_min + 1e-9 * problem.scales.e {
            return None;
        }
        z[lay.e(j + 1)] = e_next.min(sc.e_max - 1e-9 * problem.scales.e);
    }
    rebuild_chain(problem, &mut z);
    Some(z)
}

/// True when every inequality with at least one free variable holds with a
/// strictly negative residual and the kinetic floor is respected.
pub fn is_strictly_interior(problem: &DiscretizedProblem, z: &[f64]) -> bool {
    if z.len() != problem.num_vars() {
        return false;
    }
    for k in 1..=problem.grid.n {
        if !(z[problem.layout.kin(k)] > problem.kinetic_floor) {
            return false;
        }
    }
    for (ci, c) in problem.constraints.iter().enumerate() {
        if c.is_equality() || fixed_support(problem, ci) {
            continue;
        }
        match c.value(z) {
            // Any strictly negative residual keeps the log barrier finite,
            // so even boundary-hugging iterates from a finished solve count.
            Ok(val) => {
                if !(val < 0.0) {
                    return false;
                }
            }
            Err(_) => return false,
        }
    }
    true
}

fn fixed_support(problem: &DiscretizedProblem, ci: usize) -> bool {
    problem.constraints[ci].support().iter().all(|&i| i < 4)
}

fn trajectory_from_point(problem: &DiscretizedProblem, z: &[f64]) -> Trajectory {
    let n = problem.grid.n;
    let lay = problem.layout;
    Trajectory {
        grid: problem.grid,
        x: (0..=n).map(|k| z[lay.x(k)]).collect(),
        v: (0..=n).map(|k| z[lay.v(k)]).collect(),
        kinetic: (0..=n).map(|k| z[lay.kin(k)]).collect(),
        energy: (0..=n).map(|k| z[lay.e(k)]).collect(),
        p_drv: (0..n).map(|j| z[lay.p(j)]).collect(),
        p_brk: None,
        kind: TrajectoryKind::Relaxed,
    }
}

// ---------------------------------------------------------------------------
// Internal barrier machinery.
// ---------------------------------------------------------------------------

const NEWTON_TOL: f64 = 1e-10;
const MIN_STEP: f64 = 1e-13;
const PHASE1_EARLY_EXIT: f64 = -1e-3;

struct Workspace<'a> {
    p: &'a DiscretizedProblem,
    settings: SolverSettings,
    n: usize,
    sigma: Vec<f64>,
    /// Scale of the objective variable (terminal energy).
    obj_sigma: f64,
    /// Constraints with eliminated initial-state variables folded into
    /// constants, so derivative queries never touch the fixed node.
    cons: Vec<crate::transcription::Constraint>,
    ineq: Vec<usize>,
    fam: Vec<f64>,
    /// Whether the phase-I slack applies; the internal kinetic-floor rows
    /// guard the differentiable domain and never receive slack.
    slacked: Vec<bool>,
    /// Chain rows: per interval j, the scaled KKT coefficients.
    chain_terms: Vec<Vec<(usize, f64)>>,
    chain_idx: Vec<usize>,
    kkt_dim: usize,
    kl: usize,
    z: Vec<f64>,
    g: Vec<f64>,
    nu: Vec<f64>,
    slack: f64,
    phase1: bool,
    newton_total: usize,
}

enum CenterEnd {
    Converged,
    IterationCap,
    Budget,
    Stalled { decrement2: f64 },
    Factorization(String),
}

struct PhaseOne {
    slack: f64,
    gap: f64,
    z: Vec<f64>,
    newtons: usize,
    converged: bool,
}

impl PhaseOne {
    fn certified_infeasible(&self) -> bool {
        self.slack - self.gap > 0.0
    }
}

impl<'a> Workspace<'a> {
    fn new(p: &'a DiscretizedProblem, settings: SolverSettings) -> Self {
        let n = p.grid.n;
        let nv = p.num_vars();
        // Energy difference rows carry gradients of size sigma_E / (h * P);
        // balancing value scale against that stiffness keeps the Newton
        // systems well conditioned even for very large energy stores.
        let e_sigma = (p.scales.e * p.grid.h * p.scales.p)
            .sqrt()
            .clamp(p.grid.h * p.scales.p, p.scales.e);
        let mut sigma = vec![1.0; nv];
        for (i, s) in sigma.iter_mut().enumerate() {
            *s = if i % 5 == 3 {
                e_sigma
            } else {
                p.scales.of_var(&p.layout, i)
            };
        }
        let mut cons = p.constraints.clone();
        for c in cons.iter_mut() {
            match &mut c.expr {
                crate::transcription::Expr::PowerBalance { ik0, k0_fixed, .. } => {
                    if matches!(ik0, Some(i) if *i < 4) {
                        *k0_fixed = p.initial_state[2];
                        *ik0 = None;
                    }
                }
                crate::transcription::Expr::AccelCone { ik0, ik1, inv_h, coef } => {
                    // Launching from rest pins K_0 = 0, where the cone row is
                    // exactly the affine cap K_1 <= m (a h)^2 but with a
                    // degenerate corner; use the affine form.
                    if *ik0 < 4 && p.initial_state[2] <= 0.0 {
                        let root = *coef / *inv_h;
                        let mut terms = arrayvec::ArrayVec::new();
                        terms.push((*ik1, 1.0 / p.grid.h));
                        c.expr = crate::transcription::Expr::Affine {
                            terms,
                            constant: -root * root / p.grid.h,
                            equality: false,
                        };
                    }
                }
                _ => {}
            }
        }
        // The strict-positivity floor for kinetic energy enters the barrier
        // itself; a hard line-search wall alone lets Newton directions pin
        // iterates against it.
        let floor_rows_from = cons.len();
        for k in 1..=n {
            let mut terms = arrayvec::ArrayVec::new();
            terms.push((p.layout.kin(k), -1.0));
            cons.push(crate::transcription::Constraint {
                tag: ConstraintTag::KineticRelaxation,
                expr: crate::transcription::Expr::Affine {
                    terms,
                    constant: p.kinetic_floor,
                    equality: false,
                },
            });
        }

        let mut ineq = Vec::new();
        let mut fam = Vec::new();
        let mut slacked = Vec::new();
        let mut chain_idx = Vec::new();
        for (ci, c) in cons.iter().enumerate() {
            if c.tag == ConstraintTag::PositionChain {
                chain_idx.push(ci);
                continue;
            }
            if c.is_equality() || c.support().iter().all(|&i| i < 4) {
                continue;
            }
            ineq.push(ci);
            fam.push(p.scales.of_tag(c.tag));
            slacked.push(ci < floor_rows_from);
        }
        let kkt_dim = 6 * n;

        let kkt_of_full = |f: usize| -> usize {
            let q = f / 5;
            let r = f % 5;
            if r == 4 {
                q * 6
            } else {
                (q - 1) * 6 + 1 + r
            }
        };

        // Scaled chain rows; the row itself is normalized by the x scale.
        let mut chain_terms = Vec::with_capacity(n);
        for (j, &ci) in chain_idx.iter().enumerate() {
            let mut terms = Vec::new();
            if let crate::transcription::Expr::Affine { terms: ts, .. } = &cons[ci].expr {
                for &(fi, coef) in ts.iter() {
                    if fi < 4 {
                        continue;
                    }
                    terms.push((kkt_of_full(fi), sigma[fi] * coef / p.scales.x));
                }
            }
            debug_assert!(!terms.is_empty(), "chain {j} fully eliminated");
            chain_terms.push(terms);
        }

        // Bandwidth: inequality supports plus chain rows.
        let mut kl = 1;
        for &ci in &ineq {
            let sup = cons[ci].support();
            for &a in &sup {
                for &b in &sup {
                    if a >= 4 && b >= 4 {
                        kl = kl.max(kkt_of_full(a).abs_diff(kkt_of_full(b)));
                    }
                }
            }
        }
        for (j, terms) in chain_terms.iter().enumerate() {
            let row = j * 6 + 5;
            for &(col, _) in terms {
                kl = kl.max(row.abs_diff(col));
            }
        }

        Workspace {
            p,
            settings,
            n,
            sigma,
            obj_sigma: e_sigma,
            cons,
            ineq,
            fam,
            slacked,
            chain_terms,
            chain_idx,
            kkt_dim,
            kl,
            z: vec![0.0; nv],
            g: Vec::new(),
            nu: vec![0.0; n],
            slack: 0.0,
            phase1: false,
            newton_total: 0,
        }
    }

    fn kkt_of_full(&self, f: usize) -> usize {
        let q = f / 5;
        let r = f % 5;
        if r == 4 {
            q * 6
        } else {
            (q - 1) * 6 + 1 + r
        }
    }

    /// Inequalities whose variables are all pinned by initial conditions are
    /// checked once and dropped; a violation means the scenario itself is
    /// inconsistent at t = 0.
    fn fixed_support_violation(&self) -> Option<String> {
        let lay = self.p.layout;
        let mut z0 = vec![0.0; self.p.num_vars()];
        z0[lay.x(0)] = self.p.initial_state[0];
        z0[lay.v(0)] = self.p.initial_state[1];
        z0[lay.kin(0)] = self.p.initial_state[2];
        z0[lay.e(0)] = self.p.initial_state[3];
        for (ci, c) in self.p.constraints.iter().enumerate() {
            if c.is_equality() || !fixed_support(self.p, ci) {
                continue;
            }
            let fam = self.p.scales.of_tag(c.tag);
            match c.value(&z0) {
                Ok(v) if v > 1e-9 * fam => {
                    return Some(format!(
                        "initial state violates {:?} by {v:.3e}",
                        c.tag
                    ));
                }
                _ => {}
            }
        }
        None
    }

    /// Residuals of the kept inequalities; `None` when outside the domain.
    fn eval_g(&self, z: &[f64], slack: f64) -> Option<Vec<f64>> {
        for k in 1..=self.n {
            if !(z[self.p.layout.kin(k)] >= self.p.kinetic_floor) {
                return None;
            }
        }
        let mut g = Vec::with_capacity(self.ineq.len());
        for (idx, &ci) in self.ineq.iter().enumerate() {
            match self.cons[ci].value(z) {
                Ok(v) if v.is_finite() => {
                    let margin = if self.phase1 && self.slacked[idx] {
                        slack - v / self.fam[idx]
                    } else {
                        -v
                    };
                    if !(margin > 0.0) {
                        return None;
                    }
                    g.push(v);
                }
                _ => return None,
            }
        }
        Some(g)
    }

    fn margins(&self, g: &[f64], slack: f64) -> Vec<f64> {
        g.iter()
            .enumerate()
            .map(|(idx, &gv)| {
                if self.phase1 && self.slacked[idx] {
                    slack - gv / self.fam[idx]
                } else {
                    -gv
                }
            })
            .collect()
    }

    fn barrier_value(&self, t: f64, z: &[f64], g: &[f64], slack: f64) -> f64 {
        let mut phi = if self.phase1 {
            t * slack
        } else {
            -t * z[self.p.objective_index()] / self.obj_sigma
        };
        for (idx, &gv) in g.iter().enumerate() {
            let margin = if self.phase1 && self.slacked[idx] {
                slack - gv / self.fam[idx]
            } else {
                -gv
            };
            phi -= margin.ln();
        }
        phi
    }

    /// One centering run at fixed barrier parameter `t`.
    fn center(&mut self, t: f64) -> Result<CenterEnd> {
        let nv = self.p.num_vars();
        let obj_row = self.kkt_of_full(self.p.objective_index());
        let dim = self.kkt_dim;
        let mut band = BandMatrix::new(dim, self.kl, self.kl);
        let mut rhs = vec![0.0; dim];
        let mut border = vec![0.0; dim];
        let mut raw_step = vec![0.0; nv];

        for _inner in 0..self.settings.max_newton {
            if self.newton_total >= self.settings.max_total_iterations {
                return Ok(CenterEnd::Budget);
            }

            band.clear();
            rhs.fill(0.0);
            border.fill(0.0);
            let mut d_ss = 0.0;
            let mut rhs_s = 0.0;

            if !self.phase1 {
                rhs[obj_row] += t;
            }

            let mut scaled_grad: arrayvec::ArrayVec<(usize, f64), 4> = arrayvec::ArrayVec::new();
            for (idx, &ci) in self.ineq.iter().enumerate() {
                let c = &self.cons[ci];
                let in_slack = self.phase1 && self.slacked[idx];
                let margin = if in_slack {
                    self.slack - self.g[idx] / self.fam[idx]
                } else {
                    -self.g[idx]
                };
                let inv = 1.0 / margin;
                let inv2 = inv * inv;
                let fam_div = if in_slack { 1.0 / self.fam[idx] } else { 1.0 };

                let grad = c
                    .gradient(&self.z)
                    .map_err(|e| Error::Numerical(format!("gradient at interior point: {e}")))?;
                scaled_grad.clear();
                for &(fi, gv) in &grad {
                    if fi < 4 {
                        continue;
                    }
                    scaled_grad.push((self.kkt_of_full(fi), self.sigma[fi] * gv * fam_div));
                }
                for &(row, w) in &scaled_grad {
                    rhs[row] -= w * inv;
                    if in_slack {
                        border[row] -= w * inv2;
                    }
                    for &(col, w2) in &scaled_grad {
                        band.add(row, col, w * w2 * inv2);
                    }
                }
                let hess = c
                    .hessian(&self.z)
                    .map_err(|e| Error::Numerical(format!("Hessian at interior point: {e}")))?;
                for &(fi, fj, hv) in &hess {
                    if fi < 4 || fj < 4 {
                        continue;
                    }
                    let a = self.sigma[fi] * self.sigma[fj] * hv * fam_div * inv;
                    let (ri, rj) = (self.kkt_of_full(fi), self.kkt_of_full(fj));
                    band.add(ri, rj, a);
                    if ri != rj {
                        band.add(rj, ri, a);
                    }
                }
                if in_slack {
                    d_ss += inv2;
                    rhs_s += inv;
                }
            }
            if self.phase1 {
                rhs_s -= t;
            }

            for (j, terms) in self.chain_terms.iter().enumerate() {
                let row = j * 6 + 5;
                for &(col, a) in terms {
                    band.add(row, col, a);
                    band.add(col, row, a);
                }
                let cv = self.cons[self.chain_idx[j]]
                    .value(&self.z)
                    .expect("affine chain row");
                rhs[row] = -cv / self.p.scales.x;
            }

            // Factorize, with one regularized retry on breakdown.
            let mut delta = rhs.clone();
            let mut q = border.clone();
            let solved = match band.factorize() {
                Ok(()) => {
                    band.solve(&mut delta);
                    if self.phase1 {
                        band.solve(&mut q);
                    }
                    true
                }
                Err(_) => false,
            };
            if !solved {
                let mut band2 = BandMatrix::new(dim, self.kl, self.kl);
                // Rebuild with a proximal diagonal on the variable rows.
                // (Chain multiplier rows stay exact.)
                self.assemble_regularized(&mut band2, t, 1e-10)?;
                match band2.factorize() {
                    Ok(()) => {
                        delta.copy_from_slice(&rhs);
                        band2.solve(&mut delta);
                        if self.phase1 {
                            q.copy_from_slice(&border);
                            band2.solve(&mut q);
                        }
                    }
                    Err(e) => return Ok(CenterEnd::Factorization(e.to_string())),
                }
            }

            let mut delta_s = 0.0;
            if self.phase1 {
                let denom = d_ss - dot(&border, &q);
                if !(denom > 0.0) || !denom.is_finite() {
                    return Ok(CenterEnd::Factorization(format!(
                        "slack Schur complement {denom} not positive"
                    )));
                }
                delta_s = (rhs_s - dot(&border, &delta)) / denom;
                for i in 0..dim {
                    delta[i] -= delta_s * q[i];
                }
            }

            // Multipliers and decrement (variable rows only).
            for j in 0..self.n {
                self.nu[j] = delta[j * 6 + 5];
            }
            let mut decrement2 = 0.0;
            for row in 0..dim {
                if row % 6 != 5 {
                    decrement2 += rhs[row] * delta[row];
                }
            }
            if self.phase1 {
                decrement2 += rhs_s * delta_s;
            }

            if decrement2 * 0.5 <= NEWTON_TOL {
                return Ok(CenterEnd::Converged);
            }

            // Raw-space step.
            raw_step.fill(0.0);
            for f in 4..nv {
                raw_step[f] = self.sigma[f] * delta[self.kkt_of_full(f)];
            }

            let phi0 = self.barrier_value(t, &self.z, &self.g, self.slack);
            let dir_deriv = -decrement2;
            let cur_margins = self.margins(&self.g, self.slack);

            // Fraction-to-boundary cap from the linearized margins: no step
            // may close more than 99% of any margin, otherwise a crushed
            // slack poisons the next KKT matrix.
            let mut alpha_max = 1.0f64;
            for (idx, &ci) in self.ineq.iter().enumerate() {
                let in_slack = self.phase1 && self.slacked[idx];
                let grad = self.cons[ci]
                    .gradient(&self.z)
                    .map_err(|e| Error::Numerical(e.to_string()))?;
                let mut gdot = 0.0;
                for &(fi, gv) in &grad {
                    if fi >= 4 {
                        gdot += gv * raw_step[fi];
                    }
                }
                let margin_dot = if in_slack {
                    delta_s - gdot / self.fam[idx]
                } else {
                    -gdot
                };
                if margin_dot < 0.0 {
                    alpha_max = alpha_max.min(0.99 * cur_margins[idx] / (-margin_dot));
                }
            }

            let mut alpha = alpha_max.min(1.0);
            let mut accepted = false;
            while alpha >= MIN_STEP {
                let mut zc = self.z.clone();
                for f in 4..nv {
                    zc[f] += alpha * raw_step[f];
                }
                let sc = self.slack + alpha * delta_s;
                if let Some(gc) = self.eval_g(&zc, sc) {
                    // Fraction-to-boundary: a single step may not collapse
                    // any margin by more than three orders of magnitude.
                    // Slacked phase-I rows get an absolute floor as well:
                    // their multipliers sum to one, so every exact center
                    // keeps those margins above 1/t, and an iterate below
                    // that is off the path and poisons the conditioning.
                    let new_margins = self.margins(&gc, sc);
                    let floor1 = 0.01 / t;
                    let crushed =
                        cur_margins
                            .iter()
                            .zip(&new_margins)
                            .enumerate()
                            .any(|(idx, (&old, &new))| {
                                if self.phase1 && self.slacked[idx] {
                                    // Slacked multipliers sum to one, so no
                                    // center sits below 1/t.
                                    new < (1e-3 * old).max(floor1)
                                } else if self.phase1 {
                                    new < 1e-3 * old
                                } else {
                                    // Main-phase multipliers are unbounded;
                                    // only block catastrophic collapse.
                                    new < 1e-6 * old
                                }
                            });
                    if !crushed {
                        let phi_c = self.barrier_value(t, &zc, &gc, sc);
                        if phi_c.is_finite()
                            && phi_c <= phi0 + self.settings.armijo_slope * alpha * dir_deriv
                        {
                            self.z = zc;
                            self.g = gc;
                            self.slack = sc;
                            accepted = true;
                            break;
                        }
                    }
                }
                alpha *= self.settings.backtrack_shrink;
            }
            self.newton_total += 1;
            if !accepted {
                return Ok(CenterEnd::Stalled { decrement2 });
            }
        }
        Ok(CenterEnd::IterationCap)
    }

    /// Rebuild the KKT matrix with `reg` added to every variable diagonal.
    fn assemble_regularized(&self, band: &mut BandMatrix, _t: f64, reg: f64) -> Result<()> {
        let mut scaled_grad: arrayvec::ArrayVec<(usize, f64), 4> = arrayvec::ArrayVec::new();
        for (idx, &ci) in self.ineq.iter().enumerate() {
            let c = &self.cons[ci];
            let in_slack = self.phase1 && self.slacked[idx];
            let margin = if in_slack {
                self.slack - self.g[idx] / self.fam[idx]
            } else {
                -self.g[idx]
            };
            let inv = 1.0 / margin;
            let inv2 = inv * inv;
            let fam_div = if in_slack { 1.0 / self.fam[idx] } else { 1.0 };
            let grad = c
                .gradient(&self.z)
                .map_err(|e| Error::Numerical(e.to_string()))?;
            scaled_grad.clear();
            for &(fi, gv) in &grad {
                if fi < 4 {
                    continue;
                }
                scaled_grad.push((self.kkt_of_full(fi), self.sigma[fi] * gv * fam_div));
            }
            for &(row, w) in &scaled_grad {
                for &(col, w2) in &scaled_grad {
                    band.add(row, col, w * w2 * inv2);
                }
            }
            let hess = c
                .hessian(&self.z)
                .map_err(|e| Error::Numerical(e.to_string()))?;
            for &(fi, fj, hv) in &hess {
                if fi < 4 || fj < 4 {
                    continue;
                }
                let a = self.sigma[fi] * self.sigma[fj] * hv * fam_div * inv;
                let (ri, rj) = (self.kkt_of_full(fi), self.kkt_of_full(fj));
                band.add(ri, rj, a);
                if ri != rj {
                    band.add(rj, ri, a);
                }
            }
        }
        for (j, terms) in self.chain_terms.iter().enumerate() {
            let row = j * 6 + 5;
            for &(col, a) in terms {
                band.add(row, col, a);
                band.add(col, row, a);
            }
        }
        for row in 0..self.kkt_dim {
            if row % 6 != 5 {
                band.add(row, row, reg);
            }
        }
        Ok(())
    }

    /// Scaled stationarity residual of the centered barrier problem.
    fn stationarity(&self, t: f64) -> f64 {
        let nv = self.p.num_vars();
        let mut grad = vec![0.0; self.kkt_dim];
        if !self.phase1 {
            grad[self.kkt_of_full(self.p.objective_index())] -= t;
        }
        for (idx, &ci) in self.ineq.iter().enumerate() {
            let margin = -self.g[idx];
            let inv = 1.0 / margin;
            if let Ok(gr) = self.cons[ci].gradient(&self.z) {
                for &(fi, gv) in &gr {
                    if fi >= 4 {
                        grad[self.kkt_of_full(fi)] += self.sigma[fi] * gv * inv;
                    }
                }
            }
        }
        for (j, terms) in self.chain_terms.iter().enumerate() {
            for &(col, a) in terms {
                grad[col] += a * self.nu[j];
            }
        }
        let mut worst = 0.0f64;
        for f in 4..nv {
            worst = worst.max(grad[self.kkt_of_full(f)].abs());
        }
        worst / t
    }

    fn run_barrier(
        &mut self,
        z0: Vec<f64>,
        t0: f64,
        phase1_iters: usize,
        clock: Instant,
    ) -> Result<SolveOutcome> {
        self.phase1 = false;
        self.slack = 0.0;
        self.z = z0;
        self.g = match self.eval_g(&self.z, 0.0) {
            Some(g) => g,
            None => {
                return Ok(self.failure_outcome(
                    "barrier started from a non-interior point".into(),
                    phase1_iters,
                    clock,
                ))
            }
        };

        let m = self.ineq.len() as f64;
        let e_scale = self.obj_sigma;
        let mut t = t0;
        let mut gap_history = Vec::new();
        let mut bound_history = Vec::new();

        let (mut status, mut message) = loop {
            match self.center(t)? {
                CenterEnd::Converged | CenterEnd::IterationCap => {}
                CenterEnd::Budget => {
                    break (
                        SolveStatus::MaxIterations,
                        "total Newton budget exhausted".to_string(),
                    );
                }
                CenterEnd::Stalled { decrement2 } => {
                    // Backtracking cannot measure decreases below the
                    // floating-point noise on the barrier value, so a small
                    // residual decrement still counts as centered.
                    if decrement2 * 0.5 > 1e-2 {
                        break (
                            SolveStatus::NumericalFailure,
                            format!("line search stalled at Newton decrement {decrement2:.3e}"),
                        );
                    }
                }
                CenterEnd::Factorization(msg) => {
                    break (
                        SolveStatus::NumericalFailure,
                        format!("KKT factorization failed: {msg}"),
                    );
                }
            }

            let gap_scaled = m / t;
            let obj_raw = self.z[self.p.objective_index()];
            gap_history.push(gap_scaled);
            bound_history.push(obj_raw / e_scale + gap_scaled);

            if gap_scaled * e_scale <= self.settings.eps_gap * obj_raw.abs().max(1.0) {
                break (SolveStatus::Optimal, String::new());
            }
            if self.newton_total >= self.settings.max_total_iterations {
                break (
                    SolveStatus::MaxIterations,
                    "total Newton budget exhausted".to_string(),
                );
            }
            t *= self.settings.mu;
        };

        let stationarity = self.stationarity(t);
        let (objective, residuals) = self.p.residuals(&self.z)?;
        let mut max_eq = 0.0f64;
        let mut max_ineq = 0.0f64;
        let mut max_eq_rel = 0.0f64;
        let mut max_ineq_rel = 0.0f64;
        for (ci, c) in self.p.constraints.iter().enumerate() {
            let fam = self.p.scales.of_tag(c.tag);
            if c.is_equality() {
                max_eq = max_eq.max(residuals[ci].abs());
                max_eq_rel = max_eq_rel.max(residuals[ci].abs() / fam);
            } else {
                max_ineq = max_ineq.max(residuals[ci].max(0.0));
                max_ineq_rel = max_ineq_rel.max(residuals[ci].max(0.0) / fam);
            }
        }
        if status == SolveStatus::Optimal
            && (max_eq_rel > self.settings.eps_feas || max_ineq_rel > self.settings.eps_feas)
        {
            status = SolveStatus::NumericalFailure;
            message = format!(
                "feasibility audit failed: eq {max_eq_rel:.3e}, ineq {max_ineq_rel:.3e}"
            );
        }

        let report = SolveReport {
            status,
            objective,
            duality_gap: gap_history.last().copied().unwrap_or(f64::INFINITY) * e_scale,
            max_equality_residual: max_eq,
            max_inequality_violation: max_ineq,
            stationarity,
            newton_iterations: self.newton_total,
            phase1_iterations: phase1_iters,
            outer_iterations: gap_history.len(),
            final_barrier_parameter: t,
            gap_history,
            bound_history,
            wall_time_s: clock.elapsed().as_secs_f64(),
            message,
        };
        Ok(SolveOutcome {
            trajectory: Some(trajectory_from_point(self.p, &self.z)),
            report,
        })
    }

    /// Minimize a common slack over the family-scaled inequalities. With
    /// `measure` set, runs to the gap tolerance for an accurate margin;
    /// otherwise exits as soon as a comfortably interior point appears.
    fn phase_one(&mut self, z0: Vec<f64>, measure: bool) -> Result<PhaseOne> {
        self.phase1 = true;
        self.z = z0;
        // Initial slack strictly above the worst scaled residual.
        let mut worst = f64::NEG_INFINITY;
        for (idx, &ci) in self.ineq.iter().enumerate() {
            let v = match self.cons[ci].value(&self.z) {
                Ok(v) => v,
                Err(_) => {
                    // Kinetic floor violations in a candidate start: lift K.
                    let lay = self.p.layout;
                    for k in 1..=self.n {
                        let kk = self.z[lay.kin(k)];
                        self.z[lay.kin(k)] = kk.max(2.0 * self.p.kinetic_floor);
                    }
                    self.cons[ci]
                        .value(&self.z)
                        .map_err(|e| Error::Numerical(format!("phase-I start: {e}")))?
                }
            };
            if self.slacked[idx] {
                worst = worst.max(v / self.fam[idx]);
            }
        }
        self.slack = worst + 0.1 * (1.0 + worst.abs());
        self.g = self
            .eval_g(&self.z, self.slack)
            .ok_or_else(|| Error::Numerical("phase-I start outside domain".into()))?;

        let m = self.ineq.len() as f64;
        // Centering at small t would push every slack margin toward m/t and
        // flatten the barrier in the state variables, blowing up the Newton
        // steps; starting near m keeps the center's margins of order one.
        let mut t = (m / 10.0).max(1.0);
        let start_newtons = self.newton_total;
        let mut converged = false;
        loop {
            let (centered, weakly_centered) = match self.center(t)? {
                CenterEnd::Converged => (true, true),
                CenterEnd::IterationCap => (false, false),
                CenterEnd::Stalled { decrement2 } => {
                    if decrement2 * 0.5 > 1e-2 {
                        break;
                    }
                    // Near the center but not certifiably on it: usable for
                    // sign decisions, not as a dual bound.
                    (false, decrement2 * 0.5 <= 1e-6)
                }
                CenterEnd::Budget => break,
                // Conditioning breakdown at extreme barrier parameters:
                // stop centering and let the sign logic judge what we have.
                CenterEnd::Factorization(_) => break,
            };
            let gap = m / t;
            // A negative slack is an interior certificate of the current
            // point regardless of centering quality.
            if !measure && self.slack <= PHASE1_EARLY_EXIT {
                converged = true;
                break;
            }
            // The probe only needs the sign of the optimal slack plus some
            // headroom; resolving further pushes active margins toward the
            // roundoff floor and poisons the KKT conditioning.
            if weakly_centered && gap <= 1e-7_f64.max(0.05 * self.slack.abs()) {
                converged = true;
                break;
            }
            if gap <= 1e-7 {
                converged = self.slack.abs() > 20.0 * gap;
                break;
            }
            // Dual bound: an exact center puts the optimum above
            // slack - gap, so a comfortably positive value certifies
            // infeasibility early.
            if centered && self.slack - gap > 0.0 && self.slack.abs() > 10.0 * gap {
                converged = true;
                break;
            }
            if self.newton_total >= self.settings.max_total_iterations {
                break;
            }
            t *= self.settings.mu;
        }
        let gap = m / t;
        self.phase1 = false;
        Ok(PhaseOne {
            slack: self.slack,
            gap,
            z: self.z.clone(),
            newtons: self.newton_total - start_newtons,
            converged,
        })
    }

    fn infeasible_outcome(&self, message: String, phase1: usize, clock: Instant) -> SolveOutcome {
        SolveOutcome {
            trajectory: None,
            report: SolveReport {
                status: SolveStatus::Infeasible,
                objective: f64::NAN,
                duality_gap: f64::NAN,
                max_equality_residual: f64::NAN,
                max_inequality_violation: f64::NAN,
                stationarity: f64::NAN,
                newton_iterations: self.newton_total,
                phase1_iterations: phase1,
                outer_iterations: 0,
                final_barrier_parameter: 0.0,
                gap_history: Vec::new(),
                bound_history: Vec::new(),
                wall_time_s: clock.elapsed().as_secs_f64(),
                message,
            },
        }
    }

    fn failure_outcome(&self, message: String, phase1: usize, clock: Instant) -> SolveOutcome {
        SolveOutcome {
            trajectory: None,
            report: SolveReport {
                status: SolveStatus::NumericalFailure,
                objective: f64::NAN,
                duality_gap: f64::NAN,
                max_equality_residual: f64::NAN,
                max_inequality_violation: f64::NAN,
                stationarity: f64::NAN,
                newton_iterations: self.newton_total,
                phase1_iterations: phase1,
                outer_iterations: 0,
                final_barrier_parameter: 0.0,
                gap_history: Vec::new(),
                bound_history: Vec::new(),
                wall_time_s: clock.elapsed().as_secs_f64(),
                message,
            },
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Signal;
    use crate::scenarios;
    use crate::transcription::transcribe;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn pinned_cruise_matches_the_closed_form() {
        let sc = scenarios::pinned_cruise();
        let problem = transcribe(&sc, 100).unwrap();
        let outcome = solve(&problem, &settings()).unwrap();
        assert_eq!(outcome.report.status, SolveStatus::Optimal, "{}", outcome.report.message);
        let consumption = sc.e_init - outcome.report.objective;
        let expected = 111_041.3; // T * rate(drag(20) + rolling(20))
        assert!(
            (consumption - expected).abs() < 0.005 * expected,
            "consumption {consumption} J vs pinned {expected} J"
        );
    }

    #[test]
    fn unreachable_distance_is_infeasible() {
        let sc = scenarios::paperlike().with_horizon(60.0);
        // 5 km in 60 s needs 83 m/s; the cap is 30.6 m/s.
        let problem = transcribe(&sc, 60).unwrap();
        let outcome = solve(&problem, &settings()).unwrap();
        assert_eq!(outcome.report.status, SolveStatus::Infeasible);
        assert!(outcome.trajectory.is_none());
    }

    #[test]
    fn cold_start_is_strictly_interior_on_bundled_scenarios() {
        for (name, sc) in scenarios::all() {
            let problem = transcribe(&sc, 120).unwrap();
            let z = cold_start(&problem);
            assert!(
                is_strictly_interior(&problem, &z),
                "cold start not interior on {name}"
            );
        }
    }

    #[test]
    fn assess_feasibility_agrees_with_solve() {
        let sc = scenarios::pinned_cruise();
        let problem = transcribe(&sc, 60).unwrap();
        let fa = assess_feasibility(&problem, &settings()).unwrap();
        assert!(fa.feasible, "margin {}", fa.margin);
        assert!(fa.margin > -settings().eps_feas);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        // Bypasses validation on purpose: v_min > v_max on [20, 40] s.
        let mut sc = scenarios::paperlike().with_horizon(60.0);
        sc.x_end = 500.0;
        sc.v_min = Signal::steps(vec![(0.0, 0.0), (20.0, 25.0), (40.0, 0.0)]);
        sc.v_max = Signal::constant(20.0);
        let problem = transcribe(&sc, 60).unwrap();
        let fa = assess_feasibility(&problem, &settings()).unwrap();
        assert!(!fa.feasible);
        let outcome = solve(&problem, &settings()).unwrap();
        assert_eq!(outcome.report.status, SolveStatus::Infeasible);
    }

    #[test]
    fn margin_is_monotone_in_the_terminal_position() {
        let base = scenarios::energy_bound();
        let mut margins = Vec::new();
        for x_end in [4000.0, 4500.0, 5000.0, 5500.0, 6000.0] {
            let mut sc = base.clone();
            sc.x_end = x_end;
            let problem = transcribe(&sc, 80).unwrap();
            let fa = assess_feasibility(&problem, &settings()).unwrap();
            margins.push(fa.margin);
        }
        for w in margins.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-6,
                "margin should not grow with x_end: {margins:?}"
            );
        }
    }

    #[test]
    fn warm_restart_from_the_same_solution_is_cheap() {
        let sc = scenarios::pinned_cruise();
        let problem = transcribe(&sc, 100).unwrap();
        let first = solve(&problem, &settings()).unwrap();
        let traj = first.trajectory.as_ref().unwrap();
        let again = solve_with(
            &problem,
            &settings(),
            Some(StartPoint {
                trajectory: traj,
                barrier_parameter: Some(first.report.final_barrier_parameter),
            }),
        )
        .unwrap();
        assert_eq!(again.report.status, SolveStatus::Optimal);
        assert!(
            again.report.newton_iterations <= 5,
            "resume took {} Newton steps",
            again.report.newton_iterations
        );
    }

    #[test]
    fn refining_a_coarse_solution_yields_an_interior_point() {
        let sc = scenarios::pinned_cruise();
        let coarse = transcribe(&sc, 50).unwrap();
        let fine = transcribe(&sc, 100).unwrap();
        let outcome = solve(&coarse, &settings()).unwrap();
        let z = warm_start(&fine, outcome.trajectory.as_ref().unwrap());
        assert!(is_strictly_interior(&fine, &z));
    }

    #[test]
    fn reports_are_deterministic() {
        let sc = scenarios::energy_bound().with_horizon(300.0);
        let problem = transcribe(&sc, 90).unwrap();
        let a = solve(&problem, &settings()).unwrap();
        let b = solve(&problem, &settings()).unwrap();
        assert_eq!(a.report.status, b.report.status);
        assert_eq!(a.report.objective.to_bits(), b.report.objective.to_bits());
        assert_eq!(a.report.newton_iterations, b.report.newton_iterations);
        assert_eq!(a.report.gap_history, b.report.gap_history);
        let ta = a.trajectory.unwrap();
        let tb = b.trajectory.unwrap();
        for (x, y) in ta.energy.iter().zip(tb.energy.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn objective_bound_tightens_across_outer_iterations() {
        let sc = scenarios::pinned_cruise();
        let problem = transcribe(&sc, 80).unwrap();
        let outcome = solve(&problem, &settings()).unwrap();
        let bounds = &outcome.report.bound_history;
        for w in bounds.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9,
                "upper bound should tighten: {bounds:?}"
            );
        }
        // Gaps shrink by construction of the outer loop.
        let gaps = &outcome.report.gap_history;
        for w in gaps.windows(2) {
            assert!(w[1] < w[0]);
        }
    }
}
