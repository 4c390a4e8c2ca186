//! Mapping a relaxed solution back to a physically feasible trajectory.
//!
//! A relaxed optimum may hold surplus kinetic energy (`K > (1/2) m v^2`) and
//! an internal-energy slope steeper than the engine rate. The recovery map
//! reads only `K` and `E`: it takes the speed implied by the kinetic energy,
//! re-integrates position from that speed, inverts the engine characteristic
//! on the realized energy slope, and balances the kinetic-energy equation
//! with a brake term. The objective value is carried over untouched, so a
//! feasible recovered point is also optimal for the original problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LossCoefficients, Scenario};
use crate::transcription::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryKind {
    /// Straight out of the convex program; `K` may exceed `(1/2) m v^2`.
    Relaxed,
    /// Physically consistent: `K = (1/2) m v^2` and brake power realized.
    Recovered,
}

impl TrajectoryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrajectoryKind::Relaxed => "relaxed",
            TrajectoryKind::Recovered => "recovered",
        }
    }
}

/// A sampled trajectory: states at grid nodes, powers on intervals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: Grid,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub kinetic: Vec<f64>,
    pub energy: Vec<f64>,
    pub p_drv: Vec<f64>,
    /// Brake power per interval; present on recovered/simulated trajectories.
    pub p_brk: Option<Vec<f64>>,
    pub kind: TrajectoryKind,
}

impl Trajectory {
    /// Terminal internal energy (the objective being maximized).
    pub fn terminal_energy(&self) -> f64 {
        *self.energy.last().expect("nonempty trajectory")
    }

    pub fn consumption(&self, scenario: &Scenario) -> f64 {
        scenario.e_init - self.terminal_energy()
    }

    pub fn terminal_position(&self) -> f64 {
        *self.x.last().expect("nonempty trajectory")
    }
}

/// Per-constraint worst-case violation of the original problem.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityEntry {
    pub name: &'static str,
    /// Worst signed violation (negative means slack everywhere).
    pub violation: f64,
    /// Natural magnitude for relative judgments.
    pub scale: f64,
    /// Node or interval index where the worst value occurs.
    pub at: usize,
}

impl FeasibilityEntry {
    pub fn relative(&self) -> f64 {
        self.violation / self.scale
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub entries: Vec<FeasibilityEntry>,
}

impl FeasibilityReport {
    pub fn entry(&self, name: &str) -> &FeasibilityEntry {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .unwrap_or_else(|| panic!("no feasibility entry named {name}"))
    }

    pub fn max_relative_violation(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.relative())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn passes(&self, tol: &Tolerances) -> bool {
        self.entries.iter().all(|e| e.violation <= tol.rel * e.scale)
    }
}

/// Pass thresholds for [`check_feasibility`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    /// Violations up to `rel * scale` pass.
    pub rel: f64,
    /// Acceleration is rechecked in speed form, which trails the kinetic
    /// surrogate by up to one `a_max * h` speed increment per step (exactly
    /// saturated when launching from rest); that gap is granted here.
    pub accel_step_allowance: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rel: 1e-6,
            accel_step_allowance: 1.0,
        }
    }
}

impl Tolerances {
    pub fn simulation() -> Self {
        // Forward simulation does not follow the grid difference scheme
        // exactly, so allow discretization-sized residuals.
        Tolerances {
            rel: 1e-4,
            accel_step_allowance: 1.0,
        }
    }
}

/// Apply the tightness construction to a relaxed trajectory.
pub fn recover(relaxed: &Trajectory, scenario: &Scenario) -> Result<Trajectory> {
    let grid = relaxed.grid;
    let n = grid.n;
    let h = grid.h;
    let m = scenario.vehicle.mass;
    let loss = LossCoefficients::of(&scenario.vehicle);
    let vmax_sup = scenario.v_max.max_value();
    let k_scale = 0.5 * m * vmax_sup * vmax_sup;

    let mut v = Vec::with_capacity(n + 1);
    let mut kinetic = Vec::with_capacity(n + 1);
    for (k, &kk) in relaxed.kinetic.iter().enumerate() {
        if kk < -1e-9 * k_scale {
            return Err(Error::Input(format!(
                "relaxed kinetic energy {kk} J at node {k} is negative beyond tolerance"
            )));
        }
        let kk = kk.max(0.0);
        kinetic.push(kk);
        v.push((2.0 * kk / m).sqrt());
    }

    let mut x = Vec::with_capacity(n + 1);
    x.push(scenario.x_init);
    for k in 0..n {
        x.push(x[k] + 0.5 * h * (v[k] + v[k + 1]));
    }

    // Terminal energy must be preserved bit for bit.
    let energy = relaxed.energy.clone();

    let rate_lo = scenario.engine.rate_at_p_min();
    let rate_hi = scenario.engine.rate_at_p_max();
    let mut p_drv = Vec::with_capacity(n);
    let mut p_brk = Vec::with_capacity(n);
    for j in 0..n {
        let s_mid = scenario.solar_at(grid.t_mid(j))?;
        let d_mid = scenario.terrain_at(grid.t_mid(j))?;
        let q = s_mid - (energy[j + 1] - energy[j]) / h;
        let tol = 1e-6 * (1.0 + q.abs() + rate_lo.abs());
        if q < rate_lo - tol || q > rate_hi + tol {
            return Err(Error::Input(format!(
                "energy slope at interval {j} implies rate {q} W outside the engine range \
                 [{rate_lo}, {rate_hi}]"
            )));
        }
        let drv = scenario.engine.inverse(q.clamp(rate_lo, rate_hi))?;
        let loss_avg = 0.5 * (loss.loss(kinetic[j]) + loss.loss(kinetic[j + 1]));
        let dk = (kinetic[j + 1] - kinetic[j]) / h;
        p_drv.push(drv);
        p_brk.push(drv - loss_avg + d_mid - dk);
    }

    Ok(Trajectory {
        grid,
        x,
        v,
        kinetic,
        energy,
        p_drv,
        p_brk: Some(p_brk),
        kind: TrajectoryKind::Recovered,
    })
}

/// Measure every original-problem constraint on a recovered (or simulated)
/// trajectory. Always returns a report; pass/fail is the caller's judgment.
pub fn check_feasibility(
    traj: &Trajectory,
    scenario: &Scenario,
    tol: &Tolerances,
) -> FeasibilityReport {
    let grid = traj.grid;
    let n = grid.n;
    let h = grid.h;
    let m = scenario.vehicle.mass;
    let loss = LossCoefficients::of(&scenario.vehicle);

    let v_scale = scenario.v_max.max_value().max(1.0);
    let k_scale = 0.5 * m * v_scale * v_scale;
    let e_scale = scenario
        .e_init
        .abs()
        .max(scenario.e_max - scenario.e_min)
        .max(k_scale);
    let x_scale = (scenario.x_end - scenario.x_init).max(1.0);
    let p_scale = {
        let a = scenario.a_max.max_value().max(0.0);
        let cap = if scenario.engine.p_max.is_finite() {
            scenario.engine.p_max.abs()
        } else {
            loss.loss(k_scale) + a * (2.0 * m * k_scale).sqrt()
        };
        cap.max(scenario.engine.p_min.abs()).max(1e3)
    };

    fn worst(values: impl Iterator<Item = f64>) -> (f64, usize) {
        let mut w = f64::NEG_INFINITY;
        let mut at = 0;
        for (i, val) in values.enumerate() {
            if val > w {
                w = val;
                at = i;
            }
        }
        (w, at)
    }

    let mut entries = Vec::new();

    // Position dynamics: trapezoidal chain plus the initial condition.
    {
        let (mut w, mut at) = worst(
            (0..n).map(|k| (traj.x[k + 1] - traj.x[k] - 0.5 * h * (traj.v[k] + traj.v[k + 1])).abs()),
        );
        let x0 = (traj.x[0] - scenario.x_init).abs();
        if x0 > w {
            w = x0;
            at = 0;
        }
        entries.push(FeasibilityEntry {
            name: "position_dynamics",
            violation: w,
            scale: x_scale,
            at,
        });
    }

    entries.push(FeasibilityEntry {
        name: "terminal_position",
        violation: scenario.x_end - traj.terminal_position(),
        scale: x_scale,
        at: n,
    });

    {
        let (w, at) = worst(
            (0..=n).map(|k| scenario.v_min.sample(grid.t(k)).unwrap_or(0.0) - traj.v[k]),
        );
        entries.push(FeasibilityEntry {
            name: "speed_lower",
            violation: w,
            scale: v_scale,
            at,
        });
    }
    {
        let (w, at) = worst(
            (0..=n)
                .map(|k| traj.v[k] - scenario.v_max.sample(grid.t(k)).unwrap_or(f64::INFINITY)),
        );
        entries.push(FeasibilityEntry {
            name: "speed_upper",
            violation: w,
            scale: v_scale,
            at,
        });
    }

    // Acceleration, in speed form, net of the granted per-step allowance.
    {
        let (w, at) = worst(
            (0..n).map(|j| {
                let a = scenario.a_max.sample(grid.t(j + 1)).unwrap_or(0.0);
                (traj.v[j + 1] - traj.v[j]) - (1.0 + tol.accel_step_allowance) * a * h
            }),
        );
        entries.push(FeasibilityEntry {
            name: "acceleration",
            violation: w,
            scale: v_scale,
            at,
        });
    }

    {
        let (w, at) = worst(
            (0..=n).map(|k| (traj.kinetic[k] - 0.5 * m * traj.v[k] * traj.v[k]).abs()),
        );
        entries.push(FeasibilityEntry {
            name: "kinetic_identity",
            violation: w,
            scale: k_scale,
            at,
        });
    }

    // Kinetic-energy balance with the stored brake power, and brake sign.
    {
        let zero = vec![0.0; n];
        let brake = traj.p_brk.as_deref().unwrap_or(&zero);
        let (w, at) = worst(
            (0..n).map(|j| {
                let d_mid = scenario.terrain_at(grid.t_mid(j)).unwrap_or(0.0);
                let loss_avg = 0.5 * (loss.loss(traj.kinetic[j].max(0.0))
                    + loss.loss(traj.kinetic[j + 1].max(0.0)));
                ((traj.kinetic[j + 1] - traj.kinetic[j]) / h
                    - (traj.p_drv[j] - loss_avg - brake[j] + d_mid))
                    .abs()
            }),
        );
        entries.push(FeasibilityEntry {
            name: "energy_balance",
            violation: w,
            scale: p_scale,
            at,
        });
        let (wb, atb) = worst((0..n).map(|j| -brake[j]));
        entries.push(FeasibilityEntry {
            name: "brake_nonnegativity",
            violation: wb,
            scale: p_scale,
            at: atb,
        });
    }

    // Engine equality on the realized energy slope, and the power domain.
    {
        let (w, at) = worst(
            (0..n).map(|j| {
                let s_mid = scenario.solar_at(grid.t_mid(j)).unwrap_or(0.0);
                let q = s_mid - (traj.energy[j + 1] - traj.energy[j]) / h;
                match scenario.engine.rate(traj.p_drv[j]) {
                    Ok(f) => (f - q).abs(),
                    Err(_) => f64::INFINITY,
                }
            }),
        );
        entries.push(FeasibilityEntry {
            name: "engine_identity",
            violation: w,
            scale: p_scale,
            at,
        });
        let (wd, atd) = worst(
            (0..n).map(|j| {
                (scenario.engine.p_min - traj.p_drv[j])
                    .max(traj.p_drv[j] - scenario.engine.p_max)
            }),
        );
        entries.push(FeasibilityEntry {
            name: "engine_domain",
            violation: wd,
            scale: p_scale,
            at: atd,
        });
    }

    {
        let (w, at) = worst(
            (0..=n)
                .map(|k| (scenario.e_min - traj.energy[k]).max(traj.energy[k] - scenario.e_max)),
        );
        entries.push(FeasibilityEntry {
            name: "energy_box",
            violation: w,
            scale: e_scale,
            at,
        });
    }

    FeasibilityReport { entries }
}
