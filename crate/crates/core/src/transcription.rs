//! Direct transcription of the relaxed optimal-control problem on a uniform
//! time grid.
//!
//! States live at the `N+1` grid nodes, drive power on the `N` intervals.
//! Conventions, chosen for convexity and first-order consistency:
//!
//! * position integrates the trapezoidal rule of the node speeds;
//! * kinetic and internal energy use forward differences
//!   `D_k(y) = (y_{k+1} - y_k) / h`;
//! * the acceleration surrogate evaluates `sqrt(2 m K)` at the right node,
//!   which keeps launching from rest feasible;
//! * the drag/rolling loss term is averaged over the two endpoint nodes;
//! * state limits are sampled at node times, solar/terrain inputs at
//!   interval midpoints.
//!
//! Every emitted constraint carries a tag naming its role, and all of them
//! are affine or convex with analytic first and second derivatives.

use arrayvec::ArrayVec;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{EngineCurve, LossCoefficients, Scenario};

/// Uniform time grid with `n` intervals over `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub h: f64,
    pub horizon: f64,
}

impl Grid {
    pub fn new(n: usize, horizon: f64) -> Result<Grid> {
        if n < 2 {
            return Err(Error::Transcription(format!(
                "grid needs at least 2 intervals, got {n}"
            )));
        }
        if !(horizon > 0.0) {
            return Err(Error::Transcription(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        Ok(Grid {
            n,
            h: horizon / n as f64,
            horizon,
        })
    }

    /// Time of node `k`; exact at both ends.
    pub fn t(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.n as f64
    }

    /// Midpoint time of interval `j`.
    pub fn t_mid(&self, j: usize) -> f64 {
        self.horizon * (j as f64 + 0.5) / self.n as f64
    }
}

/// Variable indices: nodes are interleaved with the interval power that
/// follows them, which keeps every constraint's support within a narrow band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarLayout {
    pub n: usize,
}

impl VarLayout {
    pub fn num_vars(&self) -> usize {
        5 * self.n + 4
    }
    pub fn x(&self, k: usize) -> usize {
        5 * k
    }
    pub fn v(&self, k: usize) -> usize {
        5 * k + 1
    }
    pub fn kin(&self, k: usize) -> usize {
        5 * k + 2
    }
    pub fn e(&self, k: usize) -> usize {
        5 * k + 3
    }
    pub fn p(&self, j: usize) -> usize {
        5 * j + 4
    }
}

/// Role of a constraint in the optimal-control problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintTag {
    /// Fixed initial state (position, speed, kinetic and internal energy).
    InitialCondition,
    /// Trapezoidal position chain.
    PositionChain,
    /// Lower speed limit at a node.
    SpeedLower,
    /// Upper speed limit expressed on kinetic energy.
    SpeedUpperKinetic,
    /// Acceleration limit expressed on kinetic energy.
    AccelKinetic,
    /// Relaxed kinetic-energy definition `(1/2) m v^2 <= K`.
    KineticRelaxation,
    /// Kinetic-energy balance with drive power and losses.
    KineticDynamics,
    /// Internal-energy decrease at least at the engine rate.
    EnergyDynamics,
    /// Internal-energy box.
    EnergyBox,
    /// Consumption rate within the engine's range.
    EngineRateRange,
    /// Drive-power box.
    DrivePowerBox,
    /// Terminal position target.
    TerminalPosition,
}

pub const ALL_TAGS: [ConstraintTag; 12] = [
    ConstraintTag::InitialCondition,
    ConstraintTag::PositionChain,
    ConstraintTag::SpeedLower,
    ConstraintTag::SpeedUpperKinetic,
    ConstraintTag::AccelKinetic,
    ConstraintTag::KineticRelaxation,
    ConstraintTag::KineticDynamics,
    ConstraintTag::EnergyDynamics,
    ConstraintTag::EnergyBox,
    ConstraintTag::EngineRateRange,
    ConstraintTag::DrivePowerBox,
    ConstraintTag::TerminalPosition,
];

pub type GradTerms = ArrayVec<(usize, f64), 4>;
pub type HessTerms = ArrayVec<(usize, usize, f64), 4>;

/// Constraint function. Sign convention: equality rows are feasible at zero,
/// inequality rows at nonpositive values.
#[derive(Debug, Clone)]
pub enum Expr {
    /// `sum c_i z_i + constant` (= 0 if `equality`, else <= 0).
    Affine {
        terms: ArrayVec<(usize, f64), 4>,
        constant: f64,
        equality: bool,
    },
    /// `(K1 - K0)/h - coef * sqrt(K0 + K1) <= 0` with `coef = a_max sqrt(m)`,
    /// i.e. the speed-change limit with `sqrt(2 m K)` taken at the interval
    /// midpoint kinetic energy. Convex (negated square root of an affine
    /// form), launches from rest, and second-order accurate where the
    /// right-node form is only first-order.
    AccelCone { ik0: usize, ik1: usize, inv_h: f64, coef: f64 },
    /// `(1/2) m v^2 - K <= 0`.
    KineticGap { iv: usize, ik: usize, half_m: f64 },
    /// `(K1 - K0)/h - P + (loss(K0) + loss(K1))/2 - disturbance <= 0`.
    /// A fixed node value (eliminated initial state) may replace `ik0`.
    PowerBalance {
        ik0: Option<usize>,
        k0_fixed: f64,
        ik1: usize,
        ip: usize,
        inv_h: f64,
        c32: f64,
        clin: f64,
        disturbance: f64,
    },
    /// `(E1 - E0)/h + alpha P^2 + beta P + gamma - supply <= 0`.
    EnergyRateQuad {
        ie0: usize,
        ie1: usize,
        ip: usize,
        inv_h: f64,
        alpha: f64,
        beta: f64,
        gamma: f64,
        supply: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub tag: ConstraintTag,
    pub expr: Expr,
}

impl Constraint {
    pub fn is_equality(&self) -> bool {
        matches!(self.expr, Expr::Affine { equality: true, .. })
    }

    /// Variable indices this constraint touches.
    pub fn support(&self) -> ArrayVec<usize, 4> {
        let mut out = ArrayVec::new();
        match &self.expr {
            Expr::Affine { terms, .. } => {
                for &(i, _) in terms {
                    out.push(i);
                }
            }
            Expr::AccelCone { ik0, ik1, .. } => {
                out.push(*ik0);
                out.push(*ik1);
            }
            Expr::KineticGap { iv, ik, .. } => {
                out.push(*iv);
                out.push(*ik);
            }
            Expr::PowerBalance { ik0, ik1, ip, .. } => {
                if let Some(i) = ik0 {
                    out.push(*i);
                }
                out.push(*ik1);
                out.push(*ip);
            }
            Expr::EnergyRateQuad { ie0, ie1, ip, .. } => {
                out.push(*ie0);
                out.push(*ie1);
                out.push(*ip);
            }
        }
        out
    }

    /// Constraint value; requires kinetic-energy arguments to be nonnegative.
    pub fn value(&self, z: &[f64]) -> Result<f64> {
        match &self.expr {
            Expr::Affine { terms, constant, .. } => {
                Ok(terms.iter().map(|&(i, c)| c * z[i]).sum::<f64>() + constant)
            }
            Expr::AccelCone { ik0, ik1, inv_h, coef } => {
                let s = z[*ik0] + z[*ik1];
                if s < 0.0 {
                    return Err(Error::OutsideDomain(format!(
                        "kinetic energy sum {s} < 0 under an acceleration cone"
                    )));
                }
                Ok((z[*ik1] - z[*ik0]) * inv_h - coef * s.sqrt())
            }
            Expr::KineticGap { iv, ik, half_m } => Ok(half_m * z[*iv] * z[*iv] - z[*ik]),
            Expr::PowerBalance {
                ik0,
                k0_fixed,
                ik1,
                ip,
                inv_h,
                c32,
                clin,
                disturbance,
            } => {
                let k0 = ik0.map(|i| z[i]).unwrap_or(*k0_fixed);
                let k1 = z[*ik1];
                if k0 < 0.0 || k1 < 0.0 {
                    return Err(Error::OutsideDomain(format!(
                        "kinetic energy {} < 0 under a power balance",
                        k0.min(k1)
                    )));
                }
                let loss_avg =
                    0.5 * (c32 * k0.powf(1.5) + clin * k0 + c32 * k1.powf(1.5) + clin * k1);
                Ok((k1 - k0) * inv_h - z[*ip] + loss_avg - disturbance)
            }
            Expr::EnergyRateQuad {
                ie0,
                ie1,
                ip,
                inv_h,
                alpha,
                beta,
                gamma,
                supply,
            } => {
                let p = z[*ip];
                Ok((z[*ie1] - z[*ie0]) * inv_h + alpha * p * p + beta * p + gamma - supply)
            }
        }
    }

    /// Analytic gradient; kinetic-energy arguments must be strictly positive
    /// wherever a square root appears.
    pub fn gradient(&self, z: &[f64]) -> Result<GradTerms> {
        let mut g = GradTerms::new();
        match &self.expr {
            Expr::Affine { terms, .. } => {
                for &(i, c) in terms {
                    g.push((i, c));
                }
            }
            Expr::AccelCone { ik0, ik1, inv_h, coef } => {
                let s = z[*ik0] + z[*ik1];
                if s <= 0.0 {
                    return Err(Error::OutsideDomain(format!(
                        "kinetic energy sum {s} <= 0 in an acceleration-cone derivative"
                    )));
                }
                let slope = 0.5 * coef / s.sqrt();
                g.push((*ik0, -inv_h - slope));
                g.push((*ik1, inv_h - slope));
            }
            Expr::KineticGap { iv, ik, half_m } => {
                g.push((*iv, 2.0 * half_m * z[*iv]));
                g.push((*ik, -1.0));
            }
            Expr::PowerBalance {
                ik0,
                ik1,
                ip,
                inv_h,
                c32,
                clin,
                ..
            } => {
                let k1 = z[*ik1];
                if k1 < 0.0 {
                    return Err(Error::OutsideDomain(format!(
                        "kinetic energy {k1} < 0 in a power-balance derivative"
                    )));
                }
                if let Some(i0) = ik0 {
                    let k0 = z[*i0];
                    if k0 < 0.0 {
                        return Err(Error::OutsideDomain(format!(
                            "kinetic energy {k0} < 0 in a power-balance derivative"
                        )));
                    }
                    g.push((*i0, -inv_h + 0.5 * (1.5 * c32 * k0.sqrt() + clin)));
                }
                g.push((*ik1, inv_h + 0.5 * (1.5 * c32 * k1.sqrt() + clin)));
                g.push((*ip, -1.0));
            }
            Expr::EnergyRateQuad {
                ie0,
                ie1,
                ip,
                inv_h,
                alpha,
                beta,
                ..
            } => {
                g.push((*ie0, -inv_h));
                g.push((*ie1, *inv_h));
                g.push((*ip, 2.0 * alpha * z[*ip] + beta));
            }
        }
        Ok(g)
    }

    /// Analytic Hessian entries (lower triangle not deduplicated; all emitted
    /// entries here are diagonal).
    pub fn hessian(&self, z: &[f64]) -> Result<HessTerms> {
        let mut h = HessTerms::new();
        match &self.expr {
            Expr::Affine { .. } => {}
            Expr::AccelCone { ik0, ik1, coef, .. } => {
                let s = z[*ik0] + z[*ik1];
                if s <= 0.0 {
                    return Err(Error::OutsideDomain(format!(
                        "kinetic energy sum {s} <= 0 in an acceleration-cone Hessian"
                    )));
                }
                let curve = 0.25 * coef / (s * s.sqrt());
                h.push((*ik0, *ik0, curve));
                h.push((*ik0, *ik1, curve));
                h.push((*ik1, *ik1, curve));
            }
            Expr::KineticGap { iv, half_m, .. } => {
                h.push((*iv, *iv, 2.0 * half_m));
            }
            Expr::PowerBalance { ik0, ik1, c32, .. } => {
                if let Some(i0) = ik0 {
                    let k0 = z[*i0];
                    if k0 <= 0.0 {
                        return Err(Error::OutsideDomain(format!(
                            "kinetic energy {k0} <= 0 in a power-balance Hessian"
                        )));
                    }
                    h.push((*i0, *i0, 0.5 * 0.75 * c32 / k0.sqrt()));
                }
                let k1 = z[*ik1];
                if k1 <= 0.0 {
                    return Err(Error::OutsideDomain(format!(
                        "kinetic energy {k1} <= 0 in a power-balance Hessian"
                    )));
                }
                h.push((*ik1, *ik1, 0.5 * 0.75 * c32 / k1.sqrt()));
            }
            Expr::EnergyRateQuad { ip, alpha, .. } => {
                h.push((*ip, *ip, 2.0 * alpha));
            }
        }
        Ok(h)
    }
}

/// Characteristic magnitudes used for scaling and relative tolerances.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Scales {
    pub x: f64,
    pub v: f64,
    pub k: f64,
    pub e: f64,
    pub p: f64,
}

impl Scales {
    /// Scale of the variable at layout index `i`.
    pub fn of_var(&self, layout: &VarLayout, i: usize) -> f64 {
        match i % 5 {
            0 => self.x,
            1 => self.v,
            2 => self.k,
            3 => self.e,
            _ => {
                if i == layout.num_vars() - 1 {
                    self.e // last slot is E_N, not a power
                } else {
                    self.p
                }
            }
        }
    }

    /// Natural magnitude of a constraint family's residual.
    pub fn of_tag(&self, tag: ConstraintTag) -> f64 {
        match tag {
            ConstraintTag::InitialCondition | ConstraintTag::PositionChain => self.x,
            ConstraintTag::SpeedLower => self.v,
            ConstraintTag::SpeedUpperKinetic | ConstraintTag::KineticRelaxation => self.k,
            ConstraintTag::AccelKinetic
            | ConstraintTag::KineticDynamics
            | ConstraintTag::EnergyDynamics
            | ConstraintTag::EngineRateRange
            | ConstraintTag::DrivePowerBox => self.p,
            ConstraintTag::EnergyBox => self.e,
            ConstraintTag::TerminalPosition => self.x,
        }
    }
}

/// The finite-dimensional convex program.
#[derive(Debug, Clone)]
pub struct DiscretizedProblem {
    pub grid: Grid,
    pub layout: VarLayout,
    pub constraints: Vec<Constraint>,
    pub scales: Scales,
    /// Values pinned by the initial conditions: `[x_0, v_0, K_0, E_0]`.
    pub initial_state: [f64; 4],
    /// Strict positivity floor for kinetic energy during solves.
    pub kinetic_floor: f64,
    /// Sampled limits at nodes, kept for diagnostics and warm starts.
    pub v_min_nodes: Vec<f64>,
    pub v_max_nodes: Vec<f64>,
    pub a_max_right: Vec<f64>,
    pub solar_mid: Vec<f64>,
    pub terrain_mid: Vec<f64>,
    pub scenario: Scenario,
}

impl DiscretizedProblem {
    pub fn num_vars(&self) -> usize {
        self.layout.num_vars()
    }

    /// Objective to maximize: terminal internal energy.
    pub fn objective(&self, z: &[f64]) -> f64 {
        z[self.layout.e(self.grid.n)]
    }

    pub fn objective_index(&self) -> usize {
        self.layout.e(self.grid.n)
    }

    /// Maximum index distance between any two coupled variables; the KKT
    /// system is banded with this half-bandwidth plus the chain multipliers.
    pub fn coupling_bandwidth(&self) -> usize {
        let mut bw = 0;
        for c in &self.constraints {
            let s = c.support();
            for &a in &s {
                for &b in &s {
                    bw = bw.max(a.abs_diff(b));
                }
            }
        }
        bw
    }

    /// Objective value and all residuals at a point (feasible: equalities at
    /// zero, inequalities nonpositive).
    pub fn residuals(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        if z.len() != self.num_vars() {
            return Err(Error::Transcription(format!(
                "point has {} entries, problem has {} variables",
                z.len(),
                self.num_vars()
            )));
        }
        let mut r = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            r.push(c.value(z)?);
        }
        Ok((self.objective(z), r))
    }

    /// Value, gradient and Hessian of one constraint at a strictly interior
    /// point.
    pub fn constraint_derivatives(
        &self,
        ci: usize,
        z: &[f64],
    ) -> Result<(f64, GradTerms, HessTerms)> {
        let c = &self.constraints[ci];
        Ok((c.value(z)?, c.gradient(z)?, c.hessian(z)?))
    }

    /// Constraint indices carrying a given tag.
    pub fn constraints_by_tag(&self, tag: ConstraintTag) -> Vec<usize> {
        self.constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| c.tag == tag)
            .map(|(i, _)| i)
            .collect()
    }

    /// Write a human-readable dump of the layout and constraint set.
    pub fn write_debug_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "grid: n = {}, h = {:.9}, horizon = {}",
            self.grid.n, self.grid.h, self.grid.horizon
        )?;
        writeln!(
            w,
            "variables: {} ({} node states x {} nodes + {} interval powers)",
            self.num_vars(),
            4,
            self.grid.n + 1,
            self.grid.n
        )?;
        writeln!(
            w,
            "layout: node k -> x@5k v@5k+1 K@5k+2 E@5k+3, interval j -> P@5j+4"
        )?;
        writeln!(
            w,
            "scales: x {:.3e}, v {:.3e}, K {:.3e}, E {:.3e}, P {:.3e}",
            self.scales.x, self.scales.v, self.scales.k, self.scales.e, self.scales.p
        )?;
        writeln!(w, "coupling bandwidth: {}", self.coupling_bandwidth())?;
        for tag in ALL_TAGS {
            let count = self.constraints_by_tag(tag).len();
            if count > 0 {
                writeln!(w, "{tag:?}: {count} rows")?;
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            let kind = if c.is_equality() { "eq" } else { "ineq" };
            writeln!(w, "[{i}] {:?} {kind} support {:?}", c.tag, c.support())?;
        }
        Ok(())
    }
}

fn affine(
    tag: ConstraintTag,
    terms: &[(usize, f64)],
    constant: f64,
    equality: bool,
) -> Constraint {
    let mut t = ArrayVec::new();
    for &term in terms {
        t.push(term);
    }
    Constraint {
        tag,
        expr: Expr::Affine {
            terms: t,
            constant,
            equality,
        },
    }
}

/// Build the discretized relaxed problem with `n` intervals.
pub fn transcribe(scenario: &Scenario, n: usize) -> Result<DiscretizedProblem> {
    let grid = Grid::new(n, scenario.horizon)?;
    let layout = VarLayout { n };
    let h = grid.h;
    let inv_h = 1.0 / h;
    let m = scenario.vehicle.mass;
    let half_m = 0.5 * m;
    let loss = LossCoefficients::of(&scenario.vehicle);

    // Sample every time-varying input once.
    let mut v_min_nodes = Vec::with_capacity(n + 1);
    let mut v_max_nodes = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = grid.t(k);
        v_min_nodes.push(scenario.v_min.sample(t)?);
        v_max_nodes.push(scenario.v_max.sample(t)?);
    }
    let mut a_max_right = Vec::with_capacity(n);
    let mut solar_mid = Vec::with_capacity(n);
    let mut terrain_mid = Vec::with_capacity(n);
    for j in 0..n {
        a_max_right.push(scenario.a_max.sample(grid.t(j + 1))?);
        solar_mid.push(scenario.solar_at(grid.t_mid(j))?);
        terrain_mid.push(scenario.terrain_at(grid.t_mid(j))?);
    }

    let v_scale = v_max_nodes.iter().cloned().fold(1.0f64, f64::max);
    let k_scale = half_m * v_scale * v_scale;
    let e_scale = scenario
        .e_init
        .abs()
        .max(scenario.e_max - scenario.e_min)
        .max(k_scale);
    let x_scale = (scenario.x_end - scenario.x_init).max(1.0);
    let a_scale = a_max_right.iter().cloned().fold(0.0f64, f64::max);
    let p_cap = if scenario.engine.p_max.is_finite() {
        scenario.engine.p_max.abs()
    } else {
        loss.loss(k_scale) + a_scale * (2.0 * m * k_scale).sqrt()
    };
    let p_scale = p_cap.max(scenario.engine.p_min.abs()).max(1e3);
    let scales = Scales {
        x: x_scale,
        v: v_scale,
        k: k_scale,
        e: e_scale,
        p: p_scale,
    };

    let k0 = half_m * scenario.v_init * scenario.v_init;
    let initial_state = [scenario.x_init, scenario.v_init, k0, scenario.e_init];

    let mut cons: Vec<Constraint> = Vec::new();

    // Initial conditions.
    cons.push(affine(
        ConstraintTag::InitialCondition,
        &[(layout.x(0), 1.0)],
        -scenario.x_init,
        true,
    ));
    cons.push(affine(
        ConstraintTag::InitialCondition,
        &[(layout.v(0), 1.0)],
        -scenario.v_init,
        true,
    ));
    cons.push(affine(
        ConstraintTag::InitialCondition,
        &[(layout.kin(0), 1.0)],
        -k0,
        true,
    ));
    cons.push(affine(
        ConstraintTag::InitialCondition,
        &[(layout.e(0), 1.0)],
        -scenario.e_init,
        true,
    ));

    // Position chain: x_{k+1} - x_k - h (v_k + v_{k+1}) / 2 = 0.
    for k in 0..n {
        cons.push(affine(
            ConstraintTag::PositionChain,
            &[
                (layout.x(k + 1), 1.0),
                (layout.x(k), -1.0),
                (layout.v(k), -0.5 * h),
                (layout.v(k + 1), -0.5 * h),
            ],
            0.0,
            true,
        ));
    }

    // Node constraints.
    for k in 0..=n {
        cons.push(affine(
            ConstraintTag::SpeedLower,
            &[(layout.v(k), -1.0)],
            v_min_nodes[k],
            false,
        ));
        cons.push(affine(
            ConstraintTag::SpeedUpperKinetic,
            &[(layout.kin(k), 1.0)],
            -half_m * v_max_nodes[k] * v_max_nodes[k],
            false,
        ));
        cons.push(Constraint {
            tag: ConstraintTag::KineticRelaxation,
            expr: Expr::KineticGap {
                iv: layout.v(k),
                ik: layout.kin(k),
                half_m,
            },
        });
        cons.push(affine(
            ConstraintTag::EnergyBox,
            &[(layout.e(k), -1.0)],
            scenario.e_min,
            false,
        ));
        cons.push(affine(
            ConstraintTag::EnergyBox,
            &[(layout.e(k), 1.0)],
            -scenario.e_max,
            false,
        ));
    }

    let rate_lo = scenario.engine.rate_at_p_min();
    let rate_hi = scenario.engine.rate_at_p_max();

    // Interval constraints.
    for j in 0..n {
        cons.push(Constraint {
            tag: ConstraintTag::AccelKinetic,
            expr: Expr::AccelCone {
                ik0: layout.kin(j),
                ik1: layout.kin(j + 1),
                inv_h,
                coef: a_max_right[j] * m.sqrt(),
            },
        });
        cons.push(Constraint {
            tag: ConstraintTag::KineticDynamics,
            expr: Expr::PowerBalance {
                ik0: Some(layout.kin(j)),
                k0_fixed: 0.0,
                ik1: layout.kin(j + 1),
                ip: layout.p(j),
                inv_h,
                c32: loss.c32,
                clin: loss.clin,
                disturbance: terrain_mid[j],
            },
        });

        match &scenario.engine.curve {
            EngineCurve::Quadratic { alpha, beta, gamma } => {
                cons.push(Constraint {
                    tag: ConstraintTag::EnergyDynamics,
                    expr: Expr::EnergyRateQuad {
                        ie0: layout.e(j),
                        ie1: layout.e(j + 1),
                        ip: layout.p(j),
                        inv_h,
                        alpha: *alpha,
                        beta: *beta,
                        gamma: *gamma,
                        supply: solar_mid[j],
                    },
                });
            }
            EngineCurve::PiecewiseLinear { points } => {
                // The convex rate is the max of its segments, so one affine
                // row per segment is an exact encoding.
                for w in points.windows(2) {
                    let (p0, f0) = w[0];
                    let (p1, f1) = w[1];
                    let slope = (f1 - f0) / (p1 - p0);
                    let intercept = f0 - slope * p0;
                    cons.push(affine(
                        ConstraintTag::EnergyDynamics,
                        &[
                            (layout.e(j + 1), inv_h),
                            (layout.e(j), -inv_h),
                            (layout.p(j), slope),
                        ],
                        intercept - solar_mid[j],
                        false,
                    ));
                }
            }
        }

        // Consumption rate within the engine range: the lower bound reads
        // rate_lo <= supply - D(E); the upper mirror is dropped when the
        // engine domain is unbounded above.
        cons.push(affine(
            ConstraintTag::EngineRateRange,
            &[(layout.e(j + 1), inv_h), (layout.e(j), -inv_h)],
            rate_lo - solar_mid[j],
            false,
        ));
        if rate_hi.is_finite() {
            cons.push(affine(
                ConstraintTag::EngineRateRange,
                &[(layout.e(j + 1), -inv_h), (layout.e(j), inv_h)],
                solar_mid[j] - rate_hi,
                false,
            ));
        }

        cons.push(affine(
            ConstraintTag::DrivePowerBox,
            &[(layout.p(j), -1.0)],
            scenario.engine.p_min,
            false,
        ));
        if scenario.engine.p_max.is_finite() {
            cons.push(affine(
                ConstraintTag::DrivePowerBox,
                &[(layout.p(j), 1.0)],
                -scenario.engine.p_max,
                false,
            ));
        }
    }

    cons.push(affine(
        ConstraintTag::TerminalPosition,
        &[(layout.x(n), -1.0)],
        scenario.x_end,
        false,
    ));

    Ok(DiscretizedProblem {
        grid,
        layout,
        constraints: cons,
        scales,
        initial_state,
        kinetic_floor: 1e-9 * k_scale,
        v_min_nodes,
        v_max_nodes,
        a_max_right,
        solar_mid,
        terrain_mid,
        scenario: scenario.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn small_problem() -> DiscretizedProblem {
        let sc = scenarios::paperlike().with_horizon(2.0);
        transcribe(&sc, 4).unwrap()
    }

    #[test]
    fn variable_count_follows_layout() {
        let p = small_problem();
        assert_eq!(p.grid.h, 0.5);
        assert_eq!(p.num_vars(), 24);

        let sc = scenarios::paperlike();
        let p = transcribe(&sc, 1000).unwrap();
        assert_eq!(p.num_vars(), 5004, "4 states x 1001 nodes + 1000 powers");
    }

    #[test]
    fn rejects_degenerate_grids() {
        let sc = scenarios::paperlike();
        assert!(transcribe(&sc, 1).is_err());
    }

    #[test]
    fn rejects_uncovered_signals() {
        let mut sc = scenarios::paperlike();
        sc.v_max = sc.v_max.with_end(100.0);
        sc.horizon = 280.0;
        // Validation would reject this too; transcription reports coverage.
        assert!(transcribe(&sc, 50).is_err());
    }

    #[test]
    fn every_constraint_is_tagged_and_counted() {
        let p = small_problem();
        let n = p.grid.n;
        let total: usize = ALL_TAGS
            .iter()
            .map(|&t| p.constraints_by_tag(t).len())
            .sum();
        assert_eq!(total, p.constraints.len(), "no untagged constraints");
        assert_eq!(p.constraints_by_tag(ConstraintTag::InitialCondition).len(), 4);
        assert_eq!(p.constraints_by_tag(ConstraintTag::PositionChain).len(), n);
        assert_eq!(p.constraints_by_tag(ConstraintTag::SpeedLower).len(), n + 1);
        assert_eq!(p.constraints_by_tag(ConstraintTag::AccelKinetic).len(), n);
        assert_eq!(p.constraints_by_tag(ConstraintTag::KineticDynamics).len(), n);
        assert_eq!(p.constraints_by_tag(ConstraintTag::EnergyDynamics).len(), n);
        assert_eq!(p.constraints_by_tag(ConstraintTag::TerminalPosition).len(), 1);
        // Unbounded engine: only the lower halves of the range boxes.
        assert_eq!(p.constraints_by_tag(ConstraintTag::EngineRateRange).len(), n);
        assert_eq!(p.constraints_by_tag(ConstraintTag::DrivePowerBox).len(), n);
    }

    #[test]
    fn kinetic_gap_residual_is_zero_on_the_parabola() {
        let p = small_problem();
        let mut z = interior_point(&p);
        let v = 12.0;
        z[p.layout.v(2)] = v;
        z[p.layout.kin(2)] = 0.5 * p.scenario.vehicle.mass * v * v;
        let ci = p.constraints_by_tag(ConstraintTag::KineticRelaxation)[2];
        let r = p.constraints[ci].value(&z).unwrap();
        assert!(r.abs() < 1e-9, "boundary residual, got {r}");
    }

    /// A strictly interior-ish point for derivative checks (not feasible).
    fn interior_point(p: &DiscretizedProblem) -> Vec<f64> {
        let mut z = vec![0.0; p.num_vars()];
        let mut state = 42u64;
        let mut unit = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for k in 0..=p.grid.n {
            z[p.layout.x(k)] = 20.0 * k as f64 + unit();
            z[p.layout.v(k)] = 5.0 + 10.0 * unit();
            z[p.layout.kin(k)] = 0.3 * p.scales.k * (0.5 + unit());
            z[p.layout.e(k)] = 0.5 * p.scales.e * (0.5 + unit());
        }
        for j in 0..p.grid.n {
            z[p.layout.p(j)] = 0.4 * p.scales.p * unit();
        }
        z
    }

    #[test]
    fn gradients_match_central_differences() {
        let p = small_problem();
        let z = interior_point(&p);
        for ci in 0..p.constraints.len() {
            let (_, grad, _) = p.constraint_derivatives(ci, &z).unwrap();
            for &(i, g) in &grad {
                let step = 1e-6 * p.scales.of_var(&p.layout, i).max(1.0);
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += step;
                zm[i] -= step;
                let fd = (p.constraints[ci].value(&zp).unwrap()
                    - p.constraints[ci].value(&zm).unwrap())
                    / (2.0 * step);
                let tol = 1e-6 * g.abs().max(fd.abs()).max(1e-9);
                assert!(
                    (g - fd).abs() <= tol,
                    "constraint {ci} ({:?}) d/dz[{i}]: analytic {g}, fd {fd}",
                    p.constraints[ci].tag
                );
            }
        }
    }

    #[test]
    fn hessians_match_central_differences() {
        let p = small_problem();
        let z = interior_point(&p);
        for ci in 0..p.constraints.len() {
            let (_, _, hess) = p.constraint_derivatives(ci, &z).unwrap();
            for &(i, j, hv) in &hess {
                let si = 2e-5 * p.scales.of_var(&p.layout, i).max(1.0);
                let sj = 2e-5 * p.scales.of_var(&p.layout, j).max(1.0);
                let mut f = |di: f64, dj: f64| {
                    let mut zz = z.clone();
                    zz[i] += di;
                    zz[j] += dj;
                    p.constraints[ci].value(&zz).unwrap()
                };
                let fd = if i == j {
                    (f(si, 0.0) - 2.0 * f(0.0, 0.0) + f(-si, 0.0)) / (si * si)
                } else {
                    (f(si, sj) - f(si, -sj) - f(-si, sj) + f(-si, -sj)) / (4.0 * si * sj)
                };
                let tol = 2e-4 * hv.abs().max(fd.abs()).max(1e-12);
                assert!(
                    (hv - fd).abs() <= tol,
                    "constraint {ci} H[{i},{j}]: analytic {hv}, fd {fd}"
                );
            }
        }
    }

    /// Dense finite-difference Hessian restricted to a constraint's support,
    /// checked for positive semidefiniteness by pivoted LDL^T.
    #[test]
    fn convexity_audit() {
        let p = small_problem();
        let mut state = 7u64;
        let mut unit = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for ci in 0..p.constraints.len() {
            let c = &p.constraints[ci];
            if matches!(c.expr, Expr::Affine { .. }) {
                continue;
            }
            let support = c.support();
            for _ in 0..50 {
                let mut z = vec![0.0; p.num_vars()];
                for k in 0..=p.grid.n {
                    z[p.layout.v(k)] = 3.0 + 25.0 * unit();
                    z[p.layout.kin(k)] = p.scales.k * (0.05 + 0.9 * unit());
                    z[p.layout.e(k)] = p.scales.e * unit();
                }
                for j in 0..p.grid.n {
                    z[p.layout.p(j)] = p.scales.p * unit();
                }
                let d = support.len();
                let mut hess = vec![0.0; d * d];
                let mut s_min = f64::INFINITY;
                for a in 0..d {
                    for b in 0..d {
                        let (i, j) = (support[a], support[b]);
                        let si = 1e-3 * p.scales.of_var(&p.layout, i).max(1.0);
                        let sj = 1e-3 * p.scales.of_var(&p.layout, j).max(1.0);
                        s_min = s_min.min(si).min(sj);
                        let mut f = |di: f64, dj: f64| {
                            let mut zz = z.clone();
                            zz[i] += di;
                            if i == j {
                                zz[i] += dj;
                            } else {
                                zz[j] += dj;
                            }
                            c.value(&zz).unwrap()
                        };
                        hess[a * d + b] = (f(si, sj) - f(si, -sj) - f(-si, sj) + f(-si, -sj))
                            / (4.0 * si * sj);
                    }
                }
                // Differencing a function of size |f| leaves roundoff noise
                // of order eps |f| / s^2 in each entry; the PSD verdict
                // cannot be sharper than that.
                let f0 = c.value(&z).unwrap().abs().max(1.0);
                let noise = 50.0 * f64::EPSILON * f0 / (s_min * s_min);
                assert!(
                    is_psd(&mut hess, d, 1e-6, noise),
                    "constraint {ci} ({:?}) has an indefinite Hessian",
                    c.tag
                );
            }
        }
    }

    fn is_psd(a: &mut [f64], d: usize, rel_tol: f64, abs_tol: f64) -> bool {
        // LDL^T without pivoting; a PSD matrix keeps nonnegative pivots.
        let scale = a.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(1e-30);
        let tol = rel_tol * scale + abs_tol;
        for k in 0..d {
            let pivot = a[k * d + k];
            if pivot < -tol {
                return false;
            }
            if pivot.abs() <= tol {
                continue;
            }
            for i in (k + 1)..d {
                let f = a[i * d + k] / pivot;
                for j in k..d {
                    a[i * d + j] -= f * a[k * d + j];
                }
            }
        }
        true
    }

    #[test]
    fn debug_dump_lists_every_row() {
        let p = small_problem();
        let mut buf = Vec::new();
        p.write_debug_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("coupling bandwidth"));
        for tag in ALL_TAGS {
            if !p.constraints_by_tag(tag).is_empty() {
                assert!(text.contains(&format!("{tag:?}")), "{tag:?} missing");
            }
        }
        assert_eq!(
            text.lines().filter(|l| l.starts_with('[')).count(),
            p.constraints.len()
        );
    }

    #[test]
    fn bandwidth_is_narrow() {
        let p = transcribe(&scenarios::paperlike(), 50).unwrap();
        assert!(
            p.coupling_bandwidth() <= 7,
            "adjacent-node coupling only, got {}",
            p.coupling_bandwidth()
        );
    }
}
