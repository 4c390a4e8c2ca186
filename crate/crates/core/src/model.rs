//! Physical model: vehicle constants, engine characteristic, time-varying
//! limits and scenario validation.
//!
//! All quantities are strict SI internally (m, s, kg, J, W). File formats may
//! use km/h, kJ and kW; conversion happens at ingestion, never here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longitudinal vehicle constants.
///
/// Drag power is `1/2 rho A c_d v^3`; rolling resistance power is `c_rr v^2`
/// (a resistive force linear in speed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Mass (kg).
    pub mass: f64,
    /// Air density (kg/m^3).
    pub rho: f64,
    /// Frontal area (m^2).
    pub area: f64,
    /// Drag coefficient (dimensionless).
    pub c_d: f64,
    /// Rolling-resistance constant (N per m/s).
    pub c_rr: f64,
}

impl VehicleParams {
    fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("rho", self.rho),
            ("area", self.area),
            ("c_d", self.c_d),
            ("c_rr", self.c_rr),
        ];
        for (name, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Scenario(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Power lost to aerodynamic drag at speed `v` (W).
pub fn drag_power(params: &VehicleParams, v: f64) -> f64 {
    0.5 * params.rho * params.area * params.c_d * v * v * v
}

/// Power lost to rolling resistance at speed `v` (W).
pub fn rolling_power(params: &VehicleParams, v: f64) -> f64 {
    params.c_rr * v * v
}

/// Coefficients of the total loss power expressed in kinetic energy:
/// `loss(K) = c32 * K^(3/2) + clin * K`.
///
/// Substituting `v = sqrt(2K/m)` into the speed forms gives
/// `c32 = 1/2 rho A c_d (2/m)^(3/2)` and `clin = 2 c_rr / m`, so the two
/// parameterizations agree exactly wherever `K = 1/2 m v^2`.
#[derive(Debug, Clone, Copy)]
pub struct LossCoefficients {
    pub c32: f64,
    pub clin: f64,
}

impl LossCoefficients {
    pub fn of(params: &VehicleParams) -> Self {
        let two_over_m = 2.0 / params.mass;
        LossCoefficients {
            c32: 0.5 * params.rho * params.area * params.c_d * two_over_m.powf(1.5),
            clin: 2.0 * params.c_rr / params.mass,
        }
    }

    /// Total drag + rolling loss as a function of kinetic energy (W).
    pub fn loss(&self, k: f64) -> f64 {
        self.c32 * k.powf(1.5) + self.clin * k
    }

    /// First derivative of [`LossCoefficients::loss`] with respect to `K`.
    pub fn loss_d1(&self, k: f64) -> f64 {
        1.5 * self.c32 * k.sqrt() + self.clin
    }

    /// Second derivative; unbounded as `K -> 0`.
    pub fn loss_d2(&self, k: f64) -> f64 {
        0.75 * self.c32 / k.sqrt()
    }
}

/// Total drag + rolling loss expressed through kinetic energy `K` (W).
pub fn loss_power_from_kinetic(params: &VehicleParams, k: f64) -> f64 {
    LossCoefficients::of(params).loss(k)
}

/// The engine characteristic: an increasing convex map from drive power to
/// fuel/charge consumption rate (W in, W out).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EngineCurve {
    /// `f(p) = alpha p^2 + beta p + gamma` with `alpha` in 1/W.
    Quadratic { alpha: f64, beta: f64, gamma: f64 },
    /// Convex piecewise-linear curve through `(p_i, f_i)` points (W, W).
    PiecewiseLinear { points: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineModel {
    pub curve: EngineCurve,
    /// Minimum drive power (W).
    pub p_min: f64,
    /// Maximum drive power (W); `f64::INFINITY` allowed for quadratic curves.
    pub p_max: f64,
}

impl EngineModel {
    pub fn quadratic(alpha: f64, beta: f64, gamma: f64, p_min: f64, p_max: f64) -> Self {
        EngineModel {
            curve: EngineCurve::Quadratic { alpha, beta, gamma },
            p_min,
            p_max,
        }
    }

    /// Piecewise-linear engine; domain endpoints are taken from the points.
    pub fn piecewise_linear(points: Vec<(f64, f64)>) -> Self {
        let p_min = points.first().map(|p| p.0).unwrap_or(0.0);
        let p_max = points.last().map(|p| p.0).unwrap_or(0.0);
        EngineModel {
            curve: EngineCurve::PiecewiseLinear { points },
            p_min,
            p_max,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.p_min <= self.p_max) {
            return Err(Error::Scenario(format!(
                "engine p_min ({}) must not exceed p_max ({})",
                self.p_min, self.p_max
            )));
        }
        if !self.p_min.is_finite() {
            return Err(Error::Scenario("engine p_min must be finite".into()));
        }
        match &self.curve {
            EngineCurve::Quadratic { alpha, beta, gamma } => {
                for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
                    if !v.is_finite() {
                        return Err(Error::Scenario(format!("engine {name} must be finite")));
                    }
                }
                if *alpha < 0.0 {
                    return Err(Error::Scenario(format!(
                        "engine alpha must be nonnegative for convexity, got {alpha}"
                    )));
                }
                // Increasing on the whole domain means positive slope at p_min.
                if !(2.0 * alpha * self.p_min + beta > 0.0) {
                    return Err(Error::Scenario(format!(
                        "engine must be strictly increasing: 2*alpha*p_min + beta = {} <= 0",
                        2.0 * alpha * self.p_min + beta
                    )));
                }
                if self.p_max.is_infinite() && *alpha == 0.0 && *beta <= 0.0 {
                    return Err(Error::Scenario(
                        "unbounded engine needs increasing rate".into(),
                    ));
                }
            }
            EngineCurve::PiecewiseLinear { points } => {
                if points.len() < 2 {
                    return Err(Error::Scenario(
                        "piecewise-linear engine needs at least two points".into(),
                    ));
                }
                if !self.p_max.is_finite() {
                    return Err(Error::Scenario(
                        "piecewise-linear engine has a finite p_max".into(),
                    ));
                }
                if points.first().unwrap().0 != self.p_min || points.last().unwrap().0 != self.p_max
                {
                    return Err(Error::Scenario(
                        "piecewise-linear engine points must span [p_min, p_max]".into(),
                    ));
                }
                let mut prev_slope = f64::NEG_INFINITY;
                for w in points.windows(2) {
                    let (p0, f0) = w[0];
                    let (p1, f1) = w[1];
                    if !(p1 > p0) {
                        return Err(Error::Scenario(format!(
                            "engine breakpoint powers must strictly increase ({p0} then {p1})"
                        )));
                    }
                    let slope = (f1 - f0) / (p1 - p0);
                    if !(slope > 0.0) {
                        return Err(Error::Scenario(format!(
                            "engine must be strictly increasing: slope {slope} on [{p0}, {p1}]"
                        )));
                    }
                    if slope + 1e-12 * slope.abs().max(1.0) < prev_slope {
                        return Err(Error::Scenario(format!(
                            "engine must be convex: slope drops from {prev_slope} to {slope}"
                        )));
                    }
                    prev_slope = slope;
                }
            }
        }
        Ok(())
    }

    /// Consumption rate `f(p)` for a drive power in `[p_min, p_max]` (W).
    pub fn rate(&self, p: f64) -> Result<f64> {
        let tol = 1e-9 * (1.0 + self.p_min.abs().max(if self.p_max.is_finite() {
            self.p_max.abs()
        } else {
            0.0
        }));
        if p < self.p_min - tol || p > self.p_max + tol {
            return Err(Error::EngineDomain {
                what: "drive power",
                value: p,
            });
        }
        let p = p.clamp(self.p_min, self.p_max);
        Ok(self.rate_unchecked(p))
    }

    pub(crate) fn rate_unchecked(&self, p: f64) -> f64 {
        match &self.curve {
            EngineCurve::Quadratic { alpha, beta, gamma } => alpha * p * p + beta * p + gamma,
            EngineCurve::PiecewiseLinear { points } => {
                // Left of the first point never happens for validated input.
                let mut i = 0;
                while i + 2 < points.len() && points[i + 1].0 < p {
                    i += 1;
                }
                let (p0, f0) = points[i];
                let (p1, f1) = points[i + 1];
                f0 + (f1 - f0) / (p1 - p0) * (p - p0)
            }
        }
    }

    /// Consumption rate at the bottom of the engine domain.
    pub fn rate_at_p_min(&self) -> f64 {
        self.rate_unchecked(self.p_min)
    }

    /// Consumption rate at the top of the engine domain; infinite when the
    /// domain is unbounded above.
    pub fn rate_at_p_max(&self) -> f64 {
        if self.p_max.is_finite() {
            self.rate_unchecked(self.p_max)
        } else {
            f64::INFINITY
        }
    }

    /// The unique `p` with `f(p) = q`. Exists because the curve is strictly
    /// increasing on its domain.
    pub fn inverse(&self, q: f64) -> Result<f64> {
        let lo = self.rate_at_p_min();
        let hi = self.rate_at_p_max();
        let scale = lo.abs().max(1.0);
        let tol = 1e-9 * scale + 1e-9 * q.abs();
        if q < lo - tol || q > hi + tol {
            return Err(Error::EngineDomain {
                what: "consumption rate",
                value: q,
            });
        }
        let q = q.clamp(lo, if hi.is_finite() { hi } else { f64::INFINITY });
        match &self.curve {
            EngineCurve::Quadratic { alpha, beta, gamma } => {
                if *alpha == 0.0 {
                    return Ok(((q - gamma) / beta).clamp(self.p_min, self.p_max));
                }
                // Increasing root of alpha p^2 + beta p + (gamma - q) = 0.
                let disc = beta * beta - 4.0 * alpha * (gamma - q);
                let root = (-beta + disc.max(0.0).sqrt()) / (2.0 * alpha);
                Ok(root.clamp(self.p_min, self.p_max))
            }
            EngineCurve::PiecewiseLinear { points } => {
                let mut i = 0;
                while i + 2 < points.len() && points[i + 1].1 < q {
                    i += 1;
                }
                let (p0, f0) = points[i];
                let (p1, f1) = points[i + 1];
                let p = p0 + (p1 - p0) / (f1 - f0) * (q - f0);
                Ok(p.clamp(self.p_min, self.p_max))
            }
        }
    }
}

/// Consumption rate `f(p)` of an engine at drive power `p` (W).
pub fn engine_rate(engine: &EngineModel, p: f64) -> Result<f64> {
    engine.rate(p)
}

/// Inverse of the engine characteristic: the drive power that consumes at
/// rate `q`.
pub fn engine_inverse(engine: &EngineModel, q: f64) -> Result<f64> {
    engine.inverse(q)
}

/// Interpolation rule for a time-varying signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    /// The value of the last breakpoint at or before `t` (step function).
    PiecewiseConstantLeft,
    /// Linear between breakpoints, held constant after the last one.
    PiecewiseLinear,
}

/// A scalar signal of time given by breakpoints.
///
/// Values after the last breakpoint hold the last value, which lets the same
/// limit tables serve scenarios with different horizons. An optional `end`
/// bounds the queryable range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub breakpoints: Vec<(f64, f64)>,
    pub interpolation: Interpolation,
    /// Hard end of coverage; queries past it are domain errors.
    pub end: Option<f64>,
}

impl Signal {
    pub fn steps(breakpoints: Vec<(f64, f64)>) -> Self {
        Signal {
            breakpoints,
            interpolation: Interpolation::PiecewiseConstantLeft,
            end: None,
        }
    }

    pub fn linear(breakpoints: Vec<(f64, f64)>) -> Self {
        Signal {
            breakpoints,
            interpolation: Interpolation::PiecewiseLinear,
            end: None,
        }
    }

    pub fn constant(value: f64) -> Self {
        Signal::steps(vec![(0.0, value)])
    }

    pub fn with_end(mut self, end: f64) -> Self {
        self.end = Some(end);
        self
    }

    fn validate(&self, name: &str, horizon: f64) -> Result<()> {
        if self.breakpoints.is_empty() {
            return Err(Error::Scenario(format!("signal {name} has no breakpoints")));
        }
        let first = self.breakpoints[0].0;
        if first > 0.0 {
            return Err(Error::Scenario(format!(
                "signal {name} must cover [0, T]: first breakpoint at t = {first}"
            )));
        }
        let mut prev = f64::NEG_INFINITY;
        for &(t, v) in &self.breakpoints {
            if !(t > prev) {
                return Err(Error::Scenario(format!(
                    "signal {name} breakpoint times must strictly increase (t = {t})"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Scenario(format!(
                    "signal {name} has non-finite value at t = {t}"
                )));
            }
            prev = t;
        }
        if let Some(end) = self.end {
            if end < horizon {
                return Err(Error::Scenario(format!(
                    "signal {name} covers only [0, {end}] but the horizon is {horizon}"
                )));
            }
        }
        Ok(())
    }

    /// Interpolated value at time `t`.
    pub fn sample(&self, t: f64) -> Result<f64> {
        let start = self.breakpoints[0].0;
        let end = self.end.unwrap_or(f64::INFINITY);
        let tol = 1e-9 * (1.0 + t.abs());
        if t < start - tol || t > end + tol {
            return Err(Error::SignalDomain {
                t,
                end: if end.is_finite() {
                    end
                } else {
                    self.breakpoints.last().unwrap().0
                },
            });
        }
        // Index of the last breakpoint with time <= t.
        let i = match self
            .breakpoints
            .partition_point(|&(bt, _)| bt <= t)
            .checked_sub(1)
        {
            Some(i) => i,
            None => 0,
        };
        let (t0, v0) = self.breakpoints[i];
        match self.interpolation {
            Interpolation::PiecewiseConstantLeft => Ok(v0),
            Interpolation::PiecewiseLinear => {
                if i + 1 >= self.breakpoints.len() {
                    return Ok(v0);
                }
                let (t1, v1) = self.breakpoints[i + 1];
                Ok(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
            }
        }
    }

    /// Largest breakpoint value; for step signals this is the exact supremum.
    pub fn max_value(&self) -> f64 {
        self.breakpoints
            .iter()
            .map(|&(_, v)| v)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.breakpoints
            .iter()
            .map(|&(_, v)| v)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Sample a signal at time `t`.
pub fn sample(signal: &Signal, t: f64) -> Result<f64> {
    signal.sample(t)
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub vehicle: VehicleParams,
    pub engine: EngineModel,
    /// Horizon (s).
    pub horizon: f64,
    /// Initial and required terminal positions (m).
    pub x_init: f64,
    pub x_end: f64,
    /// Initial speed (m/s).
    pub v_init: f64,
    /// Internal energy bounds and initial value (J).
    pub e_init: f64,
    pub e_min: f64,
    pub e_max: f64,
    /// Time-varying limits: lower/upper speed (m/s), acceleration (m/s^2).
    pub v_min: Signal,
    pub v_max: Signal,
    pub a_max: Signal,
    /// Optional externally supplied power into the internal energy store (W).
    pub solar: Option<Signal>,
    /// Optional terrain power disturbance on the kinetic energy balance (W);
    /// negative values model climbing.
    pub terrain: Option<Signal>,
}

impl Scenario {
    /// Clone with a different horizon; limit signals extend by holding their
    /// last value.
    pub fn with_horizon(&self, horizon: f64) -> Scenario {
        let mut s = self.clone();
        s.horizon = horizon;
        s
    }

    pub fn solar_at(&self, t: f64) -> Result<f64> {
        match &self.solar {
            Some(sig) => sig.sample(t),
            None => Ok(0.0),
        }
    }

    pub fn terrain_at(&self, t: f64) -> Result<f64> {
        match &self.terrain {
            Some(sig) => sig.sample(t),
            None => Ok(0.0),
        }
    }

    /// Merged breakpoint times of two signals, clipped to `[0, horizon]`.
    fn merged_times(&self, a: &Signal, b: &Signal) -> Vec<f64> {
        let mut ts: Vec<f64> = a
            .breakpoints
            .iter()
            .chain(b.breakpoints.iter())
            .map(|&(t, _)| t)
            .filter(|&t| (0.0..=self.horizon).contains(&t))
            .collect();
        ts.push(0.0);
        ts.push(self.horizon);
        ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ts.dedup();
        ts
    }
}

/// Check every model invariant, reporting the first violation with the field
/// name and offending value.
pub fn validate(scenario: Scenario) -> Result<Scenario> {
    scenario.vehicle.validate()?;
    scenario.engine.validate()?;
    if !(scenario.horizon > 0.0) || !scenario.horizon.is_finite() {
        return Err(Error::Scenario(format!(
            "horizon must be positive, got {}",
            scenario.horizon
        )));
    }
    if !(scenario.x_end > scenario.x_init) {
        return Err(Error::Scenario(format!(
            "x_end ({}) must exceed x_init ({})",
            scenario.x_end, scenario.x_init
        )));
    }
    if !(scenario.e_min <= scenario.e_init && scenario.e_init <= scenario.e_max) {
        return Err(Error::Scenario(format!(
            "need e_min <= e_init <= e_max, got {} / {} / {}",
            scenario.e_min, scenario.e_init, scenario.e_max
        )));
    }
    if !scenario.e_max.is_finite() || !scenario.e_min.is_finite() {
        return Err(Error::Scenario("energy bounds must be finite".into()));
    }
    scenario.v_min.validate("v_min", scenario.horizon)?;
    scenario.v_max.validate("v_max", scenario.horizon)?;
    scenario.a_max.validate("a_max", scenario.horizon)?;
    if let Some(s) = &scenario.solar {
        s.validate("solar", scenario.horizon)?;
    }
    if let Some(d) = &scenario.terrain {
        d.validate("terrain", scenario.horizon)?;
    }

    // The vehicle cannot move backward, and the speed corridor must be
    // ordered. Checking at the merged breakpoints is exhaustive for step
    // signals and for linear ones (segments with ordered endpoints cannot
    // cross inside).
    for &t in &scenario.merged_times(&scenario.v_min, &scenario.v_max) {
        let lo = scenario.v_min.sample(t)?;
        let hi = scenario.v_max.sample(t)?;
        if lo < 0.0 {
            return Err(Error::Scenario(format!(
                "v_min must be nonnegative, got {lo} at t = {t}"
            )));
        }
        if lo > hi {
            return Err(Error::Scenario(format!(
                "v_min ({lo}) exceeds v_max ({hi}) at t = {t}"
            )));
        }
    }
    let lo0 = scenario.v_min.sample(0.0)?;
    let hi0 = scenario.v_max.sample(0.0)?;
    if !(lo0 <= scenario.v_init && scenario.v_init <= hi0) {
        return Err(Error::Scenario(format!(
            "v_init ({}) outside the initial speed corridor [{lo0}, {hi0}]",
            scenario.v_init
        )));
    }
    Ok(scenario)
}
