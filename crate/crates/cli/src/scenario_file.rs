//! Scenario file schema. Units are embedded in the field names (kJ, kW,
//! km/h) and converted to strict SI when building the core scenario, so a
//! misconfigured file fails loudly instead of silently planning in the
//! wrong system. Unknown keys are rejected.

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use ecoplan::model::{validate, EngineModel, Scenario, Signal, VehicleParams};

const KMH: f64 = 1.0 / 3.6;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    vehicle: VehicleSection,
    engine: EngineSection,
    bounds: BoundsSection,
    #[serde(default)]
    horizon: HorizonSection,
    signals: SignalsSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VehicleSection {
    mass_kg: f64,
    rho: f64,
    area_m2: f64,
    cd: f64,
    crr_N_per_mps: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EngineSection {
    #[serde(rename = "type")]
    kind: String,
    alpha_per_kW: Option<f64>,
    beta: Option<f64>,
    gamma_kW: Option<f64>,
    points: Option<Vec<(f64, f64)>>,
    p_min_kW: f64,
    /// `null` (or omitted) means unbounded drive power.
    p_max_kW: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsSection {
    E_init_kJ: f64,
    E_min_kJ: f64,
    E_max_kJ: f64,
    x_init_m: f64,
    x_end_m: f64,
    v_init_mps: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HorizonSection {
    T_s: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalsSection {
    /// Speeds in km/h.
    v_min: Vec<(f64, f64)>,
    v_max: Vec<(f64, f64)>,
    /// Acceleration in m/s^2.
    a_max: Vec<(f64, f64)>,
    /// Powers in kW.
    solar: Option<Vec<(f64, f64)>>,
    terrain: Option<Vec<(f64, f64)>>,
}

fn steps_scaled(table: &[(f64, f64)], factor: f64) -> Signal {
    Signal::steps(table.iter().map(|&(t, v)| (t, v * factor)).collect())
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<ScenarioFile> {
        serde_json::from_str(text).context("malformed scenario file")
    }

    /// Build and validate the core scenario; `horizon_override` (seconds)
    /// wins over the file's own `horizon.T_s`.
    pub fn into_scenario(self, horizon_override: Option<f64>) -> Result<Scenario> {
        let horizon = match horizon_override.or(self.horizon.T_s) {
            Some(t) => t,
            None => bail!("no horizon: pass --horizon or set horizon.T_s in the file"),
        };

        let engine = match self.engine.kind.as_str() {
            "quadratic" => {
                let alpha = self
                    .engine
                    .alpha_per_kW
                    .context("quadratic engine needs alpha_per_kW")?;
                let beta = self.engine.beta.context("quadratic engine needs beta")?;
                let gamma = self
                    .engine
                    .gamma_kW
                    .context("quadratic engine needs gamma_kW")?;
                if self.engine.points.is_some() {
                    bail!("quadratic engine does not take points");
                }
                EngineModel::quadratic(
                    alpha / 1e3,
                    beta,
                    gamma * 1e3,
                    self.engine.p_min_kW * 1e3,
                    self.engine.p_max_kW.map_or(f64::INFINITY, |p| p * 1e3),
                )
            }
            "pwl" => {
                let points = self
                    .engine
                    .points
                    .context("pwl engine needs a points table")?;
                let scaled: Vec<(f64, f64)> =
                    points.iter().map(|&(p, f)| (p * 1e3, f * 1e3)).collect();
                let model = EngineModel::piecewise_linear(scaled);
                let lo = self.engine.p_min_kW * 1e3;
                let hi = self.engine.p_max_kW.map_or(f64::INFINITY, |p| p * 1e3);
                if (model.p_min - lo).abs() > 1e-6 * lo.abs().max(1.0)
                    || (model.p_max - hi).abs() > 1e-6 * hi.abs().max(1.0)
                {
                    bail!(
                        "pwl engine points span [{}, {}] kW but p_min/p_max say [{}, {}] kW",
                        model.p_min / 1e3,
                        model.p_max / 1e3,
                        lo / 1e3,
                        hi / 1e3
                    );
                }
                model
            }
            other => bail!("unknown engine type {other:?} (expected \"quadratic\" or \"pwl\")"),
        };

        let scenario = Scenario {
            vehicle: VehicleParams {
                mass: self.vehicle.mass_kg,
                rho: self.vehicle.rho,
                area: self.vehicle.area_m2,
                c_d: self.vehicle.cd,
                c_rr: self.vehicle.crr_N_per_mps,
            },
            engine,
            horizon,
            x_init: self.bounds.x_init_m,
            x_end: self.bounds.x_end_m,
            v_init: self.bounds.v_init_mps,
            e_init: self.bounds.E_init_kJ * 1e3,
            e_min: self.bounds.E_min_kJ * 1e3,
            e_max: self.bounds.E_max_kJ * 1e3,
            v_min: steps_scaled(&self.signals.v_min, KMH),
            v_max: steps_scaled(&self.signals.v_max, KMH),
            a_max: steps_scaled(&self.signals.a_max, 1.0),
            solar: self.signals.solar.as_deref().map(|t| steps_scaled(t, 1e3)),
            terrain: self
                .signals
                .terrain
                .as_deref()
                .map(|t| steps_scaled(t, 1e3)),
        };
        validate(scenario).map_err(anyhow::Error::from)
    }
}

pub fn load(path: &std::path::Path, horizon_override: Option<f64>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read scenario file {}", path.display()))?;
    ScenarioFile::parse(&text)?.into_scenario(horizon_override)
}
