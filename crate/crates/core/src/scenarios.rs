//! Bundled scenarios used by tests, benchmarks and the documentation.
//!
//! `paperlike` carries the reference vehicle and quadratic engine with a
//! surrogate limit profile: 110 km/h everywhere except a 60 km/h stretch on
//! t in [50, 100] s, plus a 30 km/h minimum on t in [150, 200] s.

use crate::model::{EngineModel, Scenario, Signal, VehicleParams};

pub const KMH: f64 = 1.0 / 3.6;

/// 1500 kg sedan-class constants.
pub fn reference_vehicle() -> VehicleParams {
    VehicleParams {
        mass: 1500.0,
        rho: 1.22,
        area: 2.3,
        c_d: 0.35,
        c_rr: 5.0,
    }
}

/// Quadratic engine `f(p) = 0.005 p^2 + p + 5` in kW terms, domain [0, inf).
pub fn reference_engine() -> EngineModel {
    EngineModel::quadratic(5e-6, 1.0, 5000.0, 0.0, f64::INFINITY)
}

/// 5 km run with zoned speed limits; horizon defaults to 280 s.
pub fn paperlike() -> Scenario {
    Scenario {
        vehicle: reference_vehicle(),
        engine: reference_engine(),
        horizon: 280.0,
        x_init: 0.0,
        x_end: 5000.0,
        v_init: 0.0,
        e_init: 4000e3,
        e_min: 0.0,
        e_max: 4000e3,
        v_min: Signal::steps(vec![(0.0, 0.0), (150.0, 30.0 * KMH), (200.0, 0.0)]),
        v_max: Signal::steps(vec![
            (0.0, 110.0 * KMH),
            (50.0, 60.0 * KMH),
            (100.0, 110.0 * KMH),
        ]),
        a_max: Signal::constant(1.0),
        solar: None,
        terrain: None,
    }
}

/// Constant-speed corridor: the speed is pinned to 20 m/s by a lower limit
/// and a narrow upper limit, so the optimal consumption has a closed form
/// `T * f(drag(20) + rolling(20))`.
pub fn pinned_cruise() -> Scenario {
    Scenario {
        vehicle: reference_vehicle(),
        engine: reference_engine(),
        horizon: 10.0,
        x_init: 0.0,
        x_end: 190.0,
        v_init: 20.0,
        e_init: 4000e3,
        e_min: 0.0,
        e_max: 4000e3,
        v_min: Signal::constant(20.0),
        v_max: Signal::constant(20.02),
        a_max: Signal::constant(1.0),
        solar: None,
        terrain: None,
    }
}

/// Long flat run with generous limits and energy; used for steady-cruise
/// consistency checks.
pub fn long_flat() -> Scenario {
    Scenario {
        vehicle: reference_vehicle(),
        engine: reference_engine(),
        horizon: 2000.0,
        x_init: 0.0,
        x_end: 30_000.0,
        v_init: 0.0,
        e_init: 40_000e3,
        e_min: 0.0,
        e_max: 40_000e3,
        v_min: Signal::constant(0.0),
        v_max: Signal::constant(40.0),
        a_max: Signal::constant(1.5),
        solar: None,
        terrain: None,
    }
}

/// Flat run with a tight energy budget, so the minimum-time control drains
/// the store exactly.
pub fn energy_bound() -> Scenario {
    Scenario {
        vehicle: reference_vehicle(),
        engine: reference_engine(),
        horizon: 320.0,
        x_init: 0.0,
        x_end: 5000.0,
        v_init: 0.0,
        e_init: 3000e3,
        e_min: 0.0,
        e_max: 3000e3,
        v_min: Signal::constant(0.0),
        v_max: Signal::constant(30.0),
        a_max: Signal::constant(1.0),
        solar: None,
        terrain: None,
    }
}

/// Every bundled scenario with a short name, for sweep-style tests.
pub fn all() -> Vec<(&'static str, Scenario)> {
    vec![
        ("paperlike", paperlike()),
        ("pinned_cruise", pinned_cruise()),
        ("long_flat", long_flat()),
        ("energy_bound", energy_bound()),
    ]
}
