//! Energy-optimal and time-optimal speed profiles for a vehicle moving along
//! a fixed path.
//!
//! The original optimal-control problem couples longitudinal dynamics with
//! drivetrain energy bookkeeping and is nonconvex because of the relation
//! `K = (1/2) m v^2` between speed and kinetic energy. Relaxing that equality
//! to `K >= (1/2) m v^2` yields a convex problem whose optimum can always be
//! mapped back to a feasible trajectory of the original problem with the same
//! objective value. This crate provides the whole pipeline:
//!
//! * [`model`] — vehicle constants, engine characteristic, time-varying limits
//! * [`transcription`] — the finite-dimensional convex program on a time grid
//! * [`solver`] — a log-barrier interior-point method with banded KKT solves
//! * [`recovery`] — the relaxed-to-physical trajectory map and its certificate
//! * [`validation`] — independent physics oracles (forward simulation,
//!   random feasible controls, steady-state cruise search)
//! * [`planner`] — fixed-horizon, minimum-time, minimum-energy and Pareto
//!   drivers built on solve + recover

pub mod error;
pub mod model;
pub mod planner;
pub mod recovery;
pub mod scenarios;
pub mod solver;
pub mod transcription;
pub mod validation;

pub use error::Error;
pub use model::{EngineCurve, EngineModel, Interpolation, Scenario, Signal, VehicleParams};
pub use recovery::{FeasibilityReport, Tolerances, Trajectory, TrajectoryKind};
pub use solver::{SolveReport, SolveStatus, SolverSettings};
pub use transcription::{DiscretizedProblem, Grid};
