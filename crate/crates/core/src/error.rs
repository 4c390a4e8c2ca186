use thiserror::Error;

/// Errors surfaced by scenario validation, problem construction and the
/// numerical pipeline.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A scenario field violates one of the model invariants.
    #[error("invalid scenario: {0}")]
    Scenario(String),

    /// A signal was queried outside its covered time range.
    #[error("signal queried at t = {t} s outside covered range [0, {end} s]")]
    SignalDomain { t: f64, end: f64 },

    /// An engine curve was evaluated or inverted outside its domain/range.
    #[error("engine {what} out of range: {value}")]
    EngineDomain { what: &'static str, value: f64 },

    /// Problem construction failed (bad grid, signal coverage, ...).
    #[error("transcription error: {0}")]
    Transcription(String),

    /// A point lies outside the differentiable domain of the constraint set
    /// (kinetic energy at or below zero under a square-root term).
    #[error("point outside differentiable domain: {0}")]
    OutsideDomain(String),

    /// The solver could not make progress (factorization breakdown,
    /// line-search stall, iteration cap on an auxiliary solve).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The constraint set admits no solution (certified by phase-I).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A planner query had no answer (no feasible horizon, empty window).
    #[error("planning error: {0}")]
    Planning(String),

    /// Malformed external input (controls table, trajectory data).
    #[error("invalid input: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;
