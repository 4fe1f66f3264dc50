//! Integrated sensing-and-communication simulator for vehicle-mounted
//! intelligent surfaces.
//!
//! A road-side unit (RSU) with a receive ULA serves `K` vehicles, each
//! carrying an `L`-element reflecting/refracting surface. Every frame is
//! split into `K + 1` time slots: the downlink signal sent to vehicle `k`
//! also illuminates vehicle `k + 1`, whose surface reflects it back for
//! angle tracking, while tracked angles in turn steer the refraction phase
//! shifts that serve the in-vehicle user. The crate provides
//!
//! - array geometry, steering vectors and Fejér-kernel beamforming gains
//!   ([`channel`]),
//! - vehicle state prediction and scalar Kalman angle tracking
//!   ([`tracking`]),
//! - closed-form expected echo SNR and achievable-rate expressions under
//!   angle uncertainty ([`perf`]),
//! - Monte Carlo and quadrature oracles that validate those expressions
//!   ([`mc`]),
//! - a polyblock monotonic-optimization solver for the max-min-rate time
//!   allocation, with feasibility analysis and a grid-search certifier
//!   ([`opt`]),
//! - the frame-by-frame protocol simulation, benchmark schemes, parameter
//!   sweeps and CSV/JSON emission ([`sim`], [`config`], [`report`]).

pub mod channel;
pub mod config;
pub mod mc;
pub mod opt;
pub mod perf;
pub mod report;
pub mod sim;
pub mod tracking;

use thiserror::Error;

/// Errors produced by the numeric layers of the crate.
///
/// Configuration-file problems have their own type, [`config::ConfigError`],
/// so the CLI can map them to a distinct exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("vehicle state out of domain: {0}")]
    StateOutOfDomain(String),
    #[error("sensing SNR must be positive (got {0:e})")]
    InfeasibleSensing(f64),
    #[error("degenerate filter: process and measurement variances are both zero")]
    DegenerateFilter,
    #[error("degenerate variance: angle variance must be positive")]
    DegenerateVariance,
    #[error("value {0} lies outside the arccos domain of the density")]
    OutOfSupport(f64),
    #[error("degenerate projection: point sum does not exceed the lower-bound sum")]
    DegenerateProjection,
    #[error("infeasible: gamma_th {gamma_th:e} exceeds the feasibility threshold {max_gamma:e}")]
    Infeasible { gamma_th: f64, max_gamma: f64 },
    #[error("polyblock vertex set exceeded the cap of {0} entries")]
    ResourceLimit(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
