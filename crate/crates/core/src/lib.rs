//! Planar robot localization with an extended Kalman filter whose noise
//! covariances are retuned online by small adaptive neuro-fuzzy networks.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! threads or the command line lives in the companion `anfekf` crate.
//!
//! Module map:
//!
//! * [`models`]: discrete vehicle kinematics, range-bearing sensor, Jacobians.
//! * [`ekf`]: predict / measurement-predict / gate / update cycle.
//! * [`anfis`]: two-input, one-output five-layer fuzzy network and its training.
//! * [`adaptation`]: innovation window, degree of mismatch, R and Q adapters.
//! * [`sim`]: seeded ground-truth world and single-run driver.
//! * [`metrics`]: RMSE, NEES and chi-square consistency bands.
#![no_std]
// `!(x >= y)` is used on purpose so that NaN takes the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adaptation;
pub mod anfis;
pub mod ekf;
pub mod metrics;
pub mod models;
pub mod sim;
mod special;

pub use nalgebra;

/// Errors produced by the filter, adapters, simulator and metrics.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate geometry: robot-landmark distance {0:e} m is below the minimum range")]
    DegenerateGeometry(f64),
    #[error("innovation covariance is singular (condition number {0:e})")]
    SingularInnovation(f64),
    #[error("state covariance is not invertible")]
    SingularCovariance,
    #[error("measurement refers to unknown landmark id {0}")]
    UnknownLandmark(u32),
    #[error("duplicate landmark id {0} in map")]
    DuplicateLandmark(u32),
    #[error("all rule firing strengths vanished (sum {0:e})")]
    VanishingFiring(f64),
    #[error("residual window holds {have} of {need} entries")]
    WindowWarmUp { have: usize, need: usize },
    #[error("confidence {0} is outside (0, 1)")]
    InvalidConfidence(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("invalid scenario: {0}")]
    InvalidScenario(&'static str),
    #[error("run logs disagree in length ({0} vs {1} steps)")]
    MismatchedLogs(usize, usize),
}

pub type Result<T> = core::result::Result<T, Error>;
