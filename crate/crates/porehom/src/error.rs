//! Error type shared across the crate.

use std::path::PathBuf;

/// Errors produced by grid construction, solvers, and the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid geometry parameter (out of range, too coarse to resolve, ...).
    #[error("invalid geometry: {0}")]
    Geometry(String),

    /// A mask file could not be read or has invalid contents.
    #[error("mask file {path}: {reason}")]
    MaskFile { path: PathBuf, reason: String },

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The assembled linear system could not be factorized
    /// (disconnected pore space, empty geometry, ...).
    #[error("singular linear system: {0}")]
    SingularSystem(String),

    /// Newton iteration failed to reach the requested tolerance.
    #[error("Newton iteration did not converge: {0}")]
    NewtonDiverged(String),

    /// Time integration did not reach a steady state within the step budget.
    /// Carries the history of steady-state residuals for diagnosis.
    #[error("no steady state within {steps} steps (last residual {last:.3e})")]
    NotSteady {
        steps: usize,
        last: f64,
        history: Vec<f64>,
    },

    /// An advecting velocity field violates the divergence tolerance.
    #[error("velocity field is not discretely divergence-free: max |div| = {max_div:.3e} > {tol:.3e}")]
    DivergentVelocity { max_div: f64, tol: f64 },

    /// Relaxation reached a steady state whose saturation misses the target.
    #[error("steady saturation {reached:.6} misses target {target:.6} by more than {tol:.3e}")]
    SaturationMismatch { reached: f64, target: f64, tol: f64 },

    /// A solver produced a non-finite value.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// Requested operation needs an isotropic absolute permeability.
    #[error("absolute permeability is anisotropic: {0}")]
    Anisotropic(String),

    /// I/O failure while reading or writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
