//! Error types shared across the toolkit.

use thiserror::Error;

/// Errors produced by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Integration could not be carried out (step underflow, step-count blowup).
    #[error("numerical integration failure on [{from}, {to}]: {detail}")]
    NumericalFailure { from: f64, to: f64, detail: String },

    /// An orbit left the configured escape radius. Reported, not fatal at the
    /// flow level; callers decide whether to skip the sample.
    #[error("orbit escaped radius {radius:.3e} at t = {t} (|x| = {norm:.3e})")]
    Escape { t: f64, radius: f64, norm: f64 },

    /// Triangular factor collapsed along the cocycle (diagonal below 1e-12).
    #[error("degenerate cocycle: |r_{{{direction},{direction}}}| = {value:.3e} at step {step}")]
    DegenerateCocycle { step: i64, direction: usize, value: f64 },

    /// Stable/unstable subspaces are too close to each other.
    #[error("ill-conditioned stable/unstable splitting at n = {n}: sigma_min = {sigma_min:.3e}")]
    SplittingIllConditioned { n: i64, sigma_min: f64 },

    /// Some spectrum interval contains 1; downstream operations refuse.
    #[error("spectrum is not hyperbolic: interval [{lo:.6}, {hi:.6}] (log scale) contains 0")]
    NonHyperbolic { lo: f64, hi: f64 },

    /// The mu grid cannot separate nearby spectral boundaries.
    #[error("mu grid too coarse near log mu = {at:.6}; retry with step <= {suggested:.3e}")]
    GridResolution { at: f64, suggested: f64 },

    /// One-sided spectrum where a two-sided splitting is required.
    #[error("spectrum is one-sided ({side}); a genuine hyperbolic splitting is required")]
    OneSidedSpectrum { side: &'static str },

    /// Backward orbit solve diverged (Lipschitz ratio >= 1).
    #[error("backward orbit solve diverged at step {n} (contraction ratio {ratio:.3})")]
    OrbitDivergence { n: i64, ratio: f64 },

    /// Truncation tail bound exceeds the conjugacy tolerance.
    #[error("truncation tail bound {bound:.3e} above tol {tol:.3e}; increase n_tail (used {used})")]
    TailAboveTolerance { bound: f64, tol: f64, used: usize },

    /// Newton polish for the inverse conjugacy failed to converge.
    #[error("inverse solve failed at n = {n}: residual {residual:.3e} after {iters} iterations")]
    InverseDivergence { n: i64, residual: f64, iters: usize },

    /// Requested point lies outside the valid neighborhood.
    #[error("point outside domain at {at}: |x| = {norm:.3e} > radius {radius:.3e}")]
    OutsideDomain { at: f64, norm: f64, radius: f64 },

    /// Measured contraction factor >= 1 in the fixed-point iteration.
    #[error("fixed-point iteration is not a contraction (measured factor {factor:.3})")]
    NotContracting { factor: f64 },

    /// Operation requires an autonomous system.
    #[error("operation requires an autonomous system")]
    NotAutonomous,

    /// Invalid argument or configuration detected at the library level.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Regression input was degenerate (not enough spread or samples).
    #[error("degenerate regression input: {0}")]
    DegenerateFit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
