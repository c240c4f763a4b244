//! Numerical toolkit for nonautonomous linear ODEs with exponential
//! dichotomies: spectrum estimation, hypothesis checks, and construction of
//! the discrete and continuous linearizing conjugacies, with empirical
//! verification of their regularity.
//!
//! Pipeline, in the order the CLI drives it:
//!
//! 1. [`evolution`] — evolution family `T(t,s)`, nonlinear flow, variational
//!    flow, and the discretization `A_n`, `f_n`.
//! 2. [`spectrum`] — QR growth rates along the cocycle, the mu-scan dichotomy
//!    spectrum, invariant projections and adapted norms.
//! 3. [`conditions`] — spectral bound check, admissible Holder exponent,
//!    nonlinearity audit and the smallness budget.
//! 4. [`conjugacy`] / [`foliation`] — discrete conjugacies `h_n`, the
//!    stable-foliation fixed point, and the continuous maps `H`, `G`,
//!    `H_tilde`.
//! 5. [`verify`] — quantitative checks of the conjugacy properties.

pub mod catalog;
pub mod conditions;
pub mod conjugacy;
pub mod error;
pub mod evolution;
pub mod fit;
pub mod foliation;
pub mod spectrum;
pub mod verify;

pub use error::{Error, Result};
pub use evolution::{
    Discretization, EvolutionFamily, FlowBounds, IndexWindow, IntegratorSettings, LinearSystem,
    NonlinearTerm,
};
