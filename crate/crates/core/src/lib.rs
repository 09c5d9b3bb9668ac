//! Reconstruction of periodic piecewise-polynomial signals from low-frequency
//! Fourier samples by total-variation regularization of their `M`-th
//! derivative.
//!
//! Two solvers are provided: an exact uniform B-spline discretization solved
//! by ADMM ([`admm`]) and a gridless Frank-Wolfe method over zero-mean
//! measures ([`frank_wolfe`]).

pub mod error;
pub mod admm;
pub mod bspline;
pub mod fourier;
pub mod experiments;
pub mod frank_wolfe;
mod refit;

pub use error::{Error, Result};
