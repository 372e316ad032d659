//! Pseudo-spectral simulation and deviation analysis for the two-dimensional
//! stochastic Navier-Stokes system with horizontal-only viscosity on the torus.
//!
//! The modules follow the data flow: [`spectral`] fields and norms, the
//! convection operator in [`forms`], diffusion coefficients and Wiener paths in
//! [`noise`], time integrators in [`dynamics`], the moderate-deviation rate
//! function in [`ratefn`], and the Monte Carlo harness in [`experiments`].

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod forms;
pub mod noise;
pub mod ratefn;
pub mod spectral;
mod util;

pub use error::{Error, Result};
