//! Simulation and analytics for the fractional-Brownian-motion Edwards model.
//!
//! * [`fbm`]: exact fBm path sampling (Cholesky and circulant embedding).
//! * [`energy`]: mollified self-intersection local time.
//! * [`gibbs`]: importance-sampling and Metropolis estimators of `Z` and `<R^2>`.
//! * [`flory`]: closed-form Flory exponents, regimes and recursion identities.
//! * [`lab`]: sweeps, exponent fits and scaling experiments.

pub mod energy;
pub mod error;
pub mod fbm;
pub mod flory;
pub mod gibbs;
pub mod lab;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use rng::RngStream;
