//! Outage probabilities for non-ergodic MIMO Gaussian channels.
//!
//! The library evaluates the outage probability of a flat Rayleigh-fading
//! channel under a diagonal input covariance, its first and second
//! derivatives along the power-transfer direction, and Monte Carlo
//! estimators that cross-check the quadrature path. On top of those it
//! implements two derivative-based tests for whether the uniform power
//! patterns can fail to be optimal, and a sweep engine that maps where
//! they do.
//!
//! Modules:
//! - [`specfun`]: gamma-family special functions and adaptive quadrature
//! - [`timo`]: two-transmit-antenna outage probability and its derivatives
//! - [`mcsim`]: seeded Monte Carlo estimators (direct and reduced)
//! - [`mimo_general`]: general antenna counts, eigenvalue tools, pattern tests
//! - [`cli`]: command-line front end (CSV and SVG emission)

pub mod cli;
mod herm;
pub mod mcsim;
pub mod mimo_general;
pub mod specfun;
pub mod timo;

pub use mcsim::{EstimateMethod, OutageEstimate, RandomStream};
pub use specfun::{Integral, QuadratureSpec, SpecFunError};
pub use timo::{ChannelSpec, PowerSplit};
