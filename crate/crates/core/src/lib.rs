//! Weighted distributed differentially private empirical risk minimization.
//!
//! The crate calibrates Gaussian gradient-perturbation noise with a moments
//! accountant ([`privacy`]), evaluates losses with certified constants
//! ([`loss`]), prepares and partitions data across simulated clients
//! ([`data`]), runs the clients and a trusted server ([`federation`]), and
//! reproduces privacy/utility sweeps ([`experiment`]).

// `!(x > 0.0)` style checks are there to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod loss;
pub mod privacy;

pub use error::{Error, Result};

/// A model parameter vector `θ ∈ ℝ^p`.
pub type ModelVector = ndarray::Array1<f64>;
