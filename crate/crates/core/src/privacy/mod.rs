//! Gaussian-mechanism privacy accounting for full-batch gradient perturbation.
//!
//! Each training round releases the full-batch gradient plus `N(0, σ²I_p)`.
//! Swapping one of `n` records moves that gradient by at most `2G/n`, so the
//! log moment of one round at order `λ` is `λ(λ+1)(2G/n)²/(2σ²)`. Rounds
//! compose additively and the tail bound `δ = min_λ exp(α(λ) − λε)` turns the
//! composed moment into an `(ε, δ)` guarantee.

mod calibration;
mod noise;

pub use calibration::{
    calibrate_sigma, default_lambda_grid, CalibrationOptions, CalibrationRecord,
};
pub use noise::{derive_seed, sample_gaussian_noise, NoiseStream};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `(ε, δ)` differential-privacy budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::domain(
                "epsilon",
                format!("must be positive, got {epsilon}"),
            ));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(
                "delta",
                format!("must lie in (0, 1), got {delta}"),
            ));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Parameters of the composed Gaussian mechanism run by the trainer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams {
    /// Per-example gradient norm bound `G`.
    pub lipschitz_g: f64,
    /// Number of composed rounds `T`.
    pub total_rounds: u64,
    /// Size `n` of the dataset the released gradient averages over.
    pub total_samples: u64,
    /// Per-coordinate noise standard deviation.
    pub sigma: f64,
}

impl MechanismParams {
    pub fn new(
        lipschitz_g: f64,
        total_rounds: u64,
        total_samples: u64,
        sigma: f64,
    ) -> Result<Self> {
        let params = Self {
            lipschitz_g,
            total_rounds,
            total_samples,
            sigma,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lipschitz_g.is_finite() && self.lipschitz_g > 0.0) {
            return Err(Error::domain(
                "lipschitz_g",
                format!("must be positive, got {}", self.lipschitz_g),
            ));
        }
        if self.total_rounds == 0 {
            return Err(Error::domain("total_rounds", "must be at least 1"));
        }
        if self.total_samples == 0 {
            return Err(Error::domain("total_samples", "must be at least 1"));
        }
        // sigma = +inf is a legal "no leakage" limit; zero is not.
        if !(self.sigma > 0.0) {
            return Err(Error::domain(
                "sigma",
                format!("must be positive, got {}", self.sigma),
            ));
        }
        Ok(())
    }

    /// ℓ2 sensitivity `2G/n` of the averaged gradient.
    pub fn sensitivity(&self) -> f64 {
        2.0 * self.lipschitz_g / self.total_samples as f64
    }

    /// Same mechanism with a different noise scale.
    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }
}

/// A moment order together with an upper bound on its log moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentBound {
    pub order_lambda: f64,
    pub log_moment: f64,
}

fn check_order(order_lambda: f64) -> Result<()> {
    if order_lambda.is_nan() || order_lambda < 1.0 {
        return Err(Error::domain(
            "order_lambda",
            format!("moment order must be >= 1, got {order_lambda}"),
        ));
    }
    Ok(())
}

/// Log moment bound of a single noisy-gradient release.
pub fn per_step_log_moment(params: &MechanismParams, order_lambda: f64) -> Result<f64> {
    params.validate()?;
    check_order(order_lambda)?;
    let ratio = params.sensitivity() / params.sigma;
    Ok(order_lambda * (order_lambda + 1.0) * ratio * ratio / 2.0)
}

/// Log moment bound of all `T` rounds. Saturates at `+inf` instead of
/// producing NaN when the value leaves the representable range.
pub fn composed_log_moment(params: &MechanismParams, order_lambda: f64) -> Result<f64> {
    let step = per_step_log_moment(params, order_lambda)?;
    let total = step * params.total_rounds as f64;
    Ok(if total.is_nan() { f64::INFINITY } else { total })
}

/// Composed moment bound at one order, packaged.
pub fn moment_bound(params: &MechanismParams, order_lambda: f64) -> Result<MomentBound> {
    Ok(MomentBound {
        order_lambda,
        log_moment: composed_log_moment(params, order_lambda)?,
    })
}

/// Smallest `δ` certified for `ε` by the tail bound over the given orders,
/// together with the order attaining it.
pub fn delta_for_epsilon_with_order(
    params: &MechanismParams,
    epsilon: f64,
    lambda_grid: &[f64],
) -> Result<(f64, f64)> {
    if !(epsilon > 0.0) {
        return Err(Error::domain(
            "epsilon",
            format!("must be positive, got {epsilon}"),
        ));
    }
    if lambda_grid.is_empty() {
        return Err(Error::domain("lambda_grid", "must not be empty"));
    }
    let mut best = (f64::INFINITY, lambda_grid[0]);
    for &lambda in lambda_grid {
        let exponent = composed_log_moment(params, lambda)? - lambda * epsilon;
        if exponent < best.0 {
            best = (exponent, lambda);
        }
    }
    Ok((best.0.exp().min(1.0), best.1))
}

/// `min_λ exp(α(λ) − λε)` over the grid, capped at 1.
pub fn delta_for_epsilon(
    params: &MechanismParams,
    epsilon: f64,
    lambda_grid: &[f64],
) -> Result<f64> {
    delta_for_epsilon_with_order(params, epsilon, lambda_grid).map(|(delta, _)| delta)
}
