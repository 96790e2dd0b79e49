use serde::{Deserialize, Serialize};

use super::{delta_for_epsilon_with_order, MechanismParams, PrivacyBudget};
use crate::error::{Error, Result};

/// Knobs for [`calibrate_sigma`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    /// Moment orders searched by the tail bound. `None` selects
    /// [`default_lambda_grid`] for the budget at hand.
    pub lambda_grid: Option<Vec<f64>>,
    /// Relative width of the final bisection bracket on σ.
    pub relative_tolerance: f64,
    /// Largest admissible σ, as a multiple of `G`.
    pub sigma_ceiling_factor: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            lambda_grid: None,
            relative_tolerance: 1e-4,
            sigma_ceiling_factor: 1e6,
        }
    }
}

/// Integer orders `1..=max(128, ⌈4 ln(1/δ)/ε⌉)`.
///
/// The tail bound can only reach `δ` at orders with `λε > ln(1/δ)`, and the
/// optimal order sits near `2 ln(1/δ)/ε`, so the upper end leaves a factor of
/// two of headroom.
pub fn default_lambda_grid(budget: &PrivacyBudget) -> Vec<f64> {
    let needed = (4.0 * (1.0 / budget.delta()).ln() / budget.epsilon()).ceil();
    let max = needed.clamp(128.0, 1e7) as u64;
    (1..=max).map(|l| l as f64).collect()
}

/// Outcome of noise calibration, in the form reported to users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub epsilon: f64,
    pub delta: f64,
    #[serde(rename = "G")]
    pub lipschitz_g: f64,
    #[serde(rename = "T")]
    pub total_rounds: u64,
    #[serde(rename = "n")]
    pub total_samples: u64,
    pub sigma: f64,
    /// The constant `c` in `σ² = c·G²T·ln(1/δ)/(n²ε²)` implied by `sigma`.
    pub implied_c: f64,
    /// Moment order attaining the tail bound at `sigma`.
    pub lambda_star: f64,
    /// δ certified at `sigma`; never above `delta`.
    pub delta_achieved: f64,
}

impl CalibrationRecord {
    pub fn mechanism(&self) -> MechanismParams {
        MechanismParams {
            lipschitz_g: self.lipschitz_g,
            total_rounds: self.total_rounds,
            total_samples: self.total_samples,
            sigma: self.sigma,
        }
    }
}

/// Every moment bound depends on `(G, T, n, σ)` only through
/// `s = σn/(G√T)`; with `G = T = n = 1` the mechanism noise equals `s`.
fn unit_mechanism(scaled_sigma: f64) -> MechanismParams {
    MechanismParams {
        lipschitz_g: 1.0,
        total_rounds: 1,
        total_samples: 1,
        sigma: scaled_sigma,
    }
}

/// Finds the smallest σ whose composed moments certify `budget` for `T`
/// rounds of `N(0, σ²I)` noise on a gradient with sensitivity `2G/n`.
///
/// The search runs on the dimensionless scale `s = σn/(G√T)`, so the result
/// scales exactly as `G√T/n`.
pub fn calibrate_sigma(
    budget: &PrivacyBudget,
    lipschitz_g: f64,
    total_rounds: u64,
    total_samples: u64,
    options: &CalibrationOptions,
) -> Result<CalibrationRecord> {
    // validates G, T, n
    MechanismParams::new(lipschitz_g, total_rounds, total_samples, 1.0)?;
    if !(options.relative_tolerance > 0.0 && options.relative_tolerance < 1.0) {
        return Err(Error::domain(
            "relative_tolerance",
            format!("must lie in (0, 1), got {}", options.relative_tolerance),
        ));
    }
    let grid = match &options.lambda_grid {
        Some(grid) => grid.clone(),
        None => default_lambda_grid(budget),
    };
    if grid.is_empty() {
        return Err(Error::domain("lambda_grid", "must not be empty"));
    }
    if let Some(bad) = grid.iter().find(|l| !(**l >= 1.0)) {
        return Err(Error::domain(
            "lambda_grid",
            format!("moment orders must be >= 1, got {bad}"),
        ));
    }

    let epsilon = budget.epsilon();
    let target = budget.delta();
    let log_inv_delta = (1.0 / target).ln();
    let max_order = grid.iter().cloned().fold(f64::MIN, f64::max);
    if max_order * epsilon <= log_inv_delta {
        return Err(Error::Infeasible(format!(
            "largest moment order {max_order} gives λε = {:.4} <= ln(1/δ) = {:.4}; \
             the λ grid must reach beyond {:.1}",
            max_order * epsilon,
            log_inv_delta,
            log_inv_delta / epsilon
        )));
    }

    let passes = |s: f64| -> Result<bool> {
        let (delta, _) = delta_for_epsilon_with_order(&unit_mechanism(s), epsilon, &grid)?;
        Ok(delta <= target)
    };

    // Bracket [lo, hi] with lo failing and hi passing.
    let mut hi = 1.0;
    while !passes(hi)? {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Infeasible(
                "no finite noise scale satisfies the budget".into(),
            ));
        }
    }
    let mut lo = hi / 2.0;
    while passes(lo)? {
        hi = lo;
        lo /= 2.0;
    }
    while hi / lo - 1.0 > options.relative_tolerance {
        let mid = (lo * hi).sqrt();
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let scale = lipschitz_g * (total_rounds as f64).sqrt() / total_samples as f64;
    let sigma = hi * scale;
    let ceiling = options.sigma_ceiling_factor * lipschitz_g;
    if sigma > ceiling {
        return Err(Error::Infeasible(format!(
            "required σ = {sigma:.6e} exceeds the ceiling {ceiling:.3e} ({}·G)",
            options.sigma_ceiling_factor
        )));
    }

    let mechanism = MechanismParams::new(lipschitz_g, total_rounds, total_samples, sigma)?;
    let (delta_achieved, lambda_star) = delta_for_epsilon_with_order(&mechanism, epsilon, &grid)?;
    Ok(CalibrationRecord {
        epsilon,
        delta: target,
        lipschitz_g,
        total_rounds,
        total_samples,
        sigma,
        implied_c: hi * hi * epsilon * epsilon / log_inv_delta,
        lambda_star,
        delta_achieved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::privacy::delta_for_epsilon;

    fn budget(eps: f64, delta: f64) -> PrivacyBudget {
        PrivacyBudget::new(eps, delta).unwrap()
    }

    fn calibrate(eps: f64, delta: f64, g: f64, t: u64, n: u64) -> CalibrationRecord {
        calibrate_sigma(&budget(eps, delta), g, t, n, &CalibrationOptions::default()).unwrap()
    }

    #[test]
    fn default_grid_reaches_past_the_tail_threshold() {
        let grid = default_lambda_grid(&budget(0.05, 1e-3));
        assert_eq!(grid.len(), 553);
        assert_eq!(default_lambda_grid(&budget(1.0, 1e-3)).len(), 128);
    }

    #[test]
    fn halving_with_doubled_sample_count() {
        let a = calibrate(0.1, 1e-3, 1.0, 1000, 500);
        let b = calibrate(0.1, 1e-3, 1.0, 1000, 1000);
        assert!((a.sigma / b.sigma - 2.0).abs() < 1e-9);
    }

    #[test]
    fn sigma_grows_with_root_rounds() {
        let a = calibrate(0.2, 1e-3, 1.0, 250, 2000);
        let b = calibrate(0.2, 1e-3, 1.0, 1000, 2000);
        assert!((b.sigma / a.sigma - 2.0).abs() < 1e-6);
    }

    #[test]
    fn self_consistent_and_minimal() {
        let grid = default_lambda_grid(&budget(0.3, 1e-4));
        let rec = calibrate(0.3, 1e-4, 1.0, 300, 5000);
        let mech = rec.mechanism();
        assert!(delta_for_epsilon(&mech, 0.3, &grid).unwrap() <= 1e-4);
        assert!(delta_for_epsilon(&mech.with_sigma(rec.sigma * 0.98), 0.3, &grid).unwrap() > 1e-4);
        assert!(rec.delta_achieved <= 1e-4);
    }

    #[test]
    fn implied_constant_matches_sigma() {
        let rec = calibrate(0.05, 1e-3, 1.0, 1000, 10_000);
        let c = rec.sigma.powi(2) * 1e8 * 0.05f64.powi(2) / (1000.0 * 1000f64.ln());
        assert!((rec.implied_c - c).abs() < 1e-9 * c);
        // small-ε asymptote of the exact bound is c = 8
        assert!(
            rec.implied_c > 7.5 && rec.implied_c < 8.5,
            "{}",
            rec.implied_c
        );
    }

    #[test]
    fn short_grid_is_infeasible() {
        let options = CalibrationOptions {
            lambda_grid: Some((1..=128).map(f64::from).collect()),
            ..Default::default()
        };
        let err = calibrate_sigma(&budget(0.05, 1e-3), 1.0, 1000, 10_000, &options).unwrap_err();
        match err {
            Error::Infeasible(msg) => assert!(msg.contains("λ grid"), "{msg}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn ceiling_is_enforced() {
        let options = CalibrationOptions {
            sigma_ceiling_factor: 1e-3,
            ..Default::default()
        };
        let err = calibrate_sigma(&budget(0.05, 1e-3), 1.0, 1000, 100, &options).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn record_serializes_with_short_names() {
        let rec = calibrate(0.5, 1e-3, 1.0, 10, 100);
        let json = serde_json::to_value(&rec).unwrap();
        for key in [
            "epsilon",
            "delta",
            "G",
            "T",
            "n",
            "sigma",
            "implied_c",
            "lambda_star",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }
}
