use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossMetadata;
use crate::privacy::MechanismParams;

/// Which curvature certificate a bound uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureKind {
    StrongConvexity,
    Pl,
}

/// Excess empirical risk bounds for noisy gradient descent with `η = 1/L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub curvature_kind: CurvatureKind,
    pub curvature: f64,
    pub smoothness: f64,
    pub dim: usize,
    pub rounds: u64,
    pub sigma: f64,
    pub initial_gap: f64,
    /// `(1 − λ/L)^T`.
    pub contraction: f64,
    /// `ρ^T Δ₀ + (pσ²/2λ)(1 − ρ^T)`: the noise series summed exactly.
    pub finite_sum_bound: f64,
    /// `ρ^T Δ₀ + pσ²/(2λ)`.
    pub geometric_bound: f64,
    /// `ρ^T Δ₀ + Tpσ²/(2L)`.
    pub linear_bound: f64,
    /// `linear_bound / geometric_bound`.
    pub ratio: f64,
}

/// `(finite_sum, geometric, linear)` bounds for curvature `c` (λ or μ).
pub fn excess_risk_bounds(
    curvature: f64,
    smoothness: f64,
    dim: usize,
    sigma: f64,
    rounds: u64,
    initial_gap: f64,
) -> (f64, f64, f64) {
    let rho = (1.0 - curvature / smoothness).powf(rounds as f64);
    let noise = dim as f64 * sigma * sigma;
    let head = rho * initial_gap;
    (
        head + noise / (2.0 * curvature) * (1.0 - rho),
        head + noise / (2.0 * curvature),
        head + rounds as f64 * noise / (2.0 * smoothness),
    )
}

/// Bounds for a loss with a strong-convexity or PL certificate; `λ` is
/// preferred when both are present.
pub fn theoretical_bound_report(
    loss_meta: &LossMetadata,
    privacy: &MechanismParams,
    p: usize,
    rounds_t: u64,
    initial_gap: f64,
) -> Result<BoundReport> {
    let (kind, curvature) = match (loss_meta.strong_convexity, loss_meta.pl_constant) {
        (Some(l), _) => (CurvatureKind::StrongConvexity, l),
        (None, Some(mu)) => (CurvatureKind::Pl, mu),
        (None, None) => {
            return Err(Error::domain(
                "loss_meta",
                "bound needs a strong-convexity or PL certificate; neither is present",
            ))
        }
    };
    let smoothness = loss_meta.smoothness_l;
    if !(curvature > 0.0 && curvature <= smoothness && smoothness.is_finite()) {
        return Err(Error::domain(
            "curvature",
            format!("need 0 < curvature <= L, got curvature {curvature}, L {smoothness}"),
        ));
    }
    if !(initial_gap.is_finite() && initial_gap >= 0.0) {
        return Err(Error::domain(
            "initial_gap",
            format!("must be finite and non-negative, got {initial_gap}"),
        ));
    }
    let sigma = privacy.sigma;
    let (finite_sum_bound, geometric_bound, linear_bound) =
        excess_risk_bounds(curvature, smoothness, p, sigma, rounds_t, initial_gap);
    Ok(BoundReport {
        curvature_kind: kind,
        curvature,
        smoothness,
        dim: p,
        rounds: rounds_t,
        sigma,
        initial_gap,
        contraction: (1.0 - curvature / smoothness).powf(rounds_t as f64),
        finite_sum_bound,
        geometric_bound,
        linear_bound,
        ratio: linear_bound / geometric_bound,
    })
}
