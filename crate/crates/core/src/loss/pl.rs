use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{LossMetadata, Objective};
use crate::error::{Error, Result};
use crate::ModelVector;

/// Safety margin taken off the sampled PL infimum when certifying `μ`.
pub const PL_MARGIN: f64 = 0.05;

/// `f(θ) = θ² + 3 sin²θ`: non-convex, minimum `0` at `θ = 0`, and PL.
///
/// `|f''| = |2 + 6 cos 2θ| ≤ 8` gives `L = 8`; on `|θ| ≤ R` the gradient is
/// bounded by `2R + 3`. The PL constant is measured on `[−R, R]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlScalar {
    radius: f64,
}

impl Default for PlScalar {
    fn default() -> Self {
        Self { radius: 10.0 }
    }
}

impl PlScalar {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::domain(
                "radius",
                format!("must be positive, got {radius}"),
            ));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn eval(theta: f64) -> (f64, f64) {
        let s = theta.sin();
        (
            theta * theta + 3.0 * s * s,
            2.0 * theta + 3.0 * (2.0 * theta).sin(),
        )
    }

    pub const MINIMUM: f64 = 0.0;

    /// Dense-grid infimum of `f'²/(2f)` on `[−R, R]`, less [`PL_MARGIN`].
    pub fn measured_mu(&self) -> f64 {
        let steps = 20_000;
        let infimum = (0..=steps)
            .map(|i| -self.radius + 2.0 * self.radius * i as f64 / steps as f64)
            .filter_map(|t| {
                let (f, g) = Self::eval(t);
                (f > 0.0).then(|| g * g / (2.0 * f))
            })
            .fold(f64::INFINITY, f64::min);
        infimum * (1.0 - PL_MARGIN)
    }

    pub fn metadata(&self) -> LossMetadata {
        LossMetadata {
            lipschitz_g: 2.0 * self.radius + 3.0,
            smoothness_l: 8.0,
            strong_convexity: None,
            pl_constant: Some(self.measured_mu()),
            certified_radius: Some(self.radius),
        }
    }
}

impl Objective for PlScalar {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, theta: &ModelVector) -> f64 {
        Self::eval(theta[0]).0
    }

    fn gradient(&self, theta: &ModelVector) -> ModelVector {
        ModelVector::from_elem(1, Self::eval(theta[0]).1)
    }
}

/// Value, derivative and metadata of the scalar PL function.
pub fn pl_test_function(theta: f64) -> (f64, f64, LossMetadata) {
    let (f, g) = PlScalar::eval(theta);
    (f, g, PlScalar::default().metadata())
}

/// A point where `‖∇f‖² < 2μ(f − f*)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlWitness {
    pub theta: Vec<f64>,
    pub grad_norm_sq: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlVerdict {
    pub passed: bool,
    pub points_checked: usize,
    /// Smallest `‖∇f‖² / (2(f − f*))` seen over points with `f > f*`.
    pub min_ratio: f64,
    pub witness: Option<PlWitness>,
}

/// Checks the PL inequality `‖∇f(θ)‖² ≥ 2μ(f(θ) − f*)` on a grid over the
/// box plus `samples` uniform random points.
pub fn pl_verify<O: Objective + ?Sized>(
    objective: &O,
    f_star: f64,
    mu: f64,
    sample_box: &[(f64, f64)],
    samples: usize,
    seed: u64,
) -> Result<PlVerdict> {
    if samples == 0 {
        return Err(Error::domain("samples", "must be at least 1"));
    }
    if sample_box.len() != objective.dim() {
        return Err(Error::Dimension {
            expected: objective.dim(),
            actual: sample_box.len(),
        });
    }
    if let Some((lo, hi)) = sample_box.iter().find(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::domain(
            "sample_box",
            format!("empty interval [{lo}, {hi}]"),
        ));
    }

    let p = sample_box.len();
    let per_axis = ((samples as f64).powf(1.0 / p as f64).floor() as usize).max(1);
    let axis_point = |(lo, hi): (f64, f64), k: usize| {
        if per_axis == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (per_axis - 1) as f64
        }
    };

    let mut verdict = PlVerdict {
        passed: true,
        points_checked: 0,
        min_ratio: f64::INFINITY,
        witness: None,
    };
    let mut check = |theta: ModelVector| {
        let gap = objective.value(&theta) - f_star;
        let grad = objective.gradient(&theta);
        let grad_norm_sq = grad.dot(&grad);
        verdict.points_checked += 1;
        if gap > 0.0 {
            verdict.min_ratio = verdict.min_ratio.min(grad_norm_sq / (2.0 * gap));
        }
        // relative slack absorbs rounding when μ is exactly tight
        if grad_norm_sq < 2.0 * mu * gap * (1.0 - 1e-12) && verdict.witness.is_none() {
            verdict.passed = false;
            verdict.witness = Some(PlWitness {
                theta: theta.to_vec(),
                grad_norm_sq,
                gap,
            });
        }
    };

    let grid_points = per_axis.checked_pow(p as u32).unwrap_or(usize::MAX);
    if grid_points <= samples.saturating_mul(4) {
        let mut index = vec![0usize; p];
        for _ in 0..grid_points {
            let theta = ModelVector::from_shape_fn(p, |k| axis_point(sample_box[k], index[k]));
            check(theta);
            for slot in index.iter_mut() {
                *slot += 1;
                if *slot < per_axis {
                    break;
                }
                *slot = 0;
            }
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let theta = ModelVector::from_shape_fn(p, |k| {
            let (lo, hi) = sample_box[k];
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        });
        check(theta);
    }
    Ok(verdict)
}
