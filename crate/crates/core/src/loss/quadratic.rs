use super::{LossMetadata, Objective};
use crate::error::{Error, Result};
use crate::ModelVector;

/// `½ Σ h_i (θ_i − a_i)²` with positive diagonal curvature `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    center: ModelVector,
    curvature: ModelVector,
}

impl Quadratic {
    pub fn new(center: ModelVector, curvature: ModelVector) -> Result<Self> {
        if center.len() != curvature.len() {
            return Err(Error::Dimension {
                expected: center.len(),
                actual: curvature.len(),
            });
        }
        if curvature.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::domain("curvature", "entries must be positive"));
        }
        Ok(Self { center, curvature })
    }

    /// `½‖θ − a‖²`.
    pub fn isotropic(center: ModelVector) -> Self {
        let curvature = ModelVector::ones(center.len());
        Self { center, curvature }
    }

    pub fn center(&self) -> &ModelVector {
        &self.center
    }

    pub fn metadata(&self) -> LossMetadata {
        let min = self.curvature.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = self.curvature.iter().cloned().fold(0.0, f64::max);
        LossMetadata {
            lipschitz_g: f64::INFINITY,
            smoothness_l: max,
            strong_convexity: Some(min),
            pl_constant: None,
            certified_radius: None,
        }
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, theta: &ModelVector) -> f64 {
        theta
            .iter()
            .zip(&self.center)
            .zip(&self.curvature)
            .map(|((t, a), h)| 0.5 * h * (t - a) * (t - a))
            .sum()
    }

    fn gradient(&self, theta: &ModelVector) -> ModelVector {
        (theta - &self.center) * &self.curvature
    }
}
