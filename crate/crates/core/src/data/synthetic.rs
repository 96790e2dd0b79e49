use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Two isotropic Gaussian clouds at `±separation/2` along a fixed random
/// direction, one per class, balanced. Rows are normalized afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub dim: usize,
    /// Distance between the two class means, in units of the per-coordinate
    /// standard deviation.
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_separation() -> f64 {
    4.0
}

impl SyntheticSpec {
    pub fn new(samples: usize, dim: usize, seed: u64) -> Self {
        Self {
            samples,
            dim,
            separation: default_separation(),
            seed,
        }
    }
}

pub fn two_gaussian_clouds(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    if spec.samples < 2 || spec.dim == 0 {
        return Err(Error::domain(
            "synthetic",
            "need at least 2 samples and 1 dimension",
        ));
    }
    if !(spec.separation.is_finite() && spec.separation >= 0.0) {
        return Err(Error::domain(
            "separation",
            "must be finite and non-negative",
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut direction = Array1::from_shape_fn(spec.dim, |_| rng.sample::<f64, _>(StandardNormal));
    direction /= direction.dot(&direction).sqrt();
    let half = &direction * (spec.separation / 2.0);

    let labels = Array1::from_shape_fn(spec.samples, |i| (i % 2) as f64);
    let mut features = Array2::<f64>::zeros((spec.samples, spec.dim));
    for (mut row, &y) in features.outer_iter_mut().zip(labels.iter()) {
        let sign = if y == 1.0 { 1.0 } else { -1.0 };
        for (v, h) in row.iter_mut().zip(half.iter()) {
            *v = sign * h + rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(LabeledDataset::new_unnormalized(features, labels)?.normalize_rows())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_normalized() {
        let data = two_gaussian_clouds(&SyntheticSpec::new(1000, 10, 1)).unwrap();
        assert_eq!(data.len(), 1000);
        assert_eq!(data.positive_fraction(), 0.5);
        assert!((data.max_row_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn seeded() {
        let a = two_gaussian_clouds(&SyntheticSpec::new(50, 3, 4)).unwrap();
        let b = two_gaussian_clouds(&SyntheticSpec::new(50, 3, 4)).unwrap();
        assert_eq!(a, b);
    }
}
