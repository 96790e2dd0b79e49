use ndarray::{Array1, ArrayView1};

use super::{ExampleLoss, LossMetadata};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::ModelVector;

/// Projection radius assumed for the regularized loss unless configured.
pub const DEFAULT_RADIUS: f64 = 10.0;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Binary cross-entropy of a linear logit, `ℓ = softplus(z) − y·z` with
/// `z = x·θ`. Per-example gradients are `x(h(z) − y)`, so rows in the unit
/// ball give `G = 1`; the Hessian `h(1−h)xxᵀ` gives `L = 1/4`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Logistic;

impl ExampleLoss for Logistic {
    fn example_loss(&self, theta: ArrayView1<'_, f64>, x: ArrayView1<'_, f64>, y: f64) -> f64 {
        let z = x.dot(&theta);
        softplus(z) - y * z
    }

    fn add_example_gradient(
        &self,
        theta: ArrayView1<'_, f64>,
        x: ArrayView1<'_, f64>,
        y: f64,
        scale: f64,
        out: &mut ModelVector,
    ) {
        let residual = sigmoid(x.dot(&theta)) - y;
        out.scaled_add(scale * residual, &x);
    }

    fn metadata(&self) -> LossMetadata {
        LossMetadata {
            lipschitz_g: 1.0,
            smoothness_l: 0.25,
            strong_convexity: None,
            pl_constant: None,
            certified_radius: None,
        }
    }

    fn risk(&self, theta: &ModelVector, data: &LabeledDataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let z = data.features().dot(theta);
        let total: f64 = z
            .iter()
            .zip(data.labels())
            .map(|(z, y)| softplus(*z) - y * z)
            .sum();
        total / data.len() as f64
    }

    fn risk_gradient(&self, theta: &ModelVector, data: &LabeledDataset) -> ModelVector {
        if data.is_empty() {
            return ModelVector::zeros(theta.len());
        }
        let mut residual = data.features().dot(theta);
        residual.zip_mut_with(data.labels(), |r, y| *r = sigmoid(*r) - y);
        let mut grad = data.features().t().dot(&residual);
        grad /= data.len() as f64;
        grad
    }
}

/// Logistic loss plus `(reg/2)‖θ‖²`.
///
/// The penalty is not globally Lipschitz, so `G = 1 + reg·R` is certified
/// only on the ball `‖θ‖ ≤ R`; trainers must project onto that ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedLogistic {
    reg_lambda: f64,
    radius: f64,
}

impl RegularizedLogistic {
    pub fn new(reg_lambda: f64, radius: f64) -> Result<Self> {
        if !(reg_lambda.is_finite() && reg_lambda > 0.0) {
            return Err(Error::domain(
                "reg_lambda",
                format!("must be positive, got {reg_lambda}"),
            ));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::domain(
                "radius",
                format!("must be positive, got {radius}"),
            ));
        }
        Ok(Self { reg_lambda, radius })
    }

    pub fn reg_lambda(&self) -> f64 {
        self.reg_lambda
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl ExampleLoss for RegularizedLogistic {
    fn example_loss(&self, theta: ArrayView1<'_, f64>, x: ArrayView1<'_, f64>, y: f64) -> f64 {
        Logistic.example_loss(theta, x, y) + 0.5 * self.reg_lambda * theta.dot(&theta)
    }

    fn add_example_gradient(
        &self,
        theta: ArrayView1<'_, f64>,
        x: ArrayView1<'_, f64>,
        y: f64,
        scale: f64,
        out: &mut ModelVector,
    ) {
        Logistic.add_example_gradient(theta, x, y, scale, out);
        out.scaled_add(scale * self.reg_lambda, &theta);
    }

    fn metadata(&self) -> LossMetadata {
        LossMetadata {
            lipschitz_g: 1.0 + self.reg_lambda * self.radius,
            smoothness_l: 0.25 + self.reg_lambda,
            strong_convexity: Some(self.reg_lambda),
            pl_constant: None,
            certified_radius: Some(self.radius),
        }
    }

    fn risk(&self, theta: &ModelVector, data: &LabeledDataset) -> f64 {
        Logistic.risk(theta, data) + 0.5 * self.reg_lambda * theta.dot(theta)
    }

    fn risk_gradient(&self, theta: &ModelVector, data: &LabeledDataset) -> ModelVector {
        let mut grad = Logistic.risk_gradient(theta, data);
        grad.scaled_add(self.reg_lambda, theta);
        grad
    }
}

fn check_dims(theta: &ModelVector, data: &LabeledDataset) -> Result<()> {
    if theta.len() != data.dim() {
        return Err(Error::Dimension {
            expected: data.dim(),
            actual: theta.len(),
        });
    }
    Ok(())
}

/// Mean cross-entropy of `θ` on `data`.
pub fn logistic_loss(theta: &ModelVector, data: &LabeledDataset) -> Result<f64> {
    check_dims(theta, data)?;
    Ok(Logistic.risk(theta, data))
}

/// `(1/n) Σ x_i (h(x_i·θ) − y_i)`.
pub fn logistic_gradient(theta: &ModelVector, data: &LabeledDataset) -> Result<Array1<f64>> {
    check_dims(theta, data)?;
    Ok(Logistic.risk_gradient(theta, data))
}

/// Value, gradient and metadata of the regularized logistic risk, with `G`
/// certified on the default radius.
pub fn regularized_logistic(
    theta: &ModelVector,
    data: &LabeledDataset,
    reg_lambda: f64,
) -> Result<(f64, ModelVector, LossMetadata)> {
    check_dims(theta, data)?;
    let loss = RegularizedLogistic::new(reg_lambda, DEFAULT_RADIUS)?;
    Ok((
        loss.risk(theta, data),
        loss.risk_gradient(theta, data),
        loss.metadata(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::certify::central_difference;
    use crate::loss::EmpiricalRisk;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_data(rng: &mut impl Rng, n: usize, d: usize) -> LabeledDataset {
        let features = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let labels = Array1::from_shape_fn(n, |_| f64::from(u8::from(rng.random_bool(0.5))));
        LabeledDataset::new_unnormalized(features, labels)
            .unwrap()
            .normalize_rows()
    }

    #[test]
    fn zero_parameters_give_ln_two() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let data = random_data(&mut rng, 20, 4);
        let v = logistic_loss(&ModelVector::zeros(4), &data).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_sample_hand_value() {
        let data = LabeledDataset::new(array![[1.0]], array![1.0]).unwrap();
        let v = logistic_loss(&array![3f64.ln()], &data).unwrap();
        assert!((v - (-(0.75f64).ln())).abs() < 1e-15);
    }

    #[test]
    fn gradient_at_origin() {
        let data = LabeledDataset::new(array![[1.0, 0.0]], array![1.0]).unwrap();
        let g = logistic_gradient(&ModelVector::zeros(2), &data).unwrap();
        assert_eq!(g, array![-0.5, 0.0]);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let data = LabeledDataset::new(array![[1.0], [1.0]], array![1.0, 0.0]).unwrap();
        let v = logistic_loss(&array![1e6], &data).unwrap();
        assert!(v.is_finite());
        assert!((v - 1e6 / 2.0).abs() < 1e-6);
        let g = logistic_gradient(&array![-1e6], &data).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn dimension_mismatch() {
        let data = LabeledDataset::new(array![[0.5, 0.5]], array![1.0]).unwrap();
        assert!(matches!(
            logistic_loss(&array![1.0], &data),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn vectorized_matches_per_example_path() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let data = random_data(&mut rng, 50, 6);
        let theta = Array1::from_shape_fn(6, |_| rng.random_range(-3.0..3.0));
        let mut slow = ModelVector::zeros(6);
        for (x, y) in data.rows() {
            Logistic.add_example_gradient(theta.view(), x, y, 1.0 / 50.0, &mut slow);
        }
        let fast = Logistic.risk_gradient(&theta, &data);
        for (a, b) in slow.iter().zip(fast.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn regularization_vanishes_at_origin() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let data = random_data(&mut rng, 30, 3);
        let zero = ModelVector::zeros(3);
        let (v, g, _) = regularized_logistic(&zero, &data, 0.1).unwrap();
        assert_eq!(v, logistic_loss(&zero, &data).unwrap());
        assert_eq!(g, logistic_gradient(&zero, &data).unwrap());
    }

    #[test]
    fn penalty_is_exactly_half_lambda_norm() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let data = random_data(&mut rng, 30, 3);
        let theta = array![0.3, -1.2, 2.0];
        let (v, _, meta) = regularized_logistic(&theta, &data, 0.1).unwrap();
        let diff = v - logistic_loss(&theta, &data).unwrap();
        assert!((diff - 0.05 * theta.dot(&theta)).abs() < 1e-14);
        assert_eq!(meta.strong_convexity, Some(0.1));
        assert_eq!(meta.smoothness_l, 0.35);
        assert_eq!(meta.lipschitz_g, 2.0);
    }

    #[test]
    fn regularized_rejects_bad_lambda() {
        assert!(RegularizedLogistic::new(0.0, 1.0).is_err());
        assert!(RegularizedLogistic::new(-0.1, 1.0).is_err());
    }

    fn assert_close_relative(
        analytic: &ModelVector,
        numeric: &ModelVector,
        tol: f64,
    ) -> std::result::Result<(), String> {
        let scale = numeric.iter().map(|v| v.abs()).fold(
            analytic.iter().map(|v| v.abs()).fold(0.0, f64::max),
            f64::max,
        );
        for (a, n) in analytic.iter().zip(numeric) {
            if (a - n).abs() > tol * scale.max(1e-3) {
                return Err(format!("{a} vs {n}"));
            }
        }
        Ok(())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn logistic_gradient_matches_finite_differences(seed in any::<u64>(), n in 1usize..40, d in 1usize..8) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let data = random_data(&mut rng, n, d);
            let theta = Array1::from_shape_fn(d, |_| rng.random_range(-4.0..4.0));
            let objective = EmpiricalRisk::new(&Logistic, &data);
            let fd = central_difference(&objective, &theta, 1e-5);
            let analytic = Logistic.risk_gradient(&theta, &data);
            prop_assert!(assert_close_relative(&analytic, &fd, 1e-6).is_ok());
        }

        #[test]
        fn regularized_gradient_matches_finite_differences(seed in any::<u64>(), lambda in 0.01f64..1.0) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let data = random_data(&mut rng, 25, 5);
            let theta = Array1::from_shape_fn(5, |_| rng.random_range(-4.0..4.0));
            let loss = RegularizedLogistic::new(lambda, 10.0).unwrap();
            let fd = central_difference(&EmpiricalRisk::new(&loss, &data), &theta, 1e-5);
            prop_assert!(assert_close_relative(&loss.risk_gradient(&theta, &data), &fd, 1e-6).is_ok());
        }

        #[test]
        fn loss_non_negative_and_order_free(seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let data = random_data(&mut rng, 15, 3);
            let theta = Array1::from_shape_fn(3, |_| rng.random_range(-10.0..10.0));
            let v = logistic_loss(&theta, &data).unwrap();
            prop_assert!(v >= 0.0);
            let reversed: Vec<usize> = (0..15).rev().collect();
            let w = logistic_loss(&theta, &data.select(&reversed)).unwrap();
            prop_assert!((v - w).abs() <= 1e-14 * v.max(1.0));
        }

        #[test]
        fn per_example_gradient_norm_at_most_one(seed in any::<u64>(), z in -50.0f64..50.0) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let data = random_data(&mut rng, 10, 4);
            let theta = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0)) * z;
            for (x, y) in data.rows() {
                let g = Logistic.example_gradient(&theta, x, y);
                prop_assert!(g.dot(&g).sqrt() <= 1.0 + 1e-12);
            }
            let full = Logistic.risk_gradient(&theta, &data);
            prop_assert!(full.dot(&full).sqrt() <= 1.0 + 1e-12);
        }
    }
}
