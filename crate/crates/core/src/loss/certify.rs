//! Empirical checks of the constants a loss claims.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ExampleLoss, Objective};
use crate::data::LabeledDataset;
use crate::ModelVector;

/// Outcome of one certificate check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub name: String,
    pub passed: bool,
    pub checked: usize,
    /// Largest observed ratio of measured quantity to its certified bound.
    pub worst_ratio: f64,
    /// First falsifying point, human-readable.
    pub witness: Option<String>,
}

impl CertificateCheck {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            passed: true,
            checked: 0,
            worst_ratio: 0.0,
            witness: None,
        }
    }

    fn record(&mut self, ratio: f64, ok: bool, witness: impl FnOnce() -> String) {
        self.checked += 1;
        if ratio.is_nan() {
            self.worst_ratio = f64::NAN;
        } else {
            self.worst_ratio = self.worst_ratio.max(ratio);
        }
        if !ok && self.passed {
            self.passed = false;
            self.witness = Some(witness());
        }
    }
}

/// Central-difference gradient estimate with step `h` per coordinate.
pub fn central_difference<O: Objective + ?Sized>(
    objective: &O,
    theta: &ModelVector,
    h: f64,
) -> ModelVector {
    let mut probe = theta.clone();
    ModelVector::from_shape_fn(theta.len(), |i| {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = objective.value(&probe);
        probe[i] = orig - h;
        let down = objective.value(&probe);
        probe[i] = orig;
        (up - down) / (2.0 * h)
    })
}

/// Uniform point in the ball of the given radius.
pub fn random_in_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> ModelVector {
    let mut v = ModelVector::from_shape_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
    let norm = v.dot(&v).sqrt();
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    if norm > 0.0 {
        v *= r / norm;
    }
    v
}

/// Every per-example gradient norm is at most `G` (plus `1e-12`).
pub fn check_lipschitz<L: ExampleLoss + ?Sized>(
    loss: &L,
    data: &LabeledDataset,
    thetas: &[ModelVector],
) -> CertificateCheck {
    let g = loss.metadata().lipschitz_g;
    let mut check = CertificateCheck::new("lipschitz");
    for theta in thetas {
        for (i, (x, y)) in data.rows().enumerate() {
            let grad = loss.example_gradient(theta, x, y);
            let norm = grad.dot(&grad).sqrt();
            check.record(norm / g, norm <= g + 1e-12, || {
                format!(
                    "row {i}: ‖∇ℓ‖ = {norm} > G = {g} (‖x‖ = {})",
                    x.dot(&x).sqrt()
                )
            });
        }
    }
    check
}

/// `‖∇f(a) − ∇f(b)‖ ≤ L‖a − b‖` on the given pairs.
pub fn check_smoothness<O: Objective + ?Sized>(
    objective: &O,
    smoothness_l: f64,
    pairs: &[(ModelVector, ModelVector)],
) -> CertificateCheck {
    let mut check = CertificateCheck::new("smoothness");
    for (a, b) in pairs {
        let dg = objective.gradient(a) - objective.gradient(b);
        let dt = a - b;
        let lhs = dg.dot(&dg).sqrt();
        let rhs = smoothness_l * dt.dot(&dt).sqrt();
        let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
        check.record(ratio, lhs <= rhs * (1.0 + 1e-9) + 1e-15, || {
            format!("‖Δ∇‖ = {lhs} > L‖Δθ‖ = {rhs} at θ = {a}")
        });
    }
    check
}

/// Analytic gradient agrees with central differences to `rel_tol`, relative
/// to the larger of the two gradients' largest entry (floored at `1e-3`).
pub fn check_gradient<O: Objective + ?Sized>(
    objective: &O,
    points: &[ModelVector],
    step: f64,
    rel_tol: f64,
) -> CertificateCheck {
    let mut check = CertificateCheck::new("gradient");
    for theta in points {
        let analytic = objective.gradient(theta);
        let numeric = central_difference(objective, theta, step);
        let scale = analytic
            .iter()
            .chain(numeric.iter())
            .map(|v| v.abs())
            .fold(1e-3, f64::max);
        let err = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).abs())
            .fold(0.0, f64::max)
            / scale;
        check.record(err / rel_tol, err <= rel_tol, || {
            format!("relative error {err:e} at θ = {theta}: analytic {analytic}, numeric {numeric}")
        });
    }
    check
}

/// `‖∇L_D(θ) − ∇L_D'(θ)‖ ≤ 2G/n` where `D'` replaces row `i` of `D`.
pub fn check_sensitivity<L: ExampleLoss + ?Sized>(
    loss: &L,
    data: &LabeledDataset,
    replacements: &[(usize, ModelVector, f64)],
    thetas: &[ModelVector],
) -> crate::Result<CertificateCheck> {
    let bound = 2.0 * loss.metadata().lipschitz_g / data.len() as f64;
    let mut check = CertificateCheck::new("sensitivity");
    for (i, x, y) in replacements {
        let neighbour = data.with_row_replaced(*i, x.view(), *y)?;
        for theta in thetas {
            let diff = loss.risk_gradient(theta, data) - loss.risk_gradient(theta, &neighbour);
            let norm = diff.dot(&diff).sqrt();
            check.record(norm / bound, norm <= bound * (1.0 + 1e-12), || {
                format!("replacing row {i}: ‖Δ∇L‖ = {norm} > 2G/n = {bound}")
            });
        }
    }
    Ok(check)
}

/// Lipschitz, smoothness, gradient and sensitivity checks of `loss` on
/// `data` at `samples` parameter points drawn from the ball of `radius`.
pub fn certify_example_loss<L: ExampleLoss + ?Sized>(
    loss: &L,
    data: &LabeledDataset,
    samples: usize,
    radius: f64,
    seed: u64,
) -> crate::Result<Vec<CertificateCheck>> {
    if data.is_empty() || samples == 0 {
        return Err(crate::Error::domain(
            "samples",
            "need data and at least one sample point",
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let p = loss.param_dim(data.dim());
    let thetas: Vec<ModelVector> = (0..samples)
        .map(|_| random_in_ball(p, radius, &mut rng))
        .collect();
    let pairs: Vec<(ModelVector, ModelVector)> = (0..samples)
        .map(|_| {
            (
                random_in_ball(p, radius, &mut rng),
                random_in_ball(p, radius, &mut rng),
            )
        })
        .collect();
    let objective = super::EmpiricalRisk::new(loss, data);
    let meta = loss.metadata();

    // replacement rows come from the data itself, with the label flipped
    let n = data.len();
    let replacements: Vec<(usize, ModelVector, f64)> = (0..samples.min(n))
        .map(|_| {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            (i, data.row(j).to_owned(), 1.0 - data.label(j))
        })
        .collect();
    let few = &thetas[..thetas.len().min(5)];

    Ok(vec![
        check_lipschitz(loss, data, &thetas),
        check_smoothness(&objective, meta.smoothness_l, &pairs),
        check_gradient(&objective, &thetas, 1e-5, 1e-6),
        check_sensitivity(loss, data, &replacements, few)?,
    ])
}

/// Checks of the scalar PL function on `[−R, R]`: derivative bound, gradient
/// Lipschitz constant, central differences and the PL inequality with the
/// certified `μ`.
pub fn certify_pl_scalar(
    f: &super::PlScalar,
    samples: usize,
    seed: u64,
) -> crate::Result<Vec<CertificateCheck>> {
    if samples == 0 {
        return Err(crate::Error::domain(
            "samples",
            "need at least one sample point",
        ));
    }
    let r = f.radius();
    let meta = f.metadata();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let points: Vec<ModelVector> = (0..samples)
        .map(|_| ModelVector::from_elem(1, rng.random_range(-r..=r)))
        .collect();
    let pairs: Vec<(ModelVector, ModelVector)> = points
        .iter()
        .map(|a| {
            (
                a.clone(),
                ModelVector::from_elem(1, rng.random_range(-r..=r)),
            )
        })
        .collect();

    let mut lipschitz = CertificateCheck::new("lipschitz");
    for theta in &points {
        let g = f.gradient(theta)[0].abs();
        lipschitz.record(g / meta.lipschitz_g, g <= meta.lipschitz_g, || {
            format!("|f'({})| = {g} > G = {}", theta[0], meta.lipschitz_g)
        });
    }
    let mu = meta.pl_constant.unwrap_or(0.0);
    let verdict = super::pl_verify(
        f,
        super::PlScalar::MINIMUM,
        mu,
        &[(-r, r)],
        samples.max(1000),
        seed,
    )?;
    let pl = CertificateCheck {
        name: "pl".to_string(),
        passed: verdict.passed,
        checked: verdict.points_checked,
        worst_ratio: mu / verdict.min_ratio,
        witness: verdict.witness.map(|w| {
            format!(
                "θ = {:?}: ‖∇f‖² = {} < 2μ(f − f*) = {}",
                w.theta,
                w.grad_norm_sq,
                2.0 * mu * w.gap
            )
        }),
    };
    Ok(vec![
        lipschitz,
        check_smoothness(f, meta.smoothness_l, &pairs),
        check_gradient(f, &points, 1e-5, 1e-6),
        pl,
    ])
}
