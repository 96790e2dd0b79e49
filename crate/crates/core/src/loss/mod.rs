//! Loss families with certified constants.
//!
//! A [`ExampleLoss`] is evaluated per record and averaged over a dataset; an
//! [`Objective`] is any differentiable function of `θ` alone, which is what
//! the trainers consume. [`EmpiricalRisk`] binds the two.

pub mod certify;
mod logistic;
mod pl;
mod quadratic;

pub use logistic::{
    logistic_gradient, logistic_loss, regularized_logistic, sigmoid, Logistic, RegularizedLogistic,
    DEFAULT_RADIUS,
};
pub use pl::{pl_test_function, pl_verify, PlScalar, PlVerdict, PlWitness};
pub use quadratic::Quadratic;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::ModelVector;

/// Constants certified for a loss.
///
/// `strong_convexity` and `pl_constant` are alternative certificates; either
/// may be absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossMetadata {
    /// Per-example gradient norm bound `G`.
    pub lipschitz_g: f64,
    /// Gradient Lipschitz constant `L`.
    pub smoothness_l: f64,
    pub strong_convexity: Option<f64>,
    pub pl_constant: Option<f64>,
    /// Radius of the ball on which `lipschitz_g` holds, when it is not global.
    pub certified_radius: Option<f64>,
}

impl LossMetadata {
    /// The curvature constant used in excess-risk bounds: `λ` when
    /// available, else `μ`.
    pub fn curvature(&self) -> Option<f64> {
        self.strong_convexity.or(self.pl_constant)
    }
}

/// A differentiable function of the parameters.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, theta: &ModelVector) -> f64;
    fn gradient(&self, theta: &ModelVector) -> ModelVector;
}

/// A per-record loss `ℓ(θ, x, y)`.
pub trait ExampleLoss: Sync + Send {
    fn example_loss(&self, theta: ArrayView1<'_, f64>, x: ArrayView1<'_, f64>, y: f64) -> f64;

    /// Adds `scale · ∇_θ ℓ(θ, x, y)` to `out`.
    fn add_example_gradient(
        &self,
        theta: ArrayView1<'_, f64>,
        x: ArrayView1<'_, f64>,
        y: f64,
        scale: f64,
        out: &mut ModelVector,
    );

    fn metadata(&self) -> LossMetadata;

    /// Number of parameters for records of dimension `feature_dim`.
    fn param_dim(&self, feature_dim: usize) -> usize {
        feature_dim
    }

    /// Average loss over `data`.
    fn risk(&self, theta: &ModelVector, data: &LabeledDataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let total: f64 = data
            .rows()
            .map(|(x, y)| self.example_loss(theta.view(), x, y))
            .sum();
        total / data.len() as f64
    }

    /// Full-batch gradient of [`ExampleLoss::risk`].
    fn risk_gradient(&self, theta: &ModelVector, data: &LabeledDataset) -> ModelVector {
        let mut out = ModelVector::zeros(theta.len());
        if data.is_empty() {
            return out;
        }
        let scale = 1.0 / data.len() as f64;
        for (x, y) in data.rows() {
            self.add_example_gradient(theta.view(), x, y, scale, &mut out);
        }
        out
    }

    fn example_gradient(&self, theta: &ModelVector, x: ArrayView1<'_, f64>, y: f64) -> ModelVector {
        let mut out = ModelVector::zeros(theta.len());
        self.add_example_gradient(theta.view(), x, y, 1.0, &mut out);
        out
    }
}

/// `L_D(θ)`: an example loss averaged over a dataset.
#[derive(Debug, Clone, Copy)]
pub struct EmpiricalRisk<'a, L: ?Sized> {
    pub loss: &'a L,
    pub data: &'a LabeledDataset,
}

impl<'a, L: ExampleLoss + ?Sized> EmpiricalRisk<'a, L> {
    pub fn new(loss: &'a L, data: &'a LabeledDataset) -> Self {
        Self { loss, data }
    }
}

impl<L: ExampleLoss + ?Sized> Objective for EmpiricalRisk<'_, L> {
    fn dim(&self) -> usize {
        self.loss.param_dim(self.data.dim())
    }

    fn value(&self, theta: &ModelVector) -> f64 {
        self.loss.risk(theta, self.data)
    }

    fn gradient(&self, theta: &ModelVector) -> ModelVector {
        self.loss.risk_gradient(theta, self.data)
    }
}

impl<O: Objective + ?Sized> Objective for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, theta: &ModelVector) -> f64 {
        (**self).value(theta)
    }

    fn gradient(&self, theta: &ModelVector) -> ModelVector {
        (**self).gradient(theta)
    }
}
