//! Simulated clients and a trusted server running noisy full-batch gradient
//! descent, with weighted (`n_j/n`) or uniform (`1/m`) aggregation.

mod trace;
mod trainer;

pub use trace::{write_trace_csv, TraceNode, TraceRecord};
pub use trainer::{
    client_noisy_step, run_federation, train_centralized_dp, train_centralized_nonprivate,
    train_distributed, train_distributed_traced, ClientState, NonPrivateFit, Shard,
    CONVERGENCE_TOLERANCE,
};

use serde::{Deserialize, Serialize};

use crate::data::Partition;
use crate::error::{Error, Result};
use crate::ModelVector;

/// How the server combines client models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// `Σ (n_j/n) θ_j`.
    Weighted,
    /// `(1/m) Σ θ_j`.
    Uniform,
}

/// When the server aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Every round: all clients step from the shared model, the server
    /// averages the one-step models.
    #[default]
    SyncEveryRound,
    /// Clients run all rounds locally from the common start; the server
    /// aggregates once at the end.
    LocalThenAggregate,
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Aggregation::Weighted => "weighted",
            Aggregation::Uniform => "uniform",
        })
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::SyncEveryRound => "sync_every_round",
            Protocol::LocalThenAggregate => "local_then_aggregate",
        })
    }
}

/// How the per-client noise scale relates to the calibrated `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScaling {
    /// Clients add `N(0, (σ²/Σw_j²) I)` so the aggregated noise is exactly
    /// `N(0, σ² I)`, the distribution the privacy accounting assumes for the
    /// released aggregate.
    #[default]
    Aggregate,
    /// Every client adds `N(0, σ² I)`; the aggregate then carries only
    /// `σ² Σw_j²`.
    PerClient,
}

impl std::fmt::Display for NoiseScaling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseScaling::Aggregate => "aggregate",
            NoiseScaling::PerClient => "per_client",
        })
    }
}

/// Per-client noise scale that yields calibrated `sigma` under `scaling`.
pub fn client_sigma(sizes: &[usize], mode: Aggregation, scaling: NoiseScaling, sigma: f64) -> f64 {
    match scaling {
        NoiseScaling::PerClient => sigma,
        NoiseScaling::Aggregate => {
            let sum_sq: f64 = aggregation_weights(sizes, mode).iter().map(|w| w * w).sum();
            sigma / sum_sq.sqrt()
        }
    }
}

/// Starting point of training.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Initialization {
    #[default]
    Zero,
    /// Seeded uniform draw from `[−half_width, half_width]^p`.
    Uniform {
        half_width: f64,
    },
    Fixed {
        theta: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    #[serde(default = "default_aggregation")]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub noise_scaling: NoiseScaling,
    #[serde(default)]
    pub projection_radius: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init: Initialization,
}

fn default_aggregation() -> Aggregation {
    Aggregation::Weighted
}

impl TrainingConfig {
    pub fn new(rounds: usize, learning_rate: f64) -> Self {
        Self {
            rounds,
            learning_rate,
            aggregation: Aggregation::Weighted,
            protocol: Protocol::SyncEveryRound,
            noise_scaling: NoiseScaling::Aggregate,
            projection_radius: None,
            seed: 0,
            init: Initialization::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::domain("rounds", "must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::domain(
                "learning_rate",
                format!("must be positive, got {}", self.learning_rate),
            ));
        }
        if let Some(r) = self.projection_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::domain(
                    "projection_radius",
                    format!("must be positive, got {r}"),
                ));
            }
        }
        if let Initialization::Uniform { half_width } = self.init {
            if !(half_width.is_finite() && half_width >= 0.0) {
                return Err(Error::domain(
                    "init.half_width",
                    "must be finite and non-negative",
                ));
            }
        }
        Ok(())
    }
}

/// The server's model after `round` rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalModel {
    pub theta: ModelVector,
    pub round: usize,
}

/// Aggregation weights for the given shard sizes.
pub fn aggregation_weights(sizes: &[usize], mode: Aggregation) -> Vec<f64> {
    match mode {
        Aggregation::Weighted => {
            let total = sizes.iter().sum::<usize>() as f64;
            sizes.iter().map(|&s| s as f64 / total).collect()
        }
        Aggregation::Uniform => vec![1.0 / sizes.len() as f64; sizes.len()],
    }
}

/// Server-side combination of client models, reduced in client-index order.
pub fn aggregate(
    models: &[ModelVector],
    sizes: &[usize],
    mode: Aggregation,
) -> Result<ModelVector> {
    if models.is_empty() {
        return Err(Error::domain("models", "nothing to aggregate"));
    }
    if models.len() != sizes.len() {
        return Err(Error::Dimension {
            expected: models.len(),
            actual: sizes.len(),
        });
    }
    if sizes.contains(&0) {
        return Err(Error::domain("sizes", "client sizes must be positive"));
    }
    let dim = models[0].len();
    if let Some(bad) = models.iter().find(|m| m.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            actual: bad.len(),
        });
    }
    let mut out = ModelVector::zeros(dim);
    for (model, w) in models.iter().zip(aggregation_weights(sizes, mode)) {
        out.scaled_add(w, model);
    }
    Ok(out)
}

/// Number of records `n` whose swap bounds the sensitivity `2G/n` of the
/// aggregated per-round gradient.
///
/// Weighted aggregation releases the pooled gradient, so `n = Σ n_j`.
/// Uniform aggregation gives each record of client `j` weight `1/(m n_j)`,
/// so the worst case is `m · n_min`.
pub fn effective_sample_count(partition: &Partition, mode: Aggregation) -> u64 {
    match mode {
        Aggregation::Weighted => partition.total as u64,
        Aggregation::Uniform => (partition.num_clients() * partition.min_size()) as u64,
    }
}

/// Per-coordinate variance of the aggregated noise when every client adds
/// independent `N(0, σ²)`: `σ² Σ w_j²`.
pub fn aggregate_noise_variance(sizes: &[usize], mode: Aggregation, sigma: f64) -> f64 {
    sigma
        * sigma
        * aggregation_weights(sizes, mode)
            .iter()
            .map(|w| w * w)
            .sum::<f64>()
}

/// Projects onto the ℓ2 ball of the given radius.
pub fn project_to_ball(theta: &mut ModelVector, radius: Option<f64>) {
    if let Some(r) = radius {
        let norm = theta.dot(theta).sqrt();
        if norm > r {
            *theta *= r / norm;
        }
    }
}
