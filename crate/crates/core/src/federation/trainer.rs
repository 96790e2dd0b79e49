use rand::Rng;
use rayon::prelude::*;

use super::{
    aggregate, aggregation_weights, client_sigma, effective_sample_count, project_to_ball,
    Aggregation, GlobalModel, Initialization, Protocol, TraceNode, TraceRecord, TrainingConfig,
};
use crate::data::{LabeledDataset, Partition};
use crate::error::{Error, Result};
use crate::loss::{EmpiricalRisk, ExampleLoss, Objective};
use crate::privacy::{MechanismParams, NoiseStream};
use crate::ModelVector;

/// A client's local objective `L_{D_j}` and its size `n_j`.
#[derive(Debug, Clone)]
pub struct Shard<O> {
    pub objective: O,
    pub size: usize,
}

/// Per-client training state: local iterate and private noise stream.
#[derive(Debug)]
pub struct ClientState<'a, O: ?Sized> {
    pub index: usize,
    pub objective: &'a O,
    pub size: usize,
    pub theta: ModelVector,
    noise: NoiseStream,
}

impl<'a, O: Objective + ?Sized> ClientState<'a, O> {
    /// Client `index` draws noise from stream `index` of `seed`.
    pub fn new(index: usize, objective: &'a O, size: usize, theta: ModelVector, seed: u64) -> Self {
        Self {
            index,
            objective,
            size,
            theta,
            noise: NoiseStream::new(seed, index as u64),
        }
    }
}

/// `θ − η(∇L_{D_j}(θ) + z)` with fresh `z ~ N(0, σ²I)` from the client's
/// stream, projected when a radius is given.
pub fn client_noisy_step<O: Objective + ?Sized>(
    state: &mut ClientState<'_, O>,
    theta: &ModelVector,
    eta: f64,
    sigma: f64,
    projection_radius: Option<f64>,
) -> ModelVector {
    let mut step = state.objective.gradient(theta);
    step += &state.noise.gaussian(sigma, theta.len());
    let mut next = theta.clone();
    next.scaled_add(-eta, &step);
    project_to_ball(&mut next, projection_radius);
    next
}

fn initial_theta(config: &TrainingConfig, dim: usize) -> Result<ModelVector> {
    match &config.init {
        Initialization::Zero => Ok(ModelVector::zeros(dim)),
        Initialization::Uniform { half_width } => {
            let mut stream = NoiseStream::new(config.seed, u64::MAX);
            let rng = stream.rng();
            Ok(ModelVector::from_shape_fn(dim, |_| {
                if *half_width == 0.0 {
                    0.0
                } else {
                    rng.random_range(-half_width..=*half_width)
                }
            }))
        }
        Initialization::Fixed { theta } => {
            if theta.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: theta.len(),
                });
            }
            Ok(ModelVector::from(theta.clone()))
        }
    }
}

/// Loss and gradient norm of the pooled objective `Σ (n_j/n) L_{D_j}`.
fn pooled_metrics<O: Objective>(shards: &[Shard<O>], theta: &ModelVector) -> (f64, f64) {
    let sizes: Vec<usize> = shards.iter().map(|s| s.size).collect();
    let weights = aggregation_weights(&sizes, Aggregation::Weighted);
    let mut loss = 0.0;
    let mut grad = ModelVector::zeros(theta.len());
    for (shard, w) in shards.iter().zip(weights) {
        loss += w * shard.objective.value(theta);
        grad.scaled_add(w, &shard.objective.gradient(theta));
    }
    (loss, grad.dot(&grad).sqrt())
}

fn trace_row<O: Objective>(
    shards: &[Shard<O>],
    theta: &ModelVector,
    round: usize,
    node: TraceNode,
) -> TraceRecord {
    let (loss, grad_norm) = pooled_metrics(shards, theta);
    TraceRecord {
        round,
        client_or_server: node,
        loss_on_pooled_train: loss,
        grad_norm,
    }
}

/// Runs the configured protocol over the shards with noise calibrated to
/// `σ`; [`TrainingConfig::noise_scaling`] sets what each client adds.
///
/// Clients may step in parallel; every reduction runs in client-index order
/// so results do not depend on scheduling.
pub fn run_federation<O: Objective + Send>(
    shards: &[Shard<O>],
    config: &TrainingConfig,
    sigma: f64,
    mut trace: Option<&mut Vec<TraceRecord>>,
) -> Result<GlobalModel> {
    config.validate()?;
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::domain(
            "sigma",
            format!("must be finite and non-negative, got {sigma}"),
        ));
    }
    let first = shards
        .first()
        .ok_or_else(|| Error::domain("shards", "need at least one client"))?;
    let dim = first.objective.dim();
    if let Some(bad) = shards.iter().find(|s| s.objective.dim() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            actual: bad.objective.dim(),
        });
    }
    if shards.iter().any(|s| s.size == 0) {
        return Err(Error::domain(
            "shards",
            "every client needs a non-empty shard",
        ));
    }

    let sizes: Vec<usize> = shards.iter().map(|s| s.size).collect();
    let sigma = client_sigma(&sizes, config.aggregation, config.noise_scaling, sigma);
    let theta0 = initial_theta(config, dim)?;
    let mut clients: Vec<ClientState<'_, O>> = shards
        .iter()
        .enumerate()
        .map(|(j, s)| ClientState::new(j, &s.objective, s.size, theta0.clone(), config.seed))
        .collect();
    let eta = config.learning_rate;
    let radius = config.projection_radius;

    let theta = match config.protocol {
        Protocol::SyncEveryRound => {
            let mut theta = theta0;
            for round in 1..=config.rounds {
                // Clients do not project; the server projects the average so
                // this equals one projected step along the mean noisy gradient.
                let steps: Vec<ModelVector> = clients
                    .par_iter_mut()
                    .map(|c| client_noisy_step(c, &theta, eta, sigma, None))
                    .collect();
                theta = aggregate(&steps, &sizes, config.aggregation)?;
                project_to_ball(&mut theta, radius);
                if let Some(t) = trace.as_deref_mut() {
                    t.push(trace_row(shards, &theta, round, TraceNode::Server));
                }
            }
            theta
        }
        Protocol::LocalThenAggregate => {
            let tracing = trace.is_some();
            let local_traces: Vec<Vec<TraceRecord>> = clients
                .par_iter_mut()
                .map(|c| {
                    let mut rows = Vec::new();
                    for round in 1..=config.rounds {
                        let current = std::mem::take(&mut c.theta);
                        c.theta = client_noisy_step(c, &current, eta, sigma, radius);
                        if tracing {
                            rows.push(trace_row(
                                shards,
                                &c.theta,
                                round,
                                TraceNode::Client(c.index),
                            ));
                        }
                    }
                    rows
                })
                .collect();
            let finals: Vec<ModelVector> = clients.iter().map(|c| c.theta.clone()).collect();
            let mut theta = aggregate(&finals, &sizes, config.aggregation)?;
            project_to_ball(&mut theta, radius);
            if let Some(t) = trace.as_mut() {
                let mut rows: Vec<TraceRecord> = local_traces.into_iter().flatten().collect();
                rows.sort_by_key(|r| match r.client_or_server {
                    TraceNode::Client(j) => (r.round, j),
                    TraceNode::Server => (r.round, usize::MAX),
                });
                t.extend(rows);
                t.push(trace_row(shards, &theta, config.rounds, TraceNode::Server));
            }
            theta
        }
    };
    Ok(GlobalModel {
        theta,
        round: config.rounds,
    })
}

fn check_mechanism(privacy: &MechanismParams, rounds: usize, expected_samples: u64) -> Result<f64> {
    privacy.validate()?;
    if privacy.total_rounds != rounds as u64 {
        return Err(Error::domain(
            "privacy.total_rounds",
            format!(
                "noise calibrated for {} rounds but training runs {rounds}",
                privacy.total_rounds
            ),
        ));
    }
    if privacy.total_samples != expected_samples {
        return Err(Error::domain(
            "privacy.total_samples",
            format!(
                "noise calibrated for n = {} but this aggregation needs n = {expected_samples}",
                privacy.total_samples
            ),
        ));
    }
    Ok(privacy.sigma)
}

fn shards_for<'a, L: ExampleLoss + ?Sized>(
    shard_data: &'a [LabeledDataset],
    loss: &'a L,
) -> Vec<Shard<EmpiricalRisk<'a, L>>> {
    shard_data
        .iter()
        .map(|d| Shard {
            objective: EmpiricalRisk::new(loss, d),
            size: d.len(),
        })
        .collect()
}

/// Distributed training over `train` split according to `partition`.
///
/// `privacy = None` trains without noise. Otherwise the mechanism must be
/// calibrated for `config.rounds` rounds and for the sample count
/// [`effective_sample_count`] gives for the chosen aggregation.
pub fn train_distributed<L: ExampleLoss + ?Sized>(
    train: &LabeledDataset,
    partition: &Partition,
    loss: &L,
    config: &TrainingConfig,
    privacy: Option<&MechanismParams>,
) -> Result<GlobalModel> {
    train_distributed_traced(train, partition, loss, config, privacy, None)
}

/// [`train_distributed`] that also records a per-round trace.
pub fn train_distributed_traced<L: ExampleLoss + ?Sized>(
    train: &LabeledDataset,
    partition: &Partition,
    loss: &L,
    config: &TrainingConfig,
    privacy: Option<&MechanismParams>,
    trace: Option<&mut Vec<TraceRecord>>,
) -> Result<GlobalModel> {
    if partition.total != train.len() {
        return Err(Error::Dimension {
            expected: train.len(),
            actual: partition.total,
        });
    }
    partition.check()?;
    let sigma = match privacy {
        Some(p) => check_mechanism(
            p,
            config.rounds,
            effective_sample_count(partition, config.aggregation),
        )?,
        None => 0.0,
    };
    let shard_data: Vec<LabeledDataset> = partition
        .assignments
        .iter()
        .map(|rows| train.select(rows))
        .collect();
    run_federation(&shards_for(&shard_data, loss), config, sigma, trace)
}

/// Single-party noisy full-batch gradient descent; the `m = 1` case of
/// [`train_distributed`].
pub fn train_centralized_dp<L: ExampleLoss + ?Sized>(
    data: &LabeledDataset,
    loss: &L,
    config: &TrainingConfig,
    privacy: Option<&MechanismParams>,
) -> Result<ModelVector> {
    if data.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    let sigma = match privacy {
        Some(p) => check_mechanism(p, config.rounds, data.len() as u64)?,
        None => 0.0,
    };
    let shards = [Shard {
        objective: EmpiricalRisk::new(loss, data),
        size: data.len(),
    }];
    Ok(run_federation(&shards, config, sigma, None)?.theta)
}

/// Result of noiseless gradient descent used as the reference optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct NonPrivateFit {
    pub theta: ModelVector,
    pub initial_grad_norm: f64,
    pub grad_norm: f64,
    pub converged: bool,
}

/// Gradient-norm threshold below which the reference fit counts as converged.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-6;

/// Plain full-batch gradient descent from the origin.
pub fn train_centralized_nonprivate<O: Objective + ?Sized>(
    objective: &O,
    rounds: usize,
    eta: f64,
) -> Result<NonPrivateFit> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::domain("eta", format!("must be positive, got {eta}")));
    }
    let mut theta = ModelVector::zeros(objective.dim());
    let initial = objective.gradient(&theta);
    let initial_grad_norm = initial.dot(&initial).sqrt();
    let mut grad = initial;
    for _ in 0..rounds {
        theta.scaled_add(-eta, &grad);
        grad = objective.gradient(&theta);
    }
    let grad_norm = grad.dot(&grad).sqrt();
    let converged = grad_norm <= CONVERGENCE_TOLERANCE;
    if !converged {
        log::warn!("reference optimum not converged: ‖∇L‖ = {grad_norm:e} after {rounds} rounds");
    }
    Ok(NonPrivateFit {
        theta,
        initial_grad_norm,
        grad_norm,
        converged,
    })
}
