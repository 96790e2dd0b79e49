//! Privacy/utility sweeps over ε or the non-average level `u`, with
//! seed-averaged accuracy and optimal-gap metrics.

mod bounds;
mod metrics;
mod report;

pub use bounds::{excess_risk_bounds, theoretical_bound_report, BoundReport, CurvatureKind};
pub use metrics::{accuracy, mean_and_std_error, optimal_gap, summarize, Metric, SeriesPoint};
pub use report::{emit_report, render_svg, write_json, CsvRowWriter, ReportFormat, SweepReport};

use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{
    load_csv, partition_random, partition_two_group, train_test_split, two_gaussian_clouds,
    DatasetSpec, LabeledDataset, Partition, SyntheticSpec, DEFAULT_MIN_CLIENT_SIZE,
};
use crate::error::{Error, Result};
use crate::federation::{
    effective_sample_count, train_centralized_dp, train_centralized_nonprivate, train_distributed,
    Aggregation, NoiseScaling, NonPrivateFit, Protocol, TrainingConfig,
};
use crate::loss::{EmpiricalRisk, ExampleLoss, Logistic, RegularizedLogistic};
use crate::privacy::{
    calibrate_sigma, derive_seed, CalibrationOptions, MechanismParams, PrivacyBudget,
};
use crate::ModelVector;

/// The learning-rate grid searched by cross-validation.
pub const DEFAULT_ETA_GRID: [f64; 5] = [0.01, 0.05, 0.1, 0.5, 1.0];

const TAG_NOISE: u64 = 0;
const TAG_PARTITION: u64 = 1;
const TAG_FOLDS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Epsilon,
    U,
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVariable::Epsilon => "epsilon",
            SweepVariable::U => "u",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Distributed, `n_j/n` aggregation.
    WeightedDp,
    /// Distributed, `1/m` aggregation.
    UniformDp,
    CentralizedDp,
    CentralizedNonPrivate,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::WeightedDp,
        Method::UniformDp,
        Method::CentralizedDp,
        Method::CentralizedNonPrivate,
    ];

    fn aggregation(self) -> Option<Aggregation> {
        match self {
            Method::WeightedDp => Some(Aggregation::Weighted),
            Method::UniformDp => Some(Aggregation::Uniform),
            _ => None,
        }
    }

    fn is_private(self) -> bool {
        self != Method::CentralizedNonPrivate
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::WeightedDp => "weighted_dp",
            Method::UniformDp => "uniform_dp",
            Method::CentralizedDp => "centralized_dp",
            Method::CentralizedNonPrivate => "centralized_non_private",
        })
    }
}

/// Synthetic two-cloud data plus the train/test split applied to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub samples: usize,
    pub dim: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_separation() -> f64 {
    4.0
}

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataSource {
    Csv(DatasetSpec),
    Synthetic(SyntheticSource),
}

impl DataSource {
    /// Loads (or generates) the data and splits it into train and test sets.
    pub fn prepare(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        match self {
            DataSource::Csv(spec) => {
                let data = load_csv(spec)?;
                train_test_split(&data, spec.train_fraction, spec.shuffle_seed)
            }
            DataSource::Synthetic(s) => {
                let data = two_gaussian_clouds(&SyntheticSpec {
                    samples: s.samples,
                    dim: s.dim,
                    separation: s.separation,
                    seed: s.seed,
                })?;
                train_test_split(&data, s.train_fraction, s.seed)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossChoice {
    #[default]
    Logistic,
    /// `ℓ + (λ/2)‖θ‖²`; training projects onto the ball of radius `radius`.
    RegularizedLogistic {
        reg_lambda: f64,
        #[serde(default = "default_radius")]
        radius: f64,
    },
}

fn default_radius() -> f64 {
    crate::loss::DEFAULT_RADIUS
}

impl LossChoice {
    pub fn build(&self) -> Result<Box<dyn ExampleLoss>> {
        Ok(match *self {
            LossChoice::Logistic => Box::new(Logistic),
            LossChoice::RegularizedLogistic { reg_lambda, radius } => {
                Box::new(RegularizedLogistic::new(reg_lambda, radius)?)
            }
        })
    }
}

/// A fixed learning rate, or `"cv"` for k-fold selection over a grid.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EtaChoice {
    Fixed(f64),
    #[default]
    CrossValidated,
}

impl Serialize for EtaChoice {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EtaChoice::Fixed(v) => serializer.serialize_f64(*v),
            EtaChoice::CrossValidated => serializer.serialize_str("cv"),
        }
    }
}

impl<'de> Deserialize<'de> for EtaChoice {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Ok(EtaChoice::Fixed(v)),
            Raw::Text(s) if s == "cv" => Ok(EtaChoice::CrossValidated),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "eta must be a number or \"cv\", got {s:?}"
            ))),
        }
    }
}

/// How training rows are split across clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    /// Two size groups with ratio `u`.
    #[default]
    TwoGroup,
    /// Uniformly random sizes above the minimum; `u` is ignored.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub data: DataSource,
    #[serde(default)]
    pub loss: LossChoice,
    pub clients: usize,
    /// ε used when sweeping `u`.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Non-average level used when sweeping ε.
    #[serde(default = "default_u")]
    pub u: f64,
    /// Clients in the large group; defaults to half of them.
    #[serde(default)]
    pub group_a_count: Option<usize>,
    #[serde(default)]
    pub partition: PartitionScheme,
    #[serde(default = "default_min_client_size")]
    pub min_client_size: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub eta: EtaChoice,
    #[serde(default = "default_eta_grid")]
    pub eta_grid: Vec<f64>,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub noise_scaling: NoiseScaling,
    #[serde(default)]
    pub master_seed: u64,
    /// Gradient-descent rounds for the non-private reference optimum `θ*`.
    #[serde(default = "default_reference_rounds")]
    pub reference_rounds: usize,
    /// Wall-clock timing makes output differ between runs, so it is opt-in.
    #[serde(default)]
    pub record_runtime: bool,
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_delta() -> f64 {
    1e-3
}

fn default_u() -> f64 {
    1.0
}

fn default_min_client_size() -> usize {
    DEFAULT_MIN_CLIENT_SIZE
}

fn default_rounds() -> usize {
    1000
}

fn default_eta_grid() -> Vec<f64> {
    DEFAULT_ETA_GRID.to_vec()
}

fn default_folds() -> usize {
    3
}

fn default_reference_rounds() -> usize {
    20_000
}

impl SweepSpec {
    /// A spec with defaults for everything but the essentials.
    pub fn new(
        variable: SweepVariable,
        values: Vec<f64>,
        data: DataSource,
        clients: usize,
        methods: Vec<Method>,
        seeds: Vec<u64>,
    ) -> Self {
        Self {
            variable,
            values,
            data,
            loss: LossChoice::default(),
            clients,
            epsilon: default_epsilon(),
            delta: default_delta(),
            u: default_u(),
            group_a_count: None,
            partition: PartitionScheme::default(),
            min_client_size: default_min_client_size(),
            rounds: default_rounds(),
            methods,
            seeds,
            eta: EtaChoice::default(),
            eta_grid: default_eta_grid(),
            cv_folds: default_folds(),
            protocol: Protocol::default(),
            noise_scaling: NoiseScaling::default(),
            master_seed: 0,
            reference_rounds: default_reference_rounds(),
            record_runtime: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::domain("values", "sweep needs at least one value"));
        }
        if self.values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::domain("values", "must be sorted ascending"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("values", "must be finite"));
        }
        match self.variable {
            SweepVariable::Epsilon => {
                if let Some(e) = self.values.iter().find(|e| **e <= 0.0) {
                    return Err(Error::domain(
                        "values",
                        format!("ε must be positive, got {e}"),
                    ));
                }
            }
            SweepVariable::U => {
                if let Some(u) = self.values.iter().find(|u| **u < 1.0) {
                    return Err(Error::domain("values", format!("u must be >= 1, got {u}")));
                }
                if self.partition == PartitionScheme::Random {
                    return Err(Error::domain(
                        "partition",
                        "a u sweep needs the two-group partition",
                    ));
                }
            }
        }
        PrivacyBudget::new(self.epsilon, self.delta)?;
        if !(self.u.is_finite() && self.u >= 1.0) {
            return Err(Error::domain("u", format!("must be >= 1, got {}", self.u)));
        }
        if self.clients == 0 {
            return Err(Error::domain("clients", "need at least one client"));
        }
        if let Some(a) = self.group_a_count {
            if self.clients > 1 && !(1..self.clients).contains(&a) {
                return Err(Error::domain(
                    "group_a_count",
                    format!("must lie in 1..{}, got {a}", self.clients),
                ));
            }
        }
        if self.rounds == 0 || self.reference_rounds == 0 {
            return Err(Error::domain("rounds", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::domain("methods", "need at least one method"));
        }
        let mut methods = self.methods.clone();
        methods.sort();
        methods.dedup();
        if methods.len() != self.methods.len() {
            return Err(Error::domain("methods", "must be distinct"));
        }
        if self.seeds.is_empty() {
            return Err(Error::domain("seeds", "need at least one seed"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::domain("seeds", "must be distinct"));
        }
        match self.eta {
            EtaChoice::Fixed(eta) if !(eta.is_finite() && eta > 0.0) => {
                return Err(Error::domain("eta", format!("must be positive, got {eta}")));
            }
            EtaChoice::CrossValidated => {
                if self.eta_grid.is_empty()
                    || self.eta_grid.iter().any(|e| !(e.is_finite() && *e > 0.0))
                {
                    return Err(Error::domain("eta_grid", "needs positive values"));
                }
                if self.cv_folds < 2 {
                    return Err(Error::domain("cv_folds", "need at least 2 folds"));
                }
            }
            _ => {}
        }
        if let DataSource::Csv(d) = &self.data {
            d.validate()?;
        }
        Ok(())
    }

    fn budget_and_u(&self, value: f64) -> (f64, f64) {
        match self.variable {
            SweepVariable::Epsilon => (value, self.u),
            SweepVariable::U => (self.epsilon, value),
        }
    }

    /// The sweep value at which η is cross-validated.
    pub fn reference_value(&self) -> f64 {
        self.values[self.values.len() / 2]
    }
}

/// One (method, sweep value, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub method: Method,
    pub protocol: String,
    pub sweep_var: SweepVariable,
    pub sweep_value: f64,
    pub seed: u64,
    pub eta: Option<f64>,
    pub sigma: Option<f64>,
    pub accuracy: Option<f64>,
    pub optimal_gap: Option<f64>,
    pub runtime_ms: Option<u64>,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
}

impl SweepResult {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Data, loss and reference optimum shared by every cell of a sweep.
pub struct SweepContext {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub loss: Box<dyn ExampleLoss>,
    pub reference: NonPrivateFit,
    pub reference_risk: f64,
}

impl SweepContext {
    pub fn prepare(spec: &SweepSpec) -> Result<Self> {
        let (train, test) = spec.data.prepare()?;
        let loss = spec.loss.build()?;
        let eta = 1.0 / loss.metadata().smoothness_l;
        let reference = train_centralized_nonprivate(
            &EmpiricalRisk::new(loss.as_ref(), &train),
            spec.reference_rounds,
            eta,
        )?;
        let reference_risk = loss.risk(&reference.theta, &train);
        log::debug!(
            "reference optimum: risk {reference_risk}, ‖∇‖ = {:e}",
            reference.grad_norm
        );
        Ok(Self {
            train,
            test,
            loss,
            reference,
            reference_risk,
        })
    }
}

fn projection_radius(loss: &dyn ExampleLoss) -> Option<f64> {
    loss.metadata().certified_radius
}

/// The client partition every distributed method uses for `seed`.
pub fn client_partition(
    spec: &SweepSpec,
    train_size: usize,
    u: f64,
    seed: u64,
) -> Result<Partition> {
    let m = spec.clients;
    let partition_seed = derive_seed(spec.master_seed, &[seed, TAG_PARTITION]);
    if m == 1 {
        return Partition::even(train_size, 1, partition_seed);
    }
    match spec.partition {
        PartitionScheme::TwoGroup => {
            let a = spec.group_a_count.unwrap_or(m / 2);
            partition_two_group(train_size, m, u, a, spec.min_client_size, partition_seed)
        }
        PartitionScheme::Random => {
            partition_random(train_size, m, spec.min_client_size, partition_seed)
        }
    }
}

fn calibrated(
    spec: &SweepSpec,
    epsilon: f64,
    loss: &dyn ExampleLoss,
    samples: u64,
) -> Result<MechanismParams> {
    let budget = PrivacyBudget::new(epsilon, spec.delta)?;
    let record = calibrate_sigma(
        &budget,
        loss.metadata().lipschitz_g,
        spec.rounds as u64,
        samples,
        &CalibrationOptions::default(),
    )?;
    Ok(record.mechanism())
}

/// Trains one method on `train` at one sweep value. Returns the model and
/// the per-client noise scale.
pub fn train_method(
    spec: &SweepSpec,
    loss: &dyn ExampleLoss,
    train: &LabeledDataset,
    method: Method,
    value: f64,
    seed: u64,
    eta: f64,
) -> Result<(ModelVector, f64)> {
    let (epsilon, u) = spec.budget_and_u(value);
    let mut config = TrainingConfig::new(spec.rounds, eta);
    config.protocol = spec.protocol;
    config.noise_scaling = spec.noise_scaling;
    config.projection_radius = projection_radius(loss);
    config.seed = derive_seed(spec.master_seed, &[seed, TAG_NOISE]);

    match method.aggregation() {
        Some(aggregation) => {
            config.aggregation = aggregation;
            let partition = client_partition(spec, train.len(), u, seed)?;
            let mech = calibrated(
                spec,
                epsilon,
                loss,
                effective_sample_count(&partition, aggregation),
            )?;
            let model = train_distributed(train, &partition, loss, &config, Some(&mech))?;
            Ok((model.theta, mech.sigma))
        }
        None if method.is_private() => {
            let mech = calibrated(spec, epsilon, loss, train.len() as u64)?;
            Ok((
                train_centralized_dp(train, loss, &config, Some(&mech))?,
                mech.sigma,
            ))
        }
        None => Ok((train_centralized_dp(train, loss, &config, None)?, 0.0)),
    }
}

/// Mean held-out accuracy of each η in the grid under k-fold splits of the
/// training set, for `method` at the spec's reference value and first seed.
pub fn cross_validate_eta(
    spec: &SweepSpec,
    ctx: &SweepContext,
    method: Method,
) -> Result<(f64, Vec<f64>)> {
    let n = ctx.train.len();
    let k = spec.cv_folds;
    if n < k {
        return Err(Error::domain(
            "cv_folds",
            format!("{k} folds need at least {k} training rows"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(derive_seed(
        spec.master_seed,
        &[TAG_FOLDS],
    )));
    let folds: Vec<(LabeledDataset, LabeledDataset)> = (0..k)
        .map(|f| {
            let (held, kept): (Vec<_>, Vec<_>) = order
                .iter()
                .copied()
                .enumerate()
                .partition(|(i, _)| i % k == f);
            let kept: Vec<usize> = kept.into_iter().map(|(_, r)| r).collect();
            let held: Vec<usize> = held.into_iter().map(|(_, r)| r).collect();
            (ctx.train.select(&kept), ctx.train.select(&held))
        })
        .collect();

    let value = spec.reference_value();
    let seed = spec.seeds[0];
    let jobs: Vec<(usize, usize)> = (0..spec.eta_grid.len())
        .flat_map(|e| (0..k).map(move |f| (e, f)))
        .collect();
    let scores: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(e, f)| {
            let (fit, held) = &folds[f];
            let (theta, _) = train_method(
                spec,
                ctx.loss.as_ref(),
                fit,
                method,
                value,
                seed,
                spec.eta_grid[e],
            )?;
            accuracy(&theta, held)
        })
        .collect();

    let mut means = vec![0.0; spec.eta_grid.len()];
    for ((e, _), score) in jobs.iter().zip(scores) {
        means[*e] += score? / k as f64;
    }
    let best = means
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > means[best] { i } else { best });
    Ok((spec.eta_grid[best], means))
}

fn failed_row(
    spec: &SweepSpec,
    method: Method,
    value: f64,
    seed: u64,
    eta: Option<f64>,
    err: &Error,
) -> SweepResult {
    SweepResult {
        method,
        protocol: protocol_tag(spec, method),
        sweep_var: spec.variable,
        sweep_value: value,
        seed,
        eta,
        sigma: None,
        accuracy: None,
        optimal_gap: None,
        runtime_ms: None,
        status: format!("failed: {err}"),
    }
}

fn protocol_tag(spec: &SweepSpec, method: Method) -> String {
    match method.aggregation() {
        Some(_) => spec.protocol.to_string(),
        None => "centralized".to_string(),
    }
}

/// Runs every (method, value, seed) cell and returns the rows in that order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepResult>> {
    run_sweep_with(spec, |_| Ok(()))
}

/// [`run_sweep`] that hands each row to `sink` as soon as its
/// (method, value) group finishes, still in deterministic order.
///
/// Cells that fail (for example an infeasible calibration) are recorded with
/// a `failed` status; only setup errors abort the sweep.
pub fn run_sweep_with<F>(spec: &SweepSpec, mut sink: F) -> Result<Vec<SweepResult>>
where
    F: FnMut(&SweepResult) -> Result<()>,
{
    spec.validate()?;
    let ctx = SweepContext::prepare(spec)?;
    let mut rows = Vec::with_capacity(spec.methods.len() * spec.values.len() * spec.seeds.len());

    for &method in &spec.methods {
        let eta = match spec.eta {
            EtaChoice::Fixed(eta) => Ok(eta),
            EtaChoice::CrossValidated => {
                cross_validate_eta(spec, &ctx, method).map(|(eta, scores)| {
                    log::info!("{method}: η = {eta} (cv accuracy {scores:?})");
                    eta
                })
            }
        };
        for &value in &spec.values {
            let group: Vec<SweepResult> = match &eta {
                Err(err) => spec
                    .seeds
                    .iter()
                    .map(|&s| failed_row(spec, method, value, s, None, err))
                    .collect(),
                Ok(eta) => spec
                    .seeds
                    .par_iter()
                    .map(|&seed| run_cell(spec, &ctx, method, value, seed, *eta).0)
                    .collect(),
            };
            for row in group {
                sink(&row)?;
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Trains and evaluates one cell. The model is returned when training
/// succeeded.
pub fn run_cell(
    spec: &SweepSpec,
    ctx: &SweepContext,
    method: Method,
    value: f64,
    seed: u64,
    eta: f64,
) -> (SweepResult, Option<ModelVector>) {
    let start = Instant::now();
    let outcome = train_method(
        spec,
        ctx.loss.as_ref(),
        &ctx.train,
        method,
        value,
        seed,
        eta,
    )
    .and_then(|(theta, sigma)| {
        let acc = accuracy(&theta, &ctx.test)?;
        let gap = optimal_gap(&theta, &ctx.reference.theta, &ctx.train, ctx.loss.as_ref())?;
        Ok((theta, sigma, acc, gap))
    });
    match outcome {
        Ok((theta, sigma, acc, gap)) => (
            SweepResult {
                method,
                protocol: protocol_tag(spec, method),
                sweep_var: spec.variable,
                sweep_value: value,
                seed,
                eta: Some(eta),
                sigma: Some(sigma),
                accuracy: Some(acc),
                optimal_gap: Some(gap),
                runtime_ms: spec
                    .record_runtime
                    .then(|| start.elapsed().as_millis() as u64),
                status: "ok".to_string(),
            },
            Some(theta),
        ),
        Err(err) => {
            log::warn!("{method} at {}={value}, seed {seed}: {err}", spec.variable);
            (failed_row(spec, method, value, seed, Some(eta), &err), None)
        }
    }
}
