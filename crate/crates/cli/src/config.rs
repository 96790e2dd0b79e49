//! The TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wddp_core::data::DEFAULT_MIN_CLIENT_SIZE;
use wddp_core::experiment::{
    DataSource, EtaChoice, LossChoice, Method, PartitionScheme, SweepSpec, SweepVariable,
    DEFAULT_ETA_GRID,
};
use wddp_core::federation::{NoiseScaling, Protocol};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub data: Option<DataSource>,
    #[serde(default)]
    pub loss: LossChoice,
    pub privacy: Option<PrivacyBlock>,
    pub train: Option<TrainBlock>,
    pub sweep: Option<SweepBlock>,
    pub verify: Option<VerifyBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyBlock {
    pub epsilon: f64,
    pub delta: f64,
    /// Overrides the loss's certified `G`.
    #[serde(default)]
    pub lipschitz_g: Option<f64>,
    /// `T`; defaults to the train or sweep block's rounds.
    #[serde(default)]
    pub rounds: Option<u64>,
    /// `n`; defaults to the training-set size.
    #[serde(default)]
    pub samples: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainBlock {
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    pub eta: EtaChoice,
    #[serde(default = "default_eta_grid")]
    pub eta_grid: Vec<f64>,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_clients")]
    pub clients: usize,
    #[serde(default = "default_u")]
    pub u: f64,
    #[serde(default)]
    pub group_a_count: Option<usize>,
    #[serde(default)]
    pub partition: PartitionScheme,
    #[serde(default = "default_min_client_size")]
    pub min_client_size: usize,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub noise_scaling: NoiseScaling,
    #[serde(default = "default_reference_rounds")]
    pub reference_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub eta: EtaChoice,
    #[serde(default = "default_eta_grid")]
    pub eta_grid: Vec<f64>,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    #[serde(default = "default_clients")]
    pub clients: usize,
    #[serde(default = "default_u")]
    pub u: f64,
    #[serde(default)]
    pub group_a_count: Option<usize>,
    #[serde(default)]
    pub partition: PartitionScheme,
    #[serde(default = "default_min_client_size")]
    pub min_client_size: usize,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub noise_scaling: NoiseScaling,
    #[serde(default = "default_reference_rounds")]
    pub reference_rounds: usize,
    #[serde(default)]
    pub record_runtime: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logistic,
    RegularizedLogistic,
    PlScalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    pub family: Family,
    /// Random parameter points per check.
    #[serde(default = "default_verify_samples")]
    pub samples: usize,
    /// Radius of the ball the parameter points are drawn from.
    #[serde(default = "default_verify_radius")]
    pub radius: f64,
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

fn default_method() -> Method {
    Method::WeightedDp
}

fn default_clients() -> usize {
    1
}

fn default_u() -> f64 {
    1.0
}

fn default_min_client_size() -> usize {
    DEFAULT_MIN_CLIENT_SIZE
}

fn default_reference_rounds() -> usize {
    20_000
}

fn default_verify_samples() -> usize {
    200
}

fn default_verify_radius() -> f64 {
    10.0
}

/// Parses `text` after applying `key.path=value` overrides.
pub fn parse(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| CliError::config(format!("invalid TOML: {e}")))?;
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::config(e.message().to_string()))
}

pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text, overrides)
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item.split_once('=').ok_or_else(|| {
        CliError::config(format!(
            "override `{item}` is not of the form key.path=value"
        ))
    })?;
    let value = parse_value(raw.trim());
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| CliError::config(format!("empty key in `{item}`")))?;
    let mut node = table;
    for part in parts {
        node = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("`{part}` in `{key}` is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.train.is_some() && self.sweep.is_some() {
            return Err(CliError::config(
                "config has both [train] and [sweep]; keep exactly one",
            ));
        }
        if let Some(DataSource::Csv(spec)) = &self.data {
            if !spec.path.is_file() {
                return Err(CliError::config(format!(
                    "dataset {} does not exist",
                    spec.path.display()
                )));
            }
            spec.validate().map_err(CliError::config)?;
        }
        if let Some(p) = &self.privacy {
            wddp_core::privacy::PrivacyBudget::new(p.epsilon, p.delta).map_err(CliError::config)?;
        }
        Ok(())
    }

    pub fn data(&self) -> Result<&DataSource, CliError> {
        self.data
            .as_ref()
            .ok_or_else(|| CliError::config("config needs a [data] block"))
    }

    pub fn privacy(&self) -> Result<&PrivacyBlock, CliError> {
        self.privacy
            .as_ref()
            .ok_or_else(|| CliError::config("config needs a [privacy] block"))
    }

    /// The sweep described by the `[sweep]` block.
    pub fn sweep_spec(&self) -> Result<SweepSpec, CliError> {
        let block = self
            .sweep
            .as_ref()
            .ok_or_else(|| CliError::config("config needs a [sweep] block"))?;
        let privacy = self.privacy()?;
        let mut spec = SweepSpec::new(
            block.variable,
            block.values.clone(),
            self.data()?.clone(),
            block.clients,
            block.methods.clone(),
            block.seeds.clone(),
        );
        spec.loss = self.loss;
        spec.epsilon = privacy.epsilon;
        spec.delta = privacy.delta;
        spec.u = block.u;
        spec.group_a_count = block.group_a_count;
        spec.partition = block.partition;
        spec.min_client_size = block.min_client_size;
        spec.rounds = block.rounds;
        spec.eta = block.eta;
        spec.eta_grid = block.eta_grid.clone();
        spec.cv_folds = block.cv_folds;
        spec.protocol = block.protocol;
        spec.noise_scaling = block.noise_scaling;
        spec.master_seed = self.master_seed;
        spec.reference_rounds = block.reference_rounds;
        spec.record_runtime = block.record_runtime;
        spec.validate().map_err(CliError::config)?;
        Ok(spec)
    }

    /// A single-value, single-seed sweep at the `[train]` block's settings,
    /// plus the method it runs.
    pub fn train_spec(&self) -> Result<(SweepSpec, Method), CliError> {
        let block = self
            .train
            .as_ref()
            .ok_or_else(|| CliError::config("config needs a [train] block"))?;
        let privacy = self.privacy()?;
        let mut spec = SweepSpec::new(
            SweepVariable::Epsilon,
            vec![privacy.epsilon],
            self.data()?.clone(),
            block.clients,
            vec![block.method],
            vec![0],
        );
        spec.loss = self.loss;
        spec.epsilon = privacy.epsilon;
        spec.delta = privacy.delta;
        spec.u = block.u;
        spec.group_a_count = block.group_a_count;
        spec.partition = block.partition;
        spec.min_client_size = block.min_client_size;
        spec.rounds = block.rounds;
        spec.eta = block.eta;
        spec.eta_grid = block.eta_grid.clone();
        spec.cv_folds = block.cv_folds;
        spec.protocol = block.protocol;
        spec.noise_scaling = block.noise_scaling;
        spec.master_seed = self.master_seed;
        spec.reference_rounds = block.reference_rounds;
        spec.validate().map_err(CliError::config)?;
        Ok((spec, block.method))
    }

    /// Rounds `T` used by calibration when the privacy block leaves it out.
    pub fn rounds(&self) -> u64 {
        self.privacy
            .as_ref()
            .and_then(|p| p.rounds)
            .or(self.train.as_ref().map(|t| t.rounds as u64))
            .or(self.sweep.as_ref().map(|s| s.rounds as u64))
            .unwrap_or(default_rounds() as u64)
    }
}
