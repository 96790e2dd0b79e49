use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Method, SweepResult};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::loss::{sigmoid, ExampleLoss};
use crate::ModelVector;

/// Fraction of `test` rows whose prediction `h(x·θ) ≥ 0.5` matches the label.
pub fn accuracy(theta: &ModelVector, test: &LabeledDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Data("accuracy needs a non-empty test set".into()));
    }
    if theta.len() != test.dim() {
        return Err(Error::Dimension {
            expected: test.dim(),
            actual: theta.len(),
        });
    }
    let scores = test.features().dot(theta);
    let correct = scores
        .iter()
        .zip(test.labels())
        .filter(|(z, y)| {
            let predicted = if sigmoid(**z) >= 0.5 { 1.0 } else { 0.0 };
            predicted == **y
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// `L_D(θ) − L_D(θ*)` on the pooled training set.
pub fn optimal_gap<L: ExampleLoss + ?Sized>(
    theta: &ModelVector,
    theta_star: &ModelVector,
    train: &LabeledDataset,
    loss: &L,
) -> Result<f64> {
    if theta.len() != theta_star.len() {
        return Err(Error::Dimension {
            expected: theta_star.len(),
            actual: theta.len(),
        });
    }
    let gap = loss.risk(theta, train) - loss.risk(theta_star, train);
    if gap < -1e-6 {
        log::warn!("optimal gap {gap:e} is negative: the reference optimum has not converged");
    }
    Ok(gap)
}

/// Sample mean and standard error of the mean. One value has zero error.
pub fn mean_and_std_error(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    OptimalGap,
}

impl Metric {
    pub fn of(self, row: &SweepResult) -> Option<f64> {
        match self {
            Metric::Accuracy => row.accuracy,
            Metric::OptimalGap => row.optimal_gap,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::OptimalGap => "optimal gap",
        }
    }
}

/// Seed-averaged metric of one method at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub method: Method,
    pub sweep_value: f64,
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

/// Mean ± standard error over seeds per (method, sweep value), skipping
/// failed cells. Ordered by method, then value.
pub fn summarize(results: &[SweepResult], metric: Metric) -> Vec<SeriesPoint> {
    let mut groups: BTreeMap<(Method, u64), Vec<f64>> = BTreeMap::new();
    for row in results {
        if let (true, Some(v)) = (row.is_ok(), metric.of(row)) {
            groups
                .entry((row.method, ordered_bits(row.sweep_value)))
                .or_default()
                .push(v);
        }
    }
    groups
        .into_iter()
        .filter_map(|((method, bits), values)| {
            let (mean, std_error) = mean_and_std_error(&values)?;
            Some(SeriesPoint {
                method,
                sweep_value: from_ordered_bits(bits),
                mean,
                std_error,
                count: values.len(),
            })
        })
        .collect()
}

// order-preserving map of finite f64 onto u64, so values can key a BTreeMap
fn ordered_bits(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn from_ordered_bits(b: u64) -> f64 {
    if b >> 63 == 1 {
        f64::from_bits(b & !(1 << 63))
    } else {
        f64::from_bits(!b)
    }
}
