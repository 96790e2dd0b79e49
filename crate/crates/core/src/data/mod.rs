//! Datasets, CSV ingestion, train/test splits and client partitions.

mod csv;
mod partition;
mod split;
mod synthetic;

pub use self::csv::{load_csv, DatasetSpec};
pub use partition::{partition_random, partition_two_group, Partition, DEFAULT_MIN_CLIENT_SIZE};
pub use split::train_test_split;
pub use synthetic::{two_gaussian_clouds, SyntheticSpec};

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Slack allowed on the unit row-norm contract.
pub const ROW_NORM_SLACK: f64 = 1e-12;

/// Binary-labelled feature matrix. Labels are exactly 0.0 or 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Array1<f64>,
}

impl LabeledDataset {
    /// Builds a dataset whose rows lie in the unit ℓ2 ball, the
    /// precondition for the `G = 1` logistic certificate.
    pub fn new(features: Array2<f64>, labels: Array1<f64>) -> Result<Self> {
        let data = Self::new_unnormalized(features, labels)?;
        if let Some((row, norm)) = data.first_row_outside_unit_ball() {
            return Err(Error::Data(format!(
                "row {row} has norm {norm} > 1; normalize features first"
            )));
        }
        Ok(data)
    }

    /// Builds a dataset without the row-norm check. Shapes, finiteness and
    /// binary labels are still enforced.
    pub fn new_unnormalized(features: Array2<f64>, labels: Array1<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Dimension {
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|y| **y != 0.0 && **y != 1.0) {
            return Err(Error::Data(format!("label {bad} is not binary")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("features contain non-finite values".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &Array1<f64> {
        &self.labels
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = (ArrayView1<'_, f64>, f64)> {
        self.features.outer_iter().zip(self.labels.iter().copied())
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Copy with row `i` replaced; used to build adjacent datasets.
    pub fn with_row_replaced(&self, i: usize, x: ArrayView1<'_, f64>, y: f64) -> Result<Self> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let mut out = self.clone();
        out.features.row_mut(i).assign(&x);
        out.labels[i] = y;
        Self::new_unnormalized(out.features, out.labels)
    }

    pub fn max_row_norm(&self) -> f64 {
        self.features
            .outer_iter()
            .map(|r| r.dot(&r).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn first_row_outside_unit_ball(&self) -> Option<(usize, f64)> {
        self.features
            .outer_iter()
            .map(|r| r.dot(&r).sqrt())
            .enumerate()
            .find(|(_, norm)| *norm > 1.0 + ROW_NORM_SLACK)
    }

    /// Divides every row by the largest row norm so the largest row has
    /// unit norm. A dataset already at unit max norm is left untouched.
    pub fn normalize_rows(mut self) -> Self {
        let max = self.max_row_norm();
        if max > 0.0 && (max - 1.0).abs() > ROW_NORM_SLACK {
            self.features.mapv_inplace(|v| v / max);
        }
        self
    }

    /// Fraction of labels equal to 1.
    pub fn positive_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.labels.sum() / self.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_non_binary_labels() {
        let err = LabeledDataset::new(array![[0.1], [0.2]], array![0.0, 2.0]).unwrap_err();
        assert!(err.to_string().contains('2'));
    }

    #[test]
    fn rejects_rows_outside_the_ball() {
        assert!(LabeledDataset::new(array![[3.0, 4.0]], array![1.0]).is_err());
        assert!(LabeledDataset::new_unnormalized(array![[3.0, 4.0]], array![1.0]).is_ok());
    }

    #[test]
    fn normalization_divides_by_max_norm() {
        let data =
            LabeledDataset::new_unnormalized(array![[3.0, 4.0], [0.0, 0.0]], array![1.0, 0.0])
                .unwrap()
                .normalize_rows();
        assert_eq!(data.features(), &array![[0.6, 0.8], [0.0, 0.0]]);
    }

    #[test]
    fn normalization_is_idempotent() {
        let once = LabeledDataset::new_unnormalized(
            array![[1.0, 2.0], [0.3, -7.0], [2.0, 2.0]],
            array![1.0, 0.0, 1.0],
        )
        .unwrap()
        .normalize_rows();
        let twice = once.clone().normalize_rows();
        assert_eq!(once, twice);
        assert!((once.max_row_norm() - 1.0).abs() <= ROW_NORM_SLACK);
    }

    #[test]
    fn select_keeps_pairs_together() {
        let data = LabeledDataset::new(array![[0.1], [0.2], [0.3]], array![0.0, 1.0, 0.0]).unwrap();
        let sub = data.select(&[2, 1]);
        assert_eq!(sub.features(), &array![[0.3], [0.2]]);
        assert_eq!(sub.labels(), &array![0.0, 1.0]);
    }
}
