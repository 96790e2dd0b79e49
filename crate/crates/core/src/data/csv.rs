use std::collections::{BTreeSet, HashSet};
use std::path::PathBuf;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Where a CSV dataset lives and how to turn it into binary-labelled,
/// unit-norm features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub label_column: String,
    /// Label value mapped to 1; the single other value present maps to 0.
    pub positive_label: String,
    #[serde(default)]
    pub categorical_columns: Vec<String>,
    /// Numeric columns min-max scaled to [0, 1]. `None` scales all of them.
    #[serde(default)]
    pub scaled_columns: Option<Vec<String>>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub shuffle_seed: u64,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Turning this off keeps encoded rows as they are, which may leave
    /// them outside the unit ball.
    #[serde(default = "default_normalize")]
    pub normalize_rows: bool,
}

fn default_normalize() -> bool {
    true
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_delimiter() -> char {
    ','
}

impl DatasetSpec {
    pub fn new(
        path: impl Into<PathBuf>,
        label_column: impl Into<String>,
        positive_label: impl Into<String>,
    ) -> Self {
        Self {
            path: path.into(),
            label_column: label_column.into(),
            positive_label: positive_label.into(),
            categorical_columns: Vec::new(),
            scaled_columns: None,
            train_fraction: default_train_fraction(),
            shuffle_seed: 0,
            delimiter: default_delimiter(),
            normalize_rows: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::domain(
                "train_fraction",
                format!("must lie in (0, 1), got {}", self.train_fraction),
            ));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::domain(
                "delimiter",
                "must be a single ASCII character",
            ));
        }
        Ok(())
    }
}

enum Column {
    Numeric {
        name: String,
        values: Vec<f64>,
        scale: bool,
    },
    Categorical {
        name: String,
        values: Vec<String>,
    },
}

/// Reads a headed CSV file: categorical columns are one-hot encoded, numeric
/// columns min-max scaled, constant columns dropped, and all rows divided by
/// the largest row norm.
pub fn load_csv(spec: &DatasetSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let file = std::fs::File::open(&spec.path).map_err(|e| Error::io(&spec.path, e))?;
    let mut reader = ::csv::ReaderBuilder::new()
        .delimiter(spec.delimiter as u8)
        .has_headers(true)
        .trim(::csv::Trim::All)
        .from_reader(file);

    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Parse {
            row: 1,
            column: String::new(),
            message: "empty file: no header row".into(),
        });
    }
    let label_idx = headers
        .iter()
        .position(|h| h == spec.label_column)
        .ok_or_else(|| {
            Error::Data(format!(
                "label column `{}` not found in header",
                spec.label_column
            ))
        })?;

    let categorical: HashSet<&str> = spec
        .categorical_columns
        .iter()
        .map(String::as_str)
        .collect();
    for name in &categorical {
        if !headers.iter().any(|h| h == *name) {
            return Err(Error::Data(format!(
                "categorical column `{name}` not found in header"
            )));
        }
    }
    let scaled: Option<HashSet<&str>> = spec
        .scaled_columns
        .as_ref()
        .map(|cols| cols.iter().map(String::as_str).collect());

    let mut columns: Vec<Column> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, name)| {
            if categorical.contains(name) {
                Column::Categorical {
                    name: name.to_string(),
                    values: Vec::new(),
                }
            } else {
                Column::Numeric {
                    name: name.to_string(),
                    values: Vec::new(),
                    scale: scaled.as_ref().is_none_or(|s| s.contains(name)),
                }
            }
        })
        .collect();

    let mut labels = Vec::new();
    let mut negative_label: Option<String> = None;
    for record in reader.records() {
        let record = record?;
        let line = record
            .position()
            .map_or(labels.len() + 2, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row: line,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let raw_label = &record[label_idx];
        let label = if raw_label == spec.positive_label {
            1.0
        } else {
            match &negative_label {
                None => {
                    negative_label = Some(raw_label.to_string());
                    0.0
                }
                Some(neg) if neg == raw_label => 0.0,
                Some(neg) => {
                    return Err(Error::Data(format!(
                        "label column `{}` has a third distinct value `{raw_label}` at line {line} \
                         (positive `{}`, negative `{neg}`)",
                        spec.label_column, spec.positive_label
                    )))
                }
            }
        };
        labels.push(label);

        let fields = record
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label_idx)
            .map(|(_, f)| f);
        for (column, field) in columns.iter_mut().zip(fields) {
            match column {
                Column::Numeric { name, values, .. } => {
                    let v: f64 = field.parse().map_err(|_| Error::Parse {
                        row: line,
                        column: name.clone(),
                        message: format!("`{field}` is not a number"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            row: line,
                            column: name.clone(),
                            message: format!("`{field}` is not finite"),
                        });
                    }
                    values.push(v);
                }
                Column::Categorical { values, .. } => values.push(field.to_string()),
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            row: 2,
            column: String::new(),
            message: "empty file: header without data rows".into(),
        });
    }

    let n = labels.len();
    let mut encoded: Vec<Vec<f64>> = Vec::new();
    for column in columns {
        match column {
            Column::Numeric {
                name,
                values,
                scale,
            } => {
                let (lo, hi) = values
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(*v), hi.max(*v))
                    });
                if lo == hi {
                    log::warn!("dropping constant column `{name}`");
                    continue;
                }
                if scale {
                    encoded.push(values.iter().map(|v| (v - lo) / (hi - lo)).collect());
                } else {
                    encoded.push(values);
                }
            }
            Column::Categorical { name, values } => {
                let levels: BTreeSet<&str> = values.iter().map(String::as_str).collect();
                if levels.len() < 2 {
                    log::warn!("dropping constant column `{name}`");
                    continue;
                }
                for level in levels {
                    encoded.push(
                        values
                            .iter()
                            .map(|v| f64::from(u8::from(v == level)))
                            .collect(),
                    );
                }
            }
        }
    }
    if encoded.is_empty() {
        return Err(Error::Data("no usable feature columns".into()));
    }

    let features = Array2::from_shape_fn((n, encoded.len()), |(i, j)| encoded[j][i]);
    let data = LabeledDataset::new_unnormalized(features, Array1::from(labels))?;
    Ok(if spec.normalize_rows {
        data.normalize_rows()
    } else {
        data
    })
}
