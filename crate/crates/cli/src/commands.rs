use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use wddp_core::data::Partition;
use wddp_core::experiment::{
    client_partition, cross_validate_eta, emit_report, run_cell, run_sweep_with, CsvRowWriter,
    EtaChoice, Method, ReportFormat, SweepContext, SweepResult,
};
use wddp_core::privacy::{calibrate_sigma, CalibrationOptions, CalibrationRecord, PrivacyBudget};
use wddp_core::Error;

use crate::config::RunConfig;
use crate::CliError;

fn runtime_io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(runtime_io(path))
}

fn create_out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(runtime_io(out))
}

/// Calibrates σ for the `[privacy]` block. Missing `G`, `T` or `n` come
/// from the loss, the run block and the training-set size.
pub fn calibrate(config: &RunConfig) -> Result<CalibrationRecord, CliError> {
    config.validate()?;
    let privacy = config.privacy()?;
    let budget = PrivacyBudget::new(privacy.epsilon, privacy.delta).map_err(CliError::config)?;
    let g = match privacy.lipschitz_g {
        Some(g) => g,
        None => {
            config
                .loss
                .build()
                .map_err(CliError::config)?
                .metadata()
                .lipschitz_g
        }
    };
    let n = match privacy.samples {
        Some(n) => n,
        None => {
            let (train, _) = config.data()?.prepare().map_err(CliError::runtime)?;
            train.len() as u64
        }
    };
    calibrate_sigma(
        &budget,
        g,
        config.rounds(),
        n,
        &CalibrationOptions::default(),
    )
    .map_err(CliError::config)
}

#[derive(Debug, Serialize)]
struct ModelFile {
    method: Method,
    rounds: usize,
    eta: f64,
    sigma: f64,
    theta: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct ReferenceInfo {
    risk: f64,
    grad_norm: f64,
    converged: bool,
}

#[derive(Debug, Serialize)]
struct Provenance<'a> {
    config: &'a RunConfig,
    method: Method,
    eta: f64,
    sigma: Option<f64>,
    partition: Option<Partition>,
    reference: ReferenceInfo,
    train_size: usize,
    test_size: usize,
}

/// What `train` wrote.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub result: SweepResult,
    pub files: Vec<PathBuf>,
}

/// Runs the `[train]` block once and writes `model.json`, `metrics.csv`
/// and `provenance.json` under `out`.
pub fn train(config: &RunConfig, out: &Path) -> Result<TrainSummary, CliError> {
    config.validate()?;
    let (spec, method) = config.train_spec()?;
    let ctx = SweepContext::prepare(&spec).map_err(CliError::runtime)?;
    let eta = match spec.eta {
        EtaChoice::Fixed(eta) => eta,
        EtaChoice::CrossValidated => {
            cross_validate_eta(&spec, &ctx, method)
                .map_err(CliError::runtime)?
                .0
        }
    };
    let value = spec.values[0];
    let seed = spec.seeds[0];
    let (row, theta) = run_cell(&spec, &ctx, method, value, seed, eta);
    let theta =
        theta.ok_or_else(|| CliError::runtime(format!("training failed: {}", row.status)))?;

    let partition = match method {
        Method::WeightedDp | Method::UniformDp => Some(
            client_partition(&spec, ctx.train.len(), spec.u, seed).map_err(CliError::runtime)?,
        ),
        _ => None,
    };

    create_out_dir(out)?;
    let model_path = out.join("model.json");
    let model = ModelFile {
        method,
        rounds: spec.rounds,
        eta,
        sigma: row.sigma.unwrap_or(0.0),
        theta: theta.to_vec(),
    };
    write_file(&model_path, to_json(&model)?)?;

    let metrics_path = out.join("metrics.csv");
    let mut metrics = CsvRowWriter::create(&metrics_path).map_err(CliError::runtime)?;
    metrics.write(&row).map_err(CliError::runtime)?;

    let provenance_path = out.join("provenance.json");
    let provenance = Provenance {
        config,
        method,
        eta,
        sigma: row.sigma,
        partition,
        reference: ReferenceInfo {
            risk: ctx.reference_risk,
            grad_norm: ctx.reference.grad_norm,
            converged: ctx.reference.converged,
        },
        train_size: ctx.train.len(),
        test_size: ctx.test.len(),
    };
    write_file(&provenance_path, to_json(&provenance)?)?;

    Ok(TrainSummary {
        result: row,
        files: vec![model_path, metrics_path, provenance_path],
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    text.push('\n');
    Ok(text)
}

/// What `sweep` wrote.
#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub rows: usize,
    pub failed: usize,
    pub files: Vec<PathBuf>,
}

/// Runs the `[sweep]` block. `results.csv` is always written, one flushed
/// row at a time; `formats` adds JSON and SVG reports.
pub fn sweep(
    config: &RunConfig,
    out: &Path,
    formats: &[ReportFormat],
) -> Result<SweepSummary, CliError> {
    config.validate()?;
    let spec = config.sweep_spec()?;
    create_out_dir(out)?;

    let echo_path = out.join("config.toml");
    let echo = toml::to_string(config).map_err(CliError::runtime)?;
    write_file(&echo_path, echo)?;

    let csv_path = out.join("results.csv");
    let mut csv = CsvRowWriter::create(&csv_path).map_err(CliError::runtime)?;
    let rows = run_sweep_with(&spec, |row| csv.write(row)).map_err(|e| match e {
        Error::Domain { .. } => CliError::config(e),
        other => CliError::runtime(other),
    })?;

    let mut files = vec![echo_path, csv_path];
    for format in formats {
        if *format != ReportFormat::Csv {
            files.extend(emit_report(&rows, &spec, *format, out).map_err(CliError::runtime)?);
        }
    }
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    if failed == rows.len() {
        return Err(CliError::runtime(format!(
            "all {failed} sweep cells failed; first: {}",
            rows.first().map_or("", |r| r.status.as_str())
        )));
    }
    Ok(SweepSummary {
        rows: rows.len(),
        failed,
        files,
    })
}
