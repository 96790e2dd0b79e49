use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wddp_cli::{config, CliError, RunConfig};
use wddp_core::experiment::ReportFormat;

#[derive(Parser, Debug)]
#[command(
    name = "wddp",
    version,
    about = "Weighted distributed DP-ERM simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true, env = "WDDP_CONFIG")]
    config: Option<PathBuf>,

    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true, env = "WDDP_OUT")]
    out: Option<PathBuf>,

    /// Master seed; overrides `master_seed` in the config.
    #[arg(long, global = true, env = "WDDP_SEED")]
    seed: Option<u64>,

    /// Worker threads (default: number of cores).
    #[arg(long, global = true, env = "WDDP_JOBS")]
    jobs: Option<usize>,

    /// Extra report formats for `sweep`; CSV is always written.
    #[arg(long, global = true, env = "WDDP_FORMAT", value_delimiter = ',', value_parser = parse_format)]
    format: Vec<ReportFormat>,

    /// Override any config field, e.g. `--set privacy.epsilon=0.2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Print the calibrated noise record as JSON.
    Calibrate,
    /// Train one model and write model, metrics and provenance files.
    Train,
    /// Run a sweep and write its reports.
    Sweep,
    /// Check the loss certificates.
    Verify,
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: wddp_core::Error| e.to_string())
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config is required"))?;
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("master_seed={seed}"));
    }
    config::load(path, &overrides)
}

fn out_dir(cli: &Cli, config: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("wddp-out"))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(CliError::config)?;
    }
    let config = load_config(cli)?;
    match cli.command {
        Command::Calibrate => {
            let record = wddp_cli::calibrate(&config)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&record).map_err(CliError::runtime)?
            );
        }
        Command::Train => {
            let summary = wddp_cli::train(&config, &out_dir(cli, &config))?;
            let r = &summary.result;
            println!(
                "{} accuracy={} optimal_gap={} sigma={}",
                r.method,
                r.accuracy.unwrap_or(f64::NAN),
                r.optimal_gap.unwrap_or(f64::NAN),
                r.sigma.unwrap_or(f64::NAN)
            );
        }
        Command::Sweep => {
            let summary = wddp_cli::sweep(&config, &out_dir(cli, &config), &cli.format)?;
            println!("{} cells, {} failed", summary.rows, summary.failed);
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Verify => {
            let checks = wddp_cli::verify(&config)?;
            print!("{}", wddp_cli::format_table(&checks));
            if let Some(bad) = checks.iter().find(|c| !c.passed) {
                return Err(CliError::runtime(format!(
                    "{} check failed: {}",
                    bad.name,
                    bad.witness.as_deref().unwrap_or("no witness")
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
