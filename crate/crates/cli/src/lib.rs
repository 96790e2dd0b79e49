//! Library side of the `wddp` command: config parsing and the four
//! commands, kept out of `main` so tests can drive them directly.

pub mod commands;
pub mod config;
mod verify;

pub use commands::{calibrate, sweep, train, SweepSummary, TrainSummary};
pub use config::RunConfig;
pub use verify::{format_table, verify};

use std::fmt;

use serde::Serialize;

/// Command failure, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad config, flags or infeasible budget: exit code 2.
    #[error("{0}")]
    Config(String),
    /// Failure while loading data, training or writing output: exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(e: impl fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn runtime(e: impl fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Structured<'a> {
            error: &'a str,
            message: &'a str,
        }
        let (error, message) = match self {
            CliError::Config(m) => ("config", m),
            CliError::Runtime(m) => ("runtime", m),
        };
        serde_json::to_string(&Structured { error, message }).unwrap_or_else(|_| message.clone())
    }
}
