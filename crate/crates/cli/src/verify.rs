use wddp_core::experiment::LossChoice;
use wddp_core::loss::certify::{certify_example_loss, certify_pl_scalar, CertificateCheck};
use wddp_core::loss::{Logistic, PlScalar, RegularizedLogistic};

use crate::config::{Family, RunConfig};
use crate::CliError;

/// Runs the certificate checks named by the `[verify]` block.
pub fn verify(config: &RunConfig) -> Result<Vec<CertificateCheck>, CliError> {
    config.validate()?;
    let block = config
        .verify
        .as_ref()
        .ok_or_else(|| CliError::config("config needs a [verify] block"))?;
    let seed = config.master_seed;
    let checks = match block.family {
        Family::PlScalar => certify_pl_scalar(
            &PlScalar::new(block.radius).map_err(CliError::config)?,
            block.samples,
            seed,
        ),
        Family::Logistic => {
            let (train, _) = config.data()?.prepare().map_err(CliError::runtime)?;
            certify_example_loss(&Logistic, &train, block.samples, block.radius, seed)
        }
        Family::RegularizedLogistic => {
            let LossChoice::RegularizedLogistic { reg_lambda, radius } = config.loss else {
                return Err(CliError::config(
                    "family regularized_logistic needs [loss] kind = \"regularized_logistic\"",
                ));
            };
            let loss = RegularizedLogistic::new(reg_lambda, radius).map_err(CliError::config)?;
            let (train, _) = config.data()?.prepare().map_err(CliError::runtime)?;
            certify_example_loss(&loss, &train, block.samples, radius.min(block.radius), seed)
        }
    };
    checks.map_err(CliError::runtime)
}

/// Fixed-width pass/fail table.
pub fn format_table(checks: &[CertificateCheck]) -> String {
    let mut out = format!(
        "{:<12} {:<6} {:>9} {:>12}\n",
        "check", "result", "points", "worst_ratio"
    );
    for c in checks {
        out.push_str(&format!(
            "{:<12} {:<6} {:>9} {:>12.6}\n",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.checked,
            c.worst_ratio
        ));
    }
    out
}
