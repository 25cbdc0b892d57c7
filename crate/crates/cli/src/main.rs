//! `tko`: command-line front end to the noise-statistics library.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use tko_core::TkoError;

use crate::args::{Cli, Command};

/// Exit status for usage and validation problems.
const EXIT_USAGE: u8 = 2;
/// Exit status for numerical failures (non-convergence, ill-posed ratios).
const EXIT_NUMERICAL: u8 = 3;

/// Raised when a result was produced but did not pass its own checks.
#[derive(Debug)]
pub struct NonConvergence(pub String);

impl std::fmt::Display for NonConvergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NonConvergence {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<NonConvergence>().is_some() {
        return EXIT_NUMERICAL;
    }
    match err.downcast_ref::<TkoError>() {
        Some(
            TkoError::QuadratureNonConvergence { .. }
            | TkoError::DenominatorNotPositive { .. }
            | TkoError::AcceptanceTooSmall { .. }
            | TkoError::SingularPencil,
        ) => EXIT_NUMERICAL,
        Some(_) => EXIT_USAGE,
        // I/O and parse failures of user-supplied inputs
        None => EXIT_USAGE,
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("TKO_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| TkoError::InvalidParameter(format!("TKO_THREADS must be a nonnegative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    let common = &cli.common;
    let result = match &cli.command {
        Command::FreqResponse(a) => commands::freq_response(common, a),
        Command::Pdf(a) => commands::pdf(common, a),
        Command::Cdf(a) => commands::cdf(common, a),
        Command::Cumulants(a) => commands::cumulants(common, a),
        Command::Ratio(a) => commands::ratio(common, a),
        Command::TwoTone(a) => commands::two_tone(common, a),
        Command::Esa(a) => commands::esa(common, a),
    }?;
    output::emit(&result.output, common.format, common.out.as_deref())?;
    match result.failure {
        Some(msg) => Err(NonConvergence(msg).into()),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e:#}");
            if let Some(TkoError::DenominatorNotPositive { .. }) = e.downcast_ref::<TkoError>() {
                eprintln!("hint: pass --threshold to condition the denominator away from zero");
            }
            ExitCode::from(code)
        }
    }
}
