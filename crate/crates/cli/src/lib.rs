//! Library half of the `dhj` command-line tool: configuration loading,
//! subcommand drivers, and CSV/JSON output.

pub mod commands;
pub mod config;
pub mod convergence;
pub mod output;

use std::path::Path;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde_json::json;
use sha2::{Digest, Sha256};

pub use commands::Outcome;
pub use convergence::{report_convergence, ConvergenceReport, Slope};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: discrete_hj::Error,
    },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    /// 1 for bad input, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => 1,
            CliError::Core { source, .. } if source.is_numerical() => 2,
            CliError::Core { .. } => 1,
            CliError::Check(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Integrate,
    Riccati,
    HjCheck,
    Bellman,
    GalerkinBellman,
    Heisenberg,
    Convergence,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Integrate,
        Command::Riccati,
        Command::HjCheck,
        Command::Bellman,
        Command::GalerkinBellman,
        Command::Heisenberg,
        Command::Convergence,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Integrate => "integrate",
            Command::Riccati => "riccati",
            Command::HjCheck => "hj-check",
            Command::Bellman => "bellman",
            Command::GalerkinBellman => "galerkin-bellman",
            Command::Heisenberg => "heisenberg",
            Command::Convergence => "convergence",
        }
    }
}

fn dispatch<T: DeserializeOwned>(
    raw: &[u8],
    out: &Path,
    f: impl FnOnce(&T, &Path) -> Result<Outcome, CliError>,
) -> Result<Outcome, CliError> {
    let cfg: T = config::parse(raw)?;
    f(&cfg, out)
}

/// Runs one experiment from a config file, writing `report.json`, `meta.json`
/// and the command's tables into `out`.
///
/// Outputs are written even when a residual check fails; the failure is then
/// returned as [`CliError::Check`].
pub fn execute(command: Command, config_path: &Path, out: &Path) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let raw = std::fs::read(config_path).map_err(|source| CliError::Io {
        path: config_path.display().to_string(),
        source,
    })?;
    let out = output::ensure_dir(out)?;
    let mut outcome = match command {
        Command::Integrate => dispatch(&raw, &out, commands::integrate_cmd),
        Command::Riccati => dispatch(&raw, &out, commands::riccati_cmd),
        Command::HjCheck => dispatch(&raw, &out, commands::hj_check_cmd),
        Command::Bellman => dispatch(&raw, &out, commands::bellman_cmd),
        Command::GalerkinBellman => dispatch(&raw, &out, commands::galerkin_bellman_cmd),
        Command::Heisenberg => dispatch(&raw, &out, commands::heisenberg_cmd),
        Command::Convergence => dispatch(&raw, &out, commands::convergence_cmd),
    }?;
    output::check_finite_json(&outcome.report)?;
    let report_path = out.join("report.json");
    output::write_json(&report_path, &outcome.report)?;
    outcome.files.push(report_path);

    let meta_path = out.join("meta.json");
    let meta = json!({
        "command": command.name(),
        "config_sha256": Sha256::digest(&raw).iter().map(|b| format!("{b:02x}")).collect::<String>(),
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_seconds": start.elapsed().as_secs_f64(),
    });
    output::write_json(&meta_path, &meta)?;
    outcome.files.push(meta_path);

    match outcome.failure.take() {
        Some(msg) => Err(CliError::Check(msg)),
        None => Ok(outcome),
    }
}
