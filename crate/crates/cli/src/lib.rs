//! Command-line front end over the solver core: configuration loading,
//! artifact persistence, and the six command verbs.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod runner;

pub use config::{load_config, Mode, RunConfig};
pub use error::CliError;

use std::path::{Path, PathBuf};

/// Run one verb end to end: load the configuration, apply the output
/// directory override, and dispatch.
pub fn run(
    mode: Mode,
    config_path: &Path,
    out_override: Option<PathBuf>,
    workers: Option<usize>,
) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    let out = out_override.unwrap_or_else(|| config.output.dir.clone());
    match mode {
        Mode::Solve => runner::run_solve(&config, &out),
        Mode::Verify => runner::run_verify(&config, &out),
        Mode::Fields => runner::run_fields(&config, &out),
        Mode::Ode => runner::run_ode(&config, &out),
        Mode::Sweep => runner::run_sweep(&config, &out, workers),
        Mode::Convergence => runner::run_convergence(&config, &out),
    }
}
