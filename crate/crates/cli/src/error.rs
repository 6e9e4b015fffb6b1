//! Error taxonomy mapped onto the process exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Exit 1: malformed or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Exit 2: the mathematical hypotheses failed validation.
    #[error("hypothesis validation failed: {0}")]
    Hypothesis(String),
    /// Exit 3: a solver failure (march, roots, shooting).
    #[error("solver failure: {0}")]
    Solver(String),
    /// Exit 4: filesystem trouble.
    #[error("I/O error: {0}")]
    Io(String),
    /// Exit 5: a verification check failed.
    #[error("verification failed: {0}")]
    Verify(String),
    /// Exit 6: every sweep row failed.
    #[error("all sweep rows failed")]
    AllRowsFailed,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Hypothesis(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
            CliError::Verify(_) => 5,
            CliError::AllRowsFailed => 6,
        }
    }
}
