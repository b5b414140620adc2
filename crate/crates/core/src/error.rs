use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or invalid configuration / model input.
    #[error("config error: {0}")]
    Config(String),

    /// A denominator fell below the singularity threshold.
    #[error("degenerate denominator: {0}")]
    Degenerate(String),

    /// Linear solve hit a (numerically) singular system.
    #[error("singular solve: {0}")]
    Singular(String),

    #[error("no convergence after {iterations} iterations (last iterate {last}, last step {step:e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        step: f64,
    },

    #[error("extrapolation did not converge: {0}")]
    Extrapolation(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Invalid(_) | Error::Io(_) => 2,
            Error::Degenerate(_) | Error::Singular(_) => 3,
            Error::NonConvergence { .. } | Error::Extrapolation(_) => 4,
        }
    }
}
