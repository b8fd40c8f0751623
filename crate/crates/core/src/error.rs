use thiserror::Error;

/// Errors raised anywhere in the simulation, analysis, and fitting stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("pci denominator non-positive at {bad} of {total} window pixels")]
    BadProbe { bad: usize, total: usize },

    #[error("post-selection retained no samples (retained {retained})")]
    EmptySelection { retained: usize },

    #[error("fit did not converge after {iterations} iterations (chi2 = {chi2:.6e})")]
    NoConvergence {
        iterations: usize,
        chi2: f64,
        best: Vec<f64>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Data(_) | Error::DimensionMismatch(_) | Error::Io(_) => 3,
            Error::NoConvergence { .. } => 4,
            Error::BadProbe { .. } | Error::EmptySelection { .. } => 5,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn ensure_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite, got {v}")))
    }
}
