use thiserror::Error;

use crate::trainer::ModelParams;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid class {class} (model has {classes} classes)")]
    InvalidClass { class: usize, classes: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    /// Training produced a non-finite loss. `last_finite` holds the parameters
    /// from before the offending step.
    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
        last_finite: Box<ModelParams>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for input/format problems,
    /// 3 for numerical or training failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Estimation(_) | Error::Numerical(_) | Error::Diverged { .. } => 3,
            _ => 2,
        }
    }

    /// Short machine-readable tag printed by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension",
            Error::InvalidClass { .. } => "class",
            Error::Input(_) => "input",
            Error::Estimation(_) => "estimation",
            Error::Numerical(_) => "numerical",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
            Error::Diverged { .. } => "diverged",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::input(format!("{what} contains non-finite values")));
    }
    Ok(())
}
