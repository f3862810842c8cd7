use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use mimic_core::eval::EvalError;
use mimic_core::policy::PolicyError;
use mimic_core::reference::MotionError;
use mimic_core::sim::SimError;
use mimic_core::train::TrainError;

/// Failure of a subcommand, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config, input files or output location (exit 2).
    Config(String),
    /// Simulation instability or training divergence (exit 3).
    Numeric(String),
    /// Analytic and numeric gradients disagree (exit 4).
    GradCheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Config(_) => 2,
            Self::Numeric(_) => 3,
            Self::GradCheck(_) => 4,
        })
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Config(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "error: {m}"),
            Self::Numeric(m) => write!(f, "numeric failure: {m}"),
            Self::GradCheck(m) => write!(f, "gradient check failed: {m}"),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<MotionError> for CliError {
    fn from(e: MotionError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Sim { .. } | TrainError::Diverged { .. } | TrainError::Eval(_) => {
                Self::Numeric(e.to_string())
            }
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Sim { .. } => Self::Numeric(e.to_string()),
            EvalError::Train(t) => (*t).into(),
            _ => Self::Config(e.to_string()),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
