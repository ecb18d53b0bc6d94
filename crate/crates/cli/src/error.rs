use bkl_core::estimators::EstimatorError;
use bkl_core::levy_motion::LevyError;
use bkl_core::limit_solvers::LimitError;
use bkl_core::particle_system::SimError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("verification failed for criteria {0:?}")]
    Verification(Vec<u8>),
    #[error("simulation: {0}")]
    Simulation(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 2,
            CliError::Config(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Simulation(_) | CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Verification(_) => "verification",
            CliError::Simulation(_) => "simulation",
            CliError::Io(_) => "io",
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            error: &'a str,
            exit_code: i32,
            message: String,
        }
        serde_json::to_string(&Report { error: self.kind(), exit_code: self.exit_code(), message: self.to_string() })
            .unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", self.kind()))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<LimitError> for CliError {
    fn from(e: LimitError) -> Self {
        match e {
            LimitError::Domain(_) | LimitError::OutsideGrid(_) | LimitError::NotStored(_) => CliError::Config(e.to_string()),
            LimitError::NonConvergence(_) | LimitError::BracketingFailure { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::InvalidInput(_) => CliError::Config(e.to_string()),
            EstimatorError::Simulation(SimError::InvalidInput(_)) => CliError::Config(e.to_string()),
            EstimatorError::NotConverged { .. } | EstimatorError::DegenerateDesign(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Simulation(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidInput(_) => CliError::Config(e.to_string()),
            _ => CliError::Simulation(e.to_string()),
        }
    }
}

impl From<LevyError> for CliError {
    fn from(e: LevyError) -> Self {
        CliError::Config(e.to_string())
    }
}
