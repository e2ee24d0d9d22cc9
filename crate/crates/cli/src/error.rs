use std::fmt::Display;

use levkit::dynamics::DynamicsError;
use levkit::fitting::FitError;
use levkit::levitation::LevitationError;
use levkit::orchestration::OrchestrationError;
use levkit::signal::SignalError;
use levkit::spectra::SpectraError;
use levkit::trajectory::TrajectoryError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn validation<E: Display>(e: E) -> Self {
        CliError::Validation(e.to_string())
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<LevitationError> for CliError {
    fn from(e: LevitationError) -> Self {
        match e {
            LevitationError::NoMinimumInBox { .. } | LevitationError::QuadratureDivergence(_) => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::InsufficientPeaks { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::NoConvergence { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SpectraError> for CliError {
    fn from(e: SpectraError) -> Self {
        match e {
            SpectraError::NoPeak { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<OrchestrationError> for CliError {
    fn from(e: OrchestrationError) -> Self {
        match e {
            OrchestrationError::Levitation(e) => e.into(),
            OrchestrationError::Dynamics(e) => e.into(),
            OrchestrationError::Fit(e) => e.into(),
            OrchestrationError::Spectra(e) => e.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}
