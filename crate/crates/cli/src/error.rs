use fastlight::experiment::ExperimentError;
use fastlight::imaging::ImagingError;
use fastlight::medium::{CalibrationError, MediumError};
use fastlight::metrics::MetricsError;
use fastlight::signal::SignalError;
use thiserror::Error;

use crate::config::Diagnostic;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid scenario:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Diagnostics(Vec<Diagnostic>),
    #[error("calibration failed: {0}")]
    Calibration(CalibrationError),
    #[error("numerical guard tripped: {0}")]
    Guard(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Diagnostics(_) => 2,
            Self::Calibration(_) => 3,
            Self::Guard(_) => 4,
            Self::Io(_) | Self::Other(_) => 1,
        }
    }
}

fn medium_is_guard(e: &MediumError) -> bool {
    matches!(e, MediumError::GainOverflow { .. } | MediumError::UndefinedVelocity { .. } | MediumError::NonFiniteDetuning(_))
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        match &e {
            SignalError::BandwidthViolation { .. } | SignalError::NonFinite(_) => Self::Guard(e.to_string()),
            SignalError::Medium(m) if medium_is_guard(m) => Self::Guard(e.to_string()),
            SignalError::Medium(_)
            | SignalError::InvalidGrid(_)
            | SignalError::InvalidFwhm(_)
            | SignalError::PulseClipped { .. }
            | SignalError::WindowTooShort { .. } => Self::Config(e.to_string()),
            SignalError::GridMismatch(_) => Self::Other(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::Other(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Signal(s) => s.into(),
            ExperimentError::Metrics(m) => m.into(),
        }
    }
}

impl From<ImagingError> for CliError {
    fn from(e: ImagingError) -> Self {
        match e {
            ImagingError::Signal(s) => s.into(),
            ImagingError::Pixel { x, y, source } => match CliError::from(source) {
                Self::Guard(m) => Self::Guard(format!("pixel (x={x}, y={y}): {m}")),
                Self::Config(m) => Self::Config(format!("pixel (x={x}, y={y}): {m}")),
                other => Self::Other(format!("pixel (x={x}, y={y}): {other}")),
            },
            ImagingError::Metrics(m) => m.into(),
            other => Self::Config(other.to_string()),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::InvalidTargets(m) => Self::Config(m),
            CalibrationError::Experiment(x) => x.into(),
            other => Self::Calibration(other),
        }
    }
}
