//! A reference pulse and the measurements taken on it after a medium.

use thiserror::Error;

use crate::medium::MediumModel;
use crate::metrics::{self, EdgeReport, MetricsError, PulseMetrics};
use crate::signal::{make_gaussian, Envelope, Propagator, SignalError, Spectrum, TimeGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Gaussian reference pulse on a fixed grid, ready to be sent through media.
#[derive(Debug, Clone)]
pub struct PulseExperiment {
    propagator: Propagator,
    reference: Envelope,
    spectrum: Spectrum,
    reference_metrics: PulseMetrics,
}

/// Result of sending the reference pulse through one medium.
#[derive(Debug, Clone)]
pub struct PulseMeasurement {
    pub output: Envelope,
    pub metrics: PulseMetrics,
    /// Output peak intensity over reference peak intensity.
    pub peak_gain: f64,
    /// Seconds; positive means early.
    pub advancement: f64,
    pub distortion: f64,
    pub edges: EdgeReport,
}

impl PulseExperiment {
    /// Unit-peak Gaussian of `fwhm` at the center of `grid`.
    pub fn new(grid: TimeGrid, fwhm: f64) -> Result<Self, ExperimentError> {
        let center = grid.start + 0.5 * grid.window();
        let reference = make_gaussian(grid, fwhm, center, 1.0)?;
        Self::from_reference(reference)
    }

    pub fn with_samples(fwhm: f64, samples: usize, window_fwhm: f64) -> Result<Self, ExperimentError> {
        Self::new(TimeGrid::for_pulse(fwhm, samples, window_fwhm)?, fwhm)
    }

    pub fn from_reference(reference: Envelope) -> Result<Self, ExperimentError> {
        let propagator = Propagator::new(reference.grid);
        let spectrum = propagator.to_spectrum(&reference)?;
        let reference_metrics = metrics::analyze(&reference)?;
        Ok(Self { propagator, reference, spectrum, reference_metrics })
    }

    pub fn grid(&self) -> TimeGrid {
        self.reference.grid
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    pub fn reference(&self) -> &Envelope {
        &self.reference
    }

    pub fn reference_metrics(&self) -> &PulseMetrics {
        &self.reference_metrics
    }

    /// Output envelope only; no metrics.
    pub fn propagate(&self, model: &MediumModel) -> Result<Envelope, ExperimentError> {
        if model.is_vacuum() {
            return Ok(self.reference.clone());
        }
        let transfer = self.propagator.transfer(model)?;
        Ok(self.propagator.apply(&self.spectrum, &transfer)?)
    }

    pub fn measure(&self, model: &MediumModel) -> Result<PulseMeasurement, ExperimentError> {
        let output = self.propagate(model)?;
        let out_metrics = metrics::analyze(&output)?;
        let advancement = metrics::advancement(&self.reference_metrics, &out_metrics);
        let distortion = metrics::distortion(&self.reference, &output, advancement)?;
        Ok(PulseMeasurement {
            peak_gain: out_metrics.peak_intensity / self.reference_metrics.peak_intensity,
            advancement,
            distortion,
            edges: EdgeReport::from_metrics(&self.reference_metrics, &out_metrics),
            metrics: out_metrics,
            output,
        })
    }
}
