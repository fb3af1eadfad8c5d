//! One-parameter sweeps of the pulse measurement.

use std::fmt::Write as _;

use fastlight::experiment::{PulseExperiment, PulseMeasurement};
use fastlight::medium::MediumModel;
use rayon::prelude::*;

use crate::config::{PulseConfig, SweepConfig, SweepParameter};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// The swept value in its own unit.
    pub control: f64,
    pub strength_scale: f64,
    pub detuning_shift_hz: f64,
    pub advancement: f64,
    /// Narrow-band advancement of the same medium at the probe.
    pub cw_advancement: f64,
    pub peak_gain: f64,
    pub distortion: f64,
    pub beta_up: Option<f64>,
    pub beta_down: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn advancement_nondecreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].advancement >= w[0].advancement)
    }

    pub fn distortion_nondecreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].distortion >= w[0].distortion)
    }

    /// Last distortion minus first.
    pub fn distortion_change(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => b.distortion - a.distortion,
            _ => 0.0,
        }
    }

    /// Rows followed by `#`-prefixed monotonicity summaries.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |b| format!("{b:e}"));
        let mut s = String::from(
            "control,strength_scale,detuning_shift_hz,advancement_s,cw_advancement_s,peak_gain,distortion,beta_up,beta_down\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
                r.control,
                r.strength_scale,
                r.detuning_shift_hz,
                r.advancement,
                r.cw_advancement,
                r.peak_gain,
                r.distortion,
                opt(r.beta_up),
                opt(r.beta_down)
            );
        }
        let _ = writeln!(s, "# advancement_nondecreasing = {}", self.advancement_nondecreasing());
        let _ = writeln!(s, "# distortion_nondecreasing = {}", self.distortion_nondecreasing());
        let _ = writeln!(s, "# distortion_change = {:e}", self.distortion_change());
        s
    }
}

/// Sweeps `model` according to `sweep`, measuring the configured pulse at every point.
pub fn run_sweep(model: &MediumModel, pulse: &PulseConfig, sweep: &SweepConfig) -> Result<SweepTable, CliError> {
    let experiment = PulseExperiment::with_samples(pulse.fwhm_s, pulse.time_samples, pulse.window_fwhm)?;
    let rows = sweep
        .values()
        .into_par_iter()
        .map(|control| {
            let (scale, shift) = match sweep.parameter {
                SweepParameter::StrengthScale => (control, 0.0),
                SweepParameter::DetuningShift => (1.0, control),
                SweepParameter::Advancement => (solve_scale(&experiment, model, control)?, 0.0),
            };
            let point = model.scaled(scale).shifted(shift);
            let m = experiment.measure(&point)?;
            Ok(row(control, scale, shift, &point, &m))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(SweepTable { parameter: sweep.parameter, rows })
}

fn row(control: f64, scale: f64, shift: f64, model: &MediumModel, m: &PulseMeasurement) -> SweepRow {
    SweepRow {
        control,
        strength_scale: scale,
        detuning_shift_hz: shift,
        advancement: m.advancement,
        cw_advancement: model.advancement(0.0),
        peak_gain: m.peak_gain,
        distortion: m.distortion,
        beta_up: m.edges.beta_up,
        beta_down: m.edges.beta_down,
    }
}

/// Strength scale whose measured advancement equals `target`, by bisection.
/// Assumes advancement grows with the scale.
fn solve_scale(experiment: &PulseExperiment, model: &MediumModel, target: f64) -> Result<f64, CliError> {
    let advancement = |k: f64| -> Result<f64, CliError> { Ok(experiment.measure(&model.scaled(k))?.advancement) };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut doublings = 0;
    while advancement(hi)? < target {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 8 {
            return Err(CliError::Guard(format!("advancement {target:e} s not reached by scaling the medium")));
        }
    }
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if advancement(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
