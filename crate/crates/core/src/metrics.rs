//! Pulse timing, distortion and narrowing measurements.

use thiserror::Error;

use crate::signal::Envelope;

/// Secondary maximum after the main peak, relative to the peak, that counts as ringing.
pub const RINGING_THRESHOLD: f64 = 0.05;

/// Any secondary maximum this close to the main peak makes the peak ambiguous.
pub const MULTIMODAL_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("trace has no maximum above the numerical floor")]
    NoSignal,
    #[error("{0} half-maximum crossing not found inside the trace")]
    EdgeNotFound(&'static str),
    #[error("{0} pulse has zero energy")]
    ZeroEnergy(&'static str),
    #[error("traces have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("traces are sampled on different grids")]
    GridMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("narrowing factor undefined for the {0} edge (non-positive denominator)")]
    UndefinedBeta(&'static str),
}

/// A secondary maximum found on the trailing side of a pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ringing {
    pub time: f64,
    /// Height relative to the main peak.
    pub relative_height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseMetrics {
    pub peak_time: f64,
    pub peak_intensity: f64,
    pub fwhm: f64,
    pub rise_cross: f64,
    pub fall_cross: f64,
    /// Intensity center of gravity.
    pub cog_time: f64,
    /// Largest trailing secondary maximum above [`RINGING_THRESHOLD`].
    pub ringing: Option<Ringing>,
    /// A secondary maximum exceeds [`MULTIMODAL_THRESHOLD`] of the peak.
    pub multimodal: bool,
}

impl PulseMetrics {
    pub fn half_width(&self) -> f64 {
        0.5 * self.fwhm
    }
}

/// Metrics of an envelope's intensity.
pub fn analyze(env: &Envelope) -> Result<PulseMetrics, MetricsError> {
    analyze_intensity(&env.intensity(), env.grid.start, env.grid.step)
}

/// Metrics of an intensity trace sampled at `start + n * step`.
///
/// The peak time comes from a parabola through the discrete maximum and its two
/// neighbours (the first maximum wins ties); half-maximum crossings are linear
/// interpolations against that peak value.
pub fn analyze_intensity(intensity: &[f64], start: f64, step: f64) -> Result<PulseMetrics, MetricsError> {
    if intensity.len() < 3 {
        return Err(MetricsError::NoSignal);
    }
    let (imax, vmax) = intensity
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let total: f64 = intensity.iter().sum();
    if !(vmax.is_finite() && vmax > 0.0 && vmax > 10.0 * f64::EPSILON * total) {
        return Err(MetricsError::NoSignal);
    }

    let (offset, peak_intensity) = if imax > 0 && imax + 1 < intensity.len() {
        let (y0, y1, y2) = (intensity[imax - 1], vmax, intensity[imax + 1]);
        let curvature = y0 - 2.0 * y1 + y2;
        if curvature < 0.0 {
            let d = 0.5 * (y0 - y2) / curvature;
            (d, y1 - 0.25 * (y0 - y2) * d)
        } else {
            (0.0, y1)
        }
    } else {
        (0.0, vmax)
    };
    let peak_time = start + (imax as f64 + offset) * step;

    let half = 0.5 * peak_intensity;
    let rise_index = (0..imax).rev().find(|&j| intensity[j] < half).ok_or(MetricsError::EdgeNotFound("rising"))?;
    let fall_index =
        (imax + 1..intensity.len()).find(|&j| intensity[j] < half).ok_or(MetricsError::EdgeNotFound("falling"))?;
    let cross = |a: usize, b: usize| {
        let (ya, yb) = (intensity[a], intensity[b]);
        let frac = if yb != ya { (half - ya) / (yb - ya) } else { 0.5 };
        start + (a as f64 + frac * (b as f64 - a as f64)) * step
    };
    let rise_cross = cross(rise_index, rise_index + 1);
    let fall_cross = cross(fall_index - 1, fall_index);

    let weighted: f64 = intensity.iter().enumerate().map(|(i, v)| (start + i as f64 * step) * v).sum();
    let cog_time = weighted / total;

    let is_local_max = |j: usize| intensity[j] > intensity[j - 1] && intensity[j] >= intensity[j + 1];
    let ringing = (imax + 1..intensity.len() - 1)
        .filter(|&j| is_local_max(j) && intensity[j] >= RINGING_THRESHOLD * vmax)
        .max_by(|&a, &b| intensity[a].total_cmp(&intensity[b]))
        .map(|j| Ringing { time: start + j as f64 * step, relative_height: intensity[j] / vmax });
    let multimodal = (1..intensity.len() - 1)
        .any(|j| j != imax && is_local_max(j) && intensity[j] >= MULTIMODAL_THRESHOLD * vmax);
    if multimodal {
        log::warn!("secondary maximum above {MULTIMODAL_THRESHOLD} of the peak; peak time is ambiguous");
    }

    Ok(PulseMetrics {
        peak_time,
        peak_intensity,
        fwhm: fall_cross - rise_cross,
        rise_cross,
        fall_cross,
        cog_time,
        ringing,
        multimodal,
    })
}

/// Reference peak time minus output peak time; positive means the output is early.
pub fn advancement(reference: &PulseMetrics, output: &PulseMetrics) -> f64 {
    reference.peak_time - output.peak_time
}

/// Distortion between two envelopes on the same grid.
///
/// `shift` is the output's advancement over the reference; the reference
/// profile is moved earlier by it before the comparison.
pub fn distortion(reference: &Envelope, output: &Envelope, shift: f64) -> Result<f64, MetricsError> {
    if !reference.grid.same_axis(&output.grid) {
        return Err(MetricsError::GridMismatch);
    }
    distortion_intensity(&reference.intensity(), &output.intensity(), reference.grid.step, shift)
}

/// `D = sqrt( integral | p_out(t) - p_ref(t + shift) | dt )` with both profiles
/// normalised to unit time integral. Bounded by `sqrt(2)`.
pub fn distortion_intensity(reference: &[f64], output: &[f64], step: f64, shift: f64) -> Result<f64, MetricsError> {
    if reference.len() != output.len() {
        return Err(MetricsError::LengthMismatch(reference.len(), output.len()));
    }
    let shifted: Vec<f64> = (0..reference.len()).map(|i| sample_linear(reference, i as f64 + shift / step)).collect();
    let ref_norm: f64 = shifted.iter().sum::<f64>() * step;
    let out_norm: f64 = output.iter().sum::<f64>() * step;
    if !(ref_norm > 0.0) {
        return Err(MetricsError::ZeroEnergy("reference"));
    }
    if !(out_norm > 0.0) {
        return Err(MetricsError::ZeroEnergy("output"));
    }
    let area: f64 = output.iter().zip(&shifted).map(|(o, r)| (o / out_norm - r / ref_norm).abs()).sum::<f64>() * step;
    Ok(area.sqrt())
}

/// Linear interpolation at fractional index `x`, zero outside the trace.
fn sample_linear(values: &[f64], x: f64) -> f64 {
    if !(x >= 0.0) || x > (values.len() - 1) as f64 {
        return 0.0;
    }
    let i = x.floor() as usize;
    if i + 1 >= values.len() {
        return values[values.len() - 1];
    }
    let frac = x - i as f64;
    if frac == 0.0 {
        values[i]
    } else {
        values[i] + frac * (values[i + 1] - values[i])
    }
}

/// Sign of the half-width correction on the falling edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeConvention {
    /// `fall = T + tau - tau/beta`: the edge moves toward the peak when the pulse narrows.
    #[default]
    Narrowing,
    /// `fall = T - tau - tau/beta`, the literal same-sign form; reported for comparison only.
    SameSign,
}

/// Advancement of the rising and falling half-maximum edges of a pulse whose
/// peak is advanced by `peak_advancement` and whose profile narrows by `beta`.
pub fn predicted_edges(peak_advancement: f64, tau_a: f64, beta: f64) -> Result<(f64, f64), MetricsError> {
    predicted_edges_with(peak_advancement, tau_a, beta, EdgeConvention::Narrowing)
}

pub fn predicted_edges_with(
    peak_advancement: f64,
    tau_a: f64,
    beta: f64,
    convention: EdgeConvention,
) -> Result<(f64, f64), MetricsError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(MetricsError::InvalidParameter(format!("beta must be > 0, got {beta}")));
    }
    if !(tau_a > 0.0 && tau_a.is_finite()) {
        return Err(MetricsError::InvalidParameter(format!("tau_a must be > 0, got {tau_a}")));
    }
    let rise = peak_advancement - tau_a + tau_a / beta;
    let fall = match convention {
        EdgeConvention::Narrowing => peak_advancement + tau_a - tau_a / beta,
        EdgeConvention::SameSign => peak_advancement - tau_a - tau_a / beta,
    };
    Ok((rise, fall))
}

/// Inverse of [`predicted_edges`]: `(beta_up, beta_down)`.
pub fn narrowing_factors(
    rise_advancement: f64,
    fall_advancement: f64,
    peak_advancement: f64,
    tau_a: f64,
) -> Result<(f64, f64), MetricsError> {
    let (up, down) =
        narrowing_factors_with(rise_advancement, fall_advancement, peak_advancement, tau_a, EdgeConvention::Narrowing);
    Ok((up?, down?))
}

/// Per-edge inversion; each edge fails independently.
pub fn narrowing_factors_with(
    rise_advancement: f64,
    fall_advancement: f64,
    peak_advancement: f64,
    tau_a: f64,
    convention: EdgeConvention,
) -> (Result<f64, MetricsError>, Result<f64, MetricsError>) {
    let ratio = |den: f64, edge: &'static str| {
        if den > 0.0 && tau_a > 0.0 {
            Ok(tau_a / den)
        } else {
            Err(MetricsError::UndefinedBeta(edge))
        }
    };
    let up = ratio(rise_advancement - peak_advancement + tau_a, "rising");
    let down = match convention {
        EdgeConvention::Narrowing => ratio(peak_advancement + tau_a - fall_advancement, "falling"),
        EdgeConvention::SameSign => ratio(peak_advancement - tau_a - fall_advancement, "falling"),
    };
    (up, down)
}

/// Edge timing of an output pulse against its reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeReport {
    pub peak_advancement: f64,
    pub rise_advancement: f64,
    pub fall_advancement: f64,
    /// Reference half width at half maximum.
    pub tau_a: f64,
    /// `None` when the rising-edge geometry is degenerate.
    pub beta_up: Option<f64>,
    pub beta_down: Option<f64>,
}

impl EdgeReport {
    pub fn from_metrics(reference: &PulseMetrics, output: &PulseMetrics) -> Self {
        let peak_advancement = advancement(reference, output);
        let rise_advancement = reference.rise_cross - output.rise_cross;
        let fall_advancement = reference.fall_cross - output.fall_cross;
        let tau_a = reference.half_width();
        let (up, down) = narrowing_factors_with(
            rise_advancement,
            fall_advancement,
            peak_advancement,
            tau_a,
            EdgeConvention::Narrowing,
        );
        Self { peak_advancement, rise_advancement, fall_advancement, tau_a, beta_up: up.ok(), beta_down: down.ok() }
    }

    /// Narrowing factors under the same-sign falling-edge convention.
    pub fn same_sign_betas(&self) -> (Option<f64>, Option<f64>) {
        let (up, down) = narrowing_factors_with(
            self.rise_advancement,
            self.fall_advancement,
            self.peak_advancement,
            self.tau_a,
            EdgeConvention::SameSign,
        );
        (up.ok(), down.ok())
    }
}
