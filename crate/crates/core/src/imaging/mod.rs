//! Multi-spatial-mode propagation.
//!
//! Every camera pixel carries its own copy of a base medium, shifted in
//! detuning by a linear transverse gradient and scaled by the pump intensity
//! envelope. Pixels propagate independently. Outputs are gated frame stacks
//! (energy per time bin per pixel) and maps derived from a reference/output
//! stack pair.
//!
//! Arrays are indexed `[y, x]` (and `[y, x, bin]` for stacks). Pixel `(i, j)`
//! sits at `x = (i - (nx - 1) / 2) * pitch`, `y = (j - (ny - 1) / 2) * pitch`.

pub mod io;

use std::collections::HashMap;
use std::f64::consts::LN_2;

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::medium::{phase_matching_spread, MediumModel};
use crate::metrics::{self, MetricsError, PulseMetrics};
use crate::signal::{make_gaussian, Propagator, SignalError, TimeGrid};
use crate::SPEED_OF_LIGHT;

/// Gate width of the intensified camera (s).
pub const DEFAULT_GATE_WIDTH: f64 = 2.44e-9;

/// Total span of the gated frame window, in pulse FWHMs, centered on the reference peak.
pub const DEFAULT_FRAME_SPAN_FWHM: f64 = 8.0;

/// Pixels whose output energy is below this fraction of the brightest pixel are flagged.
pub const LOW_SIGNAL_FRACTION: f64 = 0.01;

/// Advancement uncertainty attached to flagged pixels (s).
pub const LOW_SIGNAL_UNCERTAINTY: f64 = 10e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImagingError {
    #[error("invalid transverse grid: {0}")]
    InvalidGrid(String),
    #[error("degenerate spot width ({0} m)")]
    DegenerateSpot(f64),
    #[error("spot center ({0} m, {1} m) lies outside the grid")]
    SpotOutsideGrid(f64, f64),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("mask value {0} outside [0, 1]")]
    MaskRange(f64),
    #[error("invalid gradient: {0}")]
    InvalidGradient(String),
    #[error("crossing angle {angle:.3e} rad exceeds the phase-matching spread {spread:.3e} rad")]
    AngleExceedsSpread { angle: f64, spread: f64 },
    #[error("bin factor must be at least 1, got {0}")]
    InvalidBinFactor(usize),
    #[error("invalid gating: {0}")]
    InvalidGate(String),
    #[error("frame stacks are not aligned: {0}")]
    StackMismatch(String),
    #[error("pixel (x={x}, y={y}): {source}")]
    Pixel { x: usize, y: usize, source: SignalError },
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransverseGrid {
    pub nx: usize,
    pub ny: usize,
    /// Meters per pixel.
    pub pitch: f64,
}

impl TransverseGrid {
    pub fn new(nx: usize, ny: usize, pitch: f64) -> Result<Self, ImagingError> {
        let g = Self { nx, ny, pitch };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ImagingError> {
        if self.nx == 0 || self.ny == 0 {
            return Err(ImagingError::InvalidGrid(format!("{}x{} pixels", self.nx, self.ny)));
        }
        if !(self.pitch.is_finite() && self.pitch > 0.0) {
            return Err(ImagingError::InvalidGrid(format!("pitch {}", self.pitch)));
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - 0.5 * (self.nx as f64 - 1.0)) * self.pitch
    }

    pub fn y(&self, j: usize) -> f64 {
        (j as f64 - 0.5 * (self.ny as f64 - 1.0)) * self.pitch
    }

    /// Half extents including the outer half pixels.
    pub fn half_extent(&self) -> (f64, f64) {
        (0.5 * self.nx as f64 * self.pitch, 0.5 * self.ny as f64 * self.pitch)
    }
}

impl Default for TransverseGrid {
    fn default() -> Self {
        Self { nx: 96, ny: 96, pitch: 25e-6 }
    }
}

/// Separable Gaussian amplitude whose intensity has the given FWHMs.
pub fn make_gaussian_spot(
    grid: TransverseGrid,
    fwhm_x: f64,
    fwhm_y: f64,
    center: (f64, f64),
) -> Result<Array2<f64>, ImagingError> {
    grid.validate()?;
    for w in [fwhm_x, fwhm_y] {
        if !(w.is_finite() && w > 0.0) {
            return Err(ImagingError::DegenerateSpot(w));
        }
    }
    let (hx, hy) = grid.half_extent();
    if !(center.0.abs() <= hx && center.1.abs() <= hy) {
        return Err(ImagingError::SpotOutsideGrid(center.0, center.1));
    }
    let ax = -2.0 * LN_2 / (fwhm_x * fwhm_x);
    let ay = -2.0 * LN_2 / (fwhm_y * fwhm_y);
    Ok(Array2::from_shape_fn(grid.shape(), |(j, i)| {
        let dx = grid.x(i) - center.0;
        let dy = grid.y(j) - center.1;
        (ax * dx * dx + ay * dy * dy).exp()
    }))
}

/// Multiplies `amplitude` by `mask`. With `resample` a mask of another shape is
/// mapped onto the amplitude grid by nearest neighbour.
pub fn apply_stencil(amplitude: &Array2<f64>, mask: &Array2<f64>, resample: bool) -> Result<Array2<f64>, ImagingError> {
    if let Some(&bad) = mask.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(ImagingError::MaskRange(bad));
    }
    let (ny, nx) = amplitude.dim();
    let (my, mx) = mask.dim();
    if (my, mx) == (ny, nx) {
        return Ok(amplitude * mask);
    }
    if !resample || my == 0 || mx == 0 {
        return Err(ImagingError::ShapeMismatch { expected: (ny, nx), got: (my, mx) });
    }
    Ok(Array2::from_shape_fn((ny, nx), |(j, i)| {
        let mj = (((j as f64 + 0.5) * my as f64 / ny as f64) as usize).min(my - 1);
        let mi = (((i as f64 + 0.5) * mx as f64 / nx as f64) as usize).min(mx - 1);
        amplitude[[j, i]] * mask[[mj, mi]]
    }))
}

/// Binary letter "c": an annulus between `inner` and `outer` (pixels) around
/// the image center with an opening on the +x side.
pub fn letter_c_mask(nx: usize, ny: usize, outer: f64, inner: f64) -> Array2<f64> {
    let cx = 0.5 * (nx as f64 - 1.0);
    let cy = 0.5 * (ny as f64 - 1.0);
    let opening = 40f64.to_radians();
    Array2::from_shape_fn((ny, nx), |(j, i)| {
        let dx = i as f64 - cx;
        let dy = j as f64 - cy;
        let r = dx.hypot(dy);
        let in_ring = r <= outer && r >= inner;
        let in_gap = dy.atan2(dx).abs() < opening;
        if in_ring && !in_gap {
            1.0
        } else {
            0.0
        }
    })
}

/// Transverse phase-matching gradient and pump profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientSpec {
    /// Hz per meter along x.
    pub detuning_slope: f64,
    /// x position (m) where the detuning shift vanishes.
    #[serde(default)]
    pub detuning_origin: f64,
    /// 1/e² intensity radii (m) of the elliptical pump; `None` is a flat pump.
    #[serde(default)]
    pub pump_waists: Option<(f64, f64)>,
    #[serde(default)]
    pub pump_center: (f64, f64),
    /// Largest probe/pump crossing angle across the beam (rad).
    #[serde(default)]
    pub max_angle: f64,
    /// `(low, high)` bounds (Hz) at which the detuning shift saturates; `None` is unbounded.
    #[serde(default)]
    pub shift_range: Option<(f64, f64)>,
}

impl GradientSpec {
    pub fn uniform() -> Self {
        Self {
            detuning_slope: 0.0,
            detuning_origin: 0.0,
            pump_waists: None,
            pump_center: (0.0, 0.0),
            max_angle: 0.0,
            shift_range: None,
        }
    }

    /// Checks finiteness, waists, and the crossing angle against `sqrt(wavelength / length)`.
    pub fn validate(&self, wavelength_m: f64, length_m: f64) -> Result<(), ImagingError> {
        let finite = [self.detuning_slope, self.detuning_origin, self.pump_center.0, self.pump_center.1, self.max_angle];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(ImagingError::InvalidGradient("non-finite field".into()));
        }
        if let Some((wx, wy)) = self.pump_waists {
            if !(wx.is_finite() && wx > 0.0 && wy.is_finite() && wy > 0.0) {
                return Err(ImagingError::InvalidGradient(format!("pump waists ({wx}, {wy})")));
            }
        }
        if let Some((lo, hi)) = self.shift_range {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(ImagingError::InvalidGradient(format!("shift range ({lo}, {hi})")));
            }
        }
        let spread = phase_matching_spread(wavelength_m, length_m);
        if self.max_angle.abs() > spread {
            return Err(ImagingError::AngleExceedsSpread { angle: self.max_angle, spread });
        }
        Ok(())
    }

    pub fn detuning_at(&self, x: f64) -> f64 {
        let shift = self.detuning_slope * (x - self.detuning_origin);
        match self.shift_range {
            Some((lo, hi)) => shift.clamp(lo, hi),
            None => shift,
        }
    }

    /// Pump intensity relative to its center value.
    pub fn pump_at(&self, x: f64, y: f64) -> f64 {
        match self.pump_waists {
            None => 1.0,
            Some((wx, wy)) => {
                let dx = (x - self.pump_center.0) / wx;
                let dy = (y - self.pump_center.1) / wy;
                (-2.0 * (dx * dx + dy * dy)).exp()
            }
        }
    }
}

impl Default for GradientSpec {
    fn default() -> Self {
        Self::uniform()
    }
}

/// Per-pixel input amplitude and medium modifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    pub grid: TransverseGrid,
    pub amplitude: Array2<f64>,
    /// Shift of every line center (Hz).
    pub detuning_offset: Array2<f64>,
    /// Multiplier on every line strength.
    pub strength_scale: Array2<f64>,
    pub base_model: MediumModel,
}

impl FieldMap {
    pub fn validate(&self) -> Result<(), ImagingError> {
        self.grid.validate()?;
        let shape = self.grid.shape();
        for (name, a) in [
            ("amplitude", &self.amplitude),
            ("detuning_offset", &self.detuning_offset),
            ("strength_scale", &self.strength_scale),
        ] {
            if a.dim() != shape {
                return Err(ImagingError::ShapeMismatch { expected: shape, got: a.dim() });
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(ImagingError::InvalidGradient(format!("non-finite {name}")));
            }
        }
        if self.strength_scale.iter().any(|&s| s < 0.0) {
            return Err(ImagingError::InvalidGradient("negative strength scale".into()));
        }
        Ok(())
    }

    pub fn pixel_model(&self, x: usize, y: usize) -> MediumModel {
        self.base_model.scaled(self.strength_scale[[y, x]]).shifted(self.detuning_offset[[y, x]])
    }
}

pub fn build_field_map(
    grid: TransverseGrid,
    amplitude: Array2<f64>,
    base_model: MediumModel,
    spec: &GradientSpec,
) -> Result<FieldMap, ImagingError> {
    grid.validate()?;
    let wavelength = SPEED_OF_LIGHT / base_model.carrier_hz;
    spec.validate(wavelength, base_model.length_m)?;
    let detuning_offset = Array2::from_shape_fn(grid.shape(), |(_, i)| spec.detuning_at(grid.x(i)));
    let strength_scale = Array2::from_shape_fn(grid.shape(), |(j, i)| spec.pump_at(grid.x(i), grid.y(j)));
    let map = FieldMap { grid, amplitude, detuning_offset, strength_scale, base_model };
    map.validate()?;
    Ok(map)
}

/// Energy per time bin for every pixel.
///
/// `frames[[y, x, k]]` holds the intensity integrated over
/// `[origin + k * bin_width, origin + (k + 1) * bin_width)`. Energy arriving
/// before or after the window is kept in `underflow` and `overflow`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedFrameStack {
    pub frames: Array3<f64>,
    pub bin_width: f64,
    pub origin: f64,
    pub underflow: Array2<f64>,
    pub overflow: Array2<f64>,
    /// Zero rows and columns appended by superpixel binning.
    pub padding: (usize, usize),
}

impl GatedFrameStack {
    pub fn zeros(ny: usize, nx: usize, bins: usize, bin_width: f64, origin: f64) -> Self {
        Self {
            frames: Array3::zeros((ny, nx, bins)),
            bin_width,
            origin,
            underflow: Array2::zeros((ny, nx)),
            overflow: Array2::zeros((ny, nx)),
            padding: (0, 0),
        }
    }

    /// `(ny, nx)`.
    pub fn shape(&self) -> (usize, usize) {
        let (ny, nx, _) = self.frames.dim();
        (ny, nx)
    }

    pub fn bins(&self) -> usize {
        self.frames.dim().2
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.origin + (k as f64 + 0.5) * self.bin_width
    }

    /// Energy in each frame of the window.
    pub fn frame(&self, k: usize) -> Array2<f64> {
        self.frames.index_axis(Axis(2), k).to_owned()
    }

    /// Time-integrated intensity per pixel including out-of-window energy.
    pub fn integrated(&self) -> Array2<f64> {
        self.frames.sum_axis(Axis(2)) + &self.underflow + &self.overflow
    }

    pub fn total_energy(&self) -> f64 {
        self.integrated().sum()
    }

    pub fn trace(&self, x: usize, y: usize) -> Vec<f64> {
        self.frames.slice(ndarray::s![y, x, ..]).to_vec()
    }

    fn aligned_with(&self, other: &Self) -> bool {
        self.frames.dim() == other.frames.dim() && self.bin_width == other.bin_width && self.origin == other.origin
    }
}

/// Accumulates an intensity trace into gate bins.
#[derive(Debug, Clone, Copy)]
struct Gating {
    origin: f64,
    bin_width: f64,
    bins: usize,
}

impl Gating {
    /// Each sample stands for the interval `[t - step/2, t + step/2)` and its
    /// energy is shared among the gates that interval overlaps.
    fn bin_into(&self, grid: &TimeGrid, intensity: &[f64], scale: f64, out: &mut [f64]) -> (f64, f64) {
        let (mut under, mut over) = (0.0, 0.0);
        let width = grid.step / self.bin_width;
        for (n, &v) in intensity.iter().enumerate() {
            let e = v * grid.step * scale;
            let lo = (grid.time(n) - self.origin) / self.bin_width - 0.5 * width;
            let hi = lo + width;
            if hi <= 0.0 {
                under += e;
                continue;
            }
            if lo >= self.bins as f64 {
                over += e;
                continue;
            }
            let mut a = lo;
            if a < 0.0 {
                under += e * (-a / width);
                a = 0.0;
            }
            while a < hi {
                let k = a.floor() as usize;
                if k >= self.bins {
                    over += e * ((hi - a) / width);
                    break;
                }
                let b = hi.min(k as f64 + 1.0);
                out[k] += e * ((b - a) / width);
                a = b;
            }
        }
        (under, over)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagingOptions {
    pub gate_width: f64,
    pub frame_span_fwhm: f64,
}

impl Default for ImagingOptions {
    fn default() -> Self {
        Self { gate_width: DEFAULT_GATE_WIDTH, frame_span_fwhm: DEFAULT_FRAME_SPAN_FWHM }
    }
}

/// Full-resolution result for one pixel, independent of its input amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelPulse {
    pub metrics: PulseMetrics,
    pub peak_gain: f64,
    pub advancement: f64,
}

/// Whole-image (spatially summed) traces and their comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedPulse {
    pub grid: TimeGrid,
    pub reference: Vec<f64>,
    pub output: Vec<f64>,
    pub reference_metrics: PulseMetrics,
    pub metrics: PulseMetrics,
    pub peak_gain: f64,
    pub advancement: f64,
    pub distortion: f64,
}

#[derive(Debug, Clone)]
pub struct ImageRun {
    pub reference: GatedFrameStack,
    pub output: GatedFrameStack,
    /// `None` for dark pixels.
    pub pixels: Array2<Option<PixelPulse>>,
    pub integrated: IntegratedPulse,
}

/// Unit-amplitude response of one distinct pixel medium.
struct PixelResponse {
    frames: Vec<f64>,
    under: f64,
    over: f64,
    pulse: Option<PixelPulse>,
}

/// Distinct pixel media are propagated in chunks of this many.
const RESPONSE_CHUNK: usize = 64;

/// Sends a Gaussian pulse of `pulse_fwhm`, centered in `time_grid`, through
/// every pixel of `map`.
///
/// Pixels sharing the same strength scale and detuning offset share one
/// propagation. Distinct media run in parallel on the current rayon pool and
/// are reduced in a fixed order, so the result does not depend on the pool size.
pub fn propagate_image(
    map: &FieldMap,
    pulse_fwhm: f64,
    time_grid: TimeGrid,
    options: &ImagingOptions,
) -> Result<ImageRun, ImagingError> {
    map.validate()?;
    if !(options.gate_width.is_finite() && options.gate_width > 0.0) {
        return Err(ImagingError::InvalidGate(format!("gate width {}", options.gate_width)));
    }
    if !(options.frame_span_fwhm.is_finite() && options.frame_span_fwhm > 0.0) {
        return Err(ImagingError::InvalidGate(format!("frame span {}", options.frame_span_fwhm)));
    }
    let center = time_grid.start + 0.5 * time_grid.window();
    let reference = make_gaussian(time_grid, pulse_fwhm, center, 1.0)?;
    let propagator = Propagator::new(time_grid);
    let spectrum = propagator.to_spectrum(&reference)?;
    let ref_intensity = reference.intensity();
    let ref_metrics = metrics::analyze_intensity(&ref_intensity, time_grid.start, time_grid.step)?;

    let bins = (options.frame_span_fwhm * pulse_fwhm / options.gate_width).ceil() as usize;
    let gating = Gating {
        origin: ref_metrics.peak_time - 0.5 * bins as f64 * options.gate_width,
        bin_width: options.gate_width,
        bins,
    };
    let (ny, nx) = map.grid.shape();

    // distinct media in first-seen row-major order, with summed pixel weights
    let mut keys: HashMap<(u64, u64), usize> = HashMap::new();
    let mut media: Vec<(usize, usize)> = Vec::new();
    let mut media_weight: Vec<f64> = Vec::new();
    let mut medium_of = Array2::from_elem((ny, nx), usize::MAX);
    for ((y, x), &amp) in map.amplitude.indexed_iter() {
        if amp == 0.0 {
            continue;
        }
        let key = (map.strength_scale[[y, x]].to_bits(), map.detuning_offset[[y, x]].to_bits());
        let id = *keys.entry(key).or_insert_with(|| {
            media.push((x, y));
            media_weight.push(0.0);
            media.len() - 1
        });
        media_weight[id] += amp * amp;
        medium_of[[y, x]] = id;
    }

    let unit = |intensity: &[f64]| {
        let mut frames = vec![0.0; bins];
        let (under, over) = gating.bin_into(&time_grid, intensity, 1.0, &mut frames);
        (frames, under, over)
    };
    let (ref_frames, ref_under, ref_over) = unit(&ref_intensity);

    let mut responses: Vec<PixelResponse> = Vec::with_capacity(media.len());
    let mut out_trace = vec![0.0; time_grid.count];
    for (chunk_index, chunk) in media.chunks(RESPONSE_CHUNK).enumerate() {
        let traces: Vec<Vec<f64>> = chunk
            .par_iter()
            .map(|&(x, y)| -> Result<Vec<f64>, ImagingError> {
                let model = map.pixel_model(x, y);
                if model.is_vacuum() {
                    return Ok(ref_intensity.clone());
                }
                let wrap = |source| ImagingError::Pixel { x, y, source };
                let transfer = propagator.transfer(&model).map_err(wrap)?;
                Ok(propagator.apply(&spectrum, &transfer).map_err(wrap)?.intensity())
            })
            .collect::<Result<_, _>>()?;
        for (k, intensity) in traces.into_iter().enumerate() {
            let weight = media_weight[chunk_index * RESPONSE_CHUNK + k];
            out_trace.iter_mut().zip(&intensity).for_each(|(t, v)| *t += weight * v);
            let (frames, under, over) = unit(&intensity);
            let pulse = metrics::analyze_intensity(&intensity, time_grid.start, time_grid.step).ok().map(|m| PixelPulse {
                peak_gain: m.peak_intensity / ref_metrics.peak_intensity,
                advancement: metrics::advancement(&ref_metrics, &m),
                metrics: m,
            });
            responses.push(PixelResponse { frames, under, over, pulse });
        }
    }

    let mut output = GatedFrameStack::zeros(ny, nx, bins, gating.bin_width, gating.origin);
    let mut reference_stack = GatedFrameStack::zeros(ny, nx, bins, gating.bin_width, gating.origin);
    let mut pixels = Array2::from_elem((ny, nx), None);
    let mut total_weight = 0.0;
    for ((y, x), &id) in medium_of.indexed_iter() {
        if id == usize::MAX {
            continue;
        }
        let weight = map.amplitude[[y, x]].powi(2);
        total_weight += weight;
        let r = &responses[id];
        for (k, (f, rf)) in r.frames.iter().zip(&ref_frames).enumerate() {
            output.frames[[y, x, k]] = weight * f;
            reference_stack.frames[[y, x, k]] = weight * rf;
        }
        output.underflow[[y, x]] = weight * r.under;
        output.overflow[[y, x]] = weight * r.over;
        reference_stack.underflow[[y, x]] = weight * ref_under;
        reference_stack.overflow[[y, x]] = weight * ref_over;
        pixels[[y, x]] = r.pulse.clone();
    }
    if media.iter().all(|&(x, y)| map.pixel_model(x, y).is_vacuum()) {
        // keeps the vacuum trace bit-identical to the reference
        out_trace = ref_intensity.iter().map(|v| v * total_weight).collect();
    }

    let ref_trace: Vec<f64> = ref_intensity.iter().map(|v| v * total_weight).collect();
    let ref_sum = metrics::analyze_intensity(&ref_trace, time_grid.start, time_grid.step)?;
    let out_sum = metrics::analyze_intensity(&out_trace, time_grid.start, time_grid.step)?;
    let advancement = metrics::advancement(&ref_sum, &out_sum);
    let distortion = metrics::distortion_intensity(&ref_trace, &out_trace, time_grid.step, advancement)?;
    let integrated = IntegratedPulse {
        grid: time_grid,
        peak_gain: out_sum.peak_intensity / ref_sum.peak_intensity,
        advancement,
        distortion,
        reference: ref_trace,
        output: out_trace,
        reference_metrics: ref_sum,
        metrics: out_sum,
    };
    Ok(ImageRun { reference: reference_stack, output, pixels, integrated })
}

/// Sums `factor x factor` pixel blocks. Dimensions that are not multiples of
/// `factor` are zero-padded at the high-index end; the padding is recorded.
pub fn superpixel_bin(stack: &GatedFrameStack, factor: usize) -> Result<GatedFrameStack, ImagingError> {
    if factor < 1 {
        return Err(ImagingError::InvalidBinFactor(factor));
    }
    if factor == 1 {
        return Ok(stack.clone());
    }
    let (ny, nx) = stack.shape();
    let (by, bx) = (ny.div_ceil(factor), nx.div_ceil(factor));
    let mut out = GatedFrameStack::zeros(by, bx, stack.bins(), stack.bin_width, stack.origin);
    out.padding = (by * factor - ny, bx * factor - nx);
    for y in 0..ny {
        for x in 0..nx {
            let (sy, sx) = (y / factor, x / factor);
            let src = stack.frames.slice(ndarray::s![y, x, ..]);
            let mut dst = out.frames.slice_mut(ndarray::s![sy, sx, ..]);
            dst += &src;
            out.underflow[[sy, sx]] += stack.underflow[[y, x]];
            out.overflow[[sy, sx]] += stack.overflow[[y, x]];
        }
    }
    Ok(out)
}

/// Per-pixel maps derived from a reference/output stack pair.
///
/// Invalid entries (dark pixels, traces without a resolvable peak) are `NaN`
/// and flagged as low signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMaps {
    pub gain: Array2<f64>,
    /// Seconds, positive = early.
    pub advancement: Array2<f64>,
    /// m/s, from `c / (1 - A c / L)`.
    pub group_velocity: Array2<f64>,
    pub group_index: Array2<f64>,
    /// Time-integrated output intensity.
    pub integrated: Array2<f64>,
    pub low_signal: Array2<bool>,
    /// Advancement uncertainty (s); [`LOW_SIGNAL_UNCERTAINTY`] on flagged pixels.
    pub uncertainty: Array2<f64>,
}

pub fn maps(reference: &GatedFrameStack, output: &GatedFrameStack, length_m: f64) -> Result<ImageMaps, ImagingError> {
    if !reference.aligned_with(output) {
        return Err(ImagingError::StackMismatch(format!(
            "{:?}/{}/{} vs {:?}/{}/{}",
            reference.frames.dim(),
            reference.bin_width,
            reference.origin,
            output.frames.dim(),
            output.bin_width,
            output.origin
        )));
    }
    if !(length_m.is_finite() && length_m > 0.0) {
        return Err(ImagingError::InvalidGradient(format!("length {length_m}")));
    }
    let shape = output.shape();
    let integrated = output.integrated();
    let brightest = integrated.iter().copied().fold(0.0, f64::max);
    let start = output.origin + 0.5 * output.bin_width;

    let mut gain = Array2::from_elem(shape, f64::NAN);
    let mut advancement = Array2::from_elem(shape, f64::NAN);
    let mut low_signal = Array2::from_elem(shape, true);
    for ((y, x), e) in integrated.indexed_iter() {
        let r = metrics::analyze_intensity(&reference.trace(x, y), start, output.bin_width);
        let o = metrics::analyze_intensity(&output.trace(x, y), start, output.bin_width);
        if let (Ok(r), Ok(o)) = (r, o) {
            gain[[y, x]] = o.peak_intensity / r.peak_intensity;
            advancement[[y, x]] = metrics::advancement(&r, &o);
            low_signal[[y, x]] = !(brightest > 0.0 && *e >= LOW_SIGNAL_FRACTION * brightest);
        }
    }
    let group_index = advancement.mapv(|a| 1.0 - a * SPEED_OF_LIGHT / length_m);
    let group_velocity = group_index.mapv(|n| if n != 0.0 { SPEED_OF_LIGHT / n } else { f64::NAN });
    let uncertainty = low_signal.mapv(|f| if f { LOW_SIGNAL_UNCERTAINTY } else { 0.0 });
    Ok(ImageMaps { gain, advancement, group_velocity, group_index, integrated, low_signal, uncertainty })
}

/// Second-moment (D4σ) ellipse of an intensity image, axis aligned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamEllipse {
    pub center: (f64, f64),
    /// Semi-axes `2 sigma` (m); the 1/e² radii for a Gaussian beam.
    pub radii: (f64, f64),
}

impl BeamEllipse {
    /// Computes the ellipse of `image` sampled on `grid`; `None` for a dark image.
    pub fn of(image: &Array2<f64>, grid: &TransverseGrid) -> Option<Self> {
        let total: f64 = image.sum();
        if !(total > 0.0) {
            return None;
        }
        let (mut mx, mut my) = (0.0, 0.0);
        for ((j, i), v) in image.indexed_iter() {
            mx += v * grid.x(i);
            my += v * grid.y(j);
        }
        mx /= total;
        my /= total;
        let (mut vx, mut vy) = (0.0, 0.0);
        for ((j, i), v) in image.indexed_iter() {
            vx += v * (grid.x(i) - mx).powi(2);
            vy += v * (grid.y(j) - my).powi(2);
        }
        Some(Self { center: (mx, my), radii: (2.0 * (vx / total).sqrt(), 2.0 * (vy / total).sqrt()) })
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.center.0) / self.radii.0;
        let dy = (y - self.center.1) / self.radii.1;
        dx * dx + dy * dy <= 1.0
    }
}

/// Extremes of a map pair over the pixels whose centers fall inside an ellipse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSummary {
    pub pixels: usize,
    pub min_advancement: f64,
    pub max_advancement: f64,
    pub min_gain: f64,
    pub max_gain: f64,
    /// Every row is monotone in x, all in the same direction.
    pub monotone_x: bool,
    /// Pixels inside the ellipse whose group index is not negative.
    pub non_negative_group_index: usize,
}

impl MapSummary {
    /// `None` when no valid pixel lies inside the ellipse. `grid` must describe the maps.
    pub fn within(maps: &ImageMaps, grid: &TransverseGrid, ellipse: &BeamEllipse) -> Option<Self> {
        let (ny, nx) = maps.gain.dim();
        let mut s = Self {
            pixels: 0,
            min_advancement: f64::INFINITY,
            max_advancement: f64::NEG_INFINITY,
            min_gain: f64::INFINITY,
            max_gain: f64::NEG_INFINITY,
            monotone_x: true,
            non_negative_group_index: 0,
        };
        let (mut rising, mut falling) = (true, true);
        for y in 0..ny {
            let mut previous: Option<f64> = None;
            for x in 0..nx {
                let a = maps.advancement[[y, x]];
                let g = maps.gain[[y, x]];
                if !ellipse.contains(grid.x(x), grid.y(y)) || !a.is_finite() || !g.is_finite() {
                    continue;
                }
                s.pixels += 1;
                s.min_advancement = s.min_advancement.min(a);
                s.max_advancement = s.max_advancement.max(a);
                s.min_gain = s.min_gain.min(g);
                s.max_gain = s.max_gain.max(g);
                if !(maps.group_index[[y, x]] < 0.0) {
                    s.non_negative_group_index += 1;
                }
                if let Some(p) = previous {
                    rising &= a >= p;
                    falling &= a <= p;
                }
                previous = Some(a);
            }
        }
        s.monotone_x = rising || falling;
        (s.pixels > 0).then_some(s)
    }
}

/// Grid of superpixel centers after binning `grid` by `factor` (exact when `factor` divides both dimensions).
pub fn binned_grid(grid: &TransverseGrid, factor: usize) -> TransverseGrid {
    TransverseGrid { nx: grid.nx.div_ceil(factor), ny: grid.ny.div_ceil(factor), pitch: grid.pitch * factor as f64 }
}

/// Normalized cross-correlation of two equally shaped images.
pub fn normalized_correlation(a: &Array2<f64>, b: &Array2<f64>) -> Option<f64> {
    if a.dim() != b.dim() || a.is_empty() {
        return None;
    }
    let ma = a.mean()?;
    let mb = b.mean()?;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}
