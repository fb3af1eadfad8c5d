//! Scenario files and their validation.

use std::fmt;
use std::path::{Path, PathBuf};

use fastlight::imaging::{self, GradientSpec, TransverseGrid};
use fastlight::medium::{LineFamily, LorentzianLine, MediumModel};
use fastlight::signal::{TimeGrid, DEFAULT_SAMPLES, DEFAULT_WINDOW_FWHM, MIN_WINDOW_FWHM};
use fastlight::{RB_D1_CARRIER_HZ, SPEED_OF_LIGHT};
use serde::{Deserialize, Serialize};

pub const DEFAULT_LENGTH_M: f64 = 0.017;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub medium: Option<MediumConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imaging: Option<ImagingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<GradientSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseConfig {
    pub fwhm_s: f64,
    pub time_samples: usize,
    pub window_fwhm: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self { fwhm_s: 200e-9, time_samples: DEFAULT_SAMPLES, window_fwhm: DEFAULT_WINDOW_FWHM }
    }
}

impl PulseConfig {
    pub fn time_grid(&self) -> Result<TimeGrid, fastlight::signal::SignalError> {
        TimeGrid::for_pulse(self.fwhm_s, self.time_samples, self.window_fwhm)
    }
}

fn default_length() -> f64 {
    DEFAULT_LENGTH_M
}

fn default_carrier() -> f64 {
    RB_D1_CARRIER_HZ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumConfig {
    #[serde(default = "default_length")]
    pub length_m: f64,
    #[serde(default = "default_carrier")]
    pub carrier_hz: f64,
    #[serde(default)]
    pub lines: Vec<LorentzianLine>,
}

impl MediumConfig {
    pub fn model(&self) -> MediumModel {
        MediumModel { lines: self.lines.clone(), length_m: self.length_m, carrier_hz: self.carrier_hz }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub peak_gain: f64,
    pub advancement_s: f64,
    #[serde(default)]
    pub family: LineFamily,
    pub halfwidths_hz: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_distortion: Option<f64>,
    #[serde(default = "default_length")]
    pub length_m: f64,
    #[serde(default = "default_carrier")]
    pub carrier_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_width_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImagingConfig {
    pub nx: usize,
    pub ny: usize,
    pub pitch_m: f64,
    pub spot_fwhm_m: (f64, f64),
    pub spot_center_m: (f64, f64),
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stencil: Option<StencilConfig>,
    pub bin_factor: usize,
    pub gate_width_s: f64,
    pub frame_span_fwhm: f64,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        let grid = TransverseGrid::default();
        Self {
            nx: grid.nx,
            ny: grid.ny,
            pitch_m: grid.pitch,
            spot_fwhm_m: (600e-6, 600e-6),
            spot_center_m: (0.0, 0.0),
            stencil: None,
            bin_factor: 12,
            gate_width_s: imaging::DEFAULT_GATE_WIDTH,
            frame_span_fwhm: imaging::DEFAULT_FRAME_SPAN_FWHM,
        }
    }
}

impl ImagingConfig {
    pub fn grid(&self) -> TransverseGrid {
        TransverseGrid { nx: self.nx, ny: self.ny, pitch: self.pitch_m }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StencilConfig {
    /// Graymap file, relative to the scenario file.
    File {
        path: PathBuf,
        #[serde(default)]
        resample: bool,
    },
    /// Built-in letter "c" centered on the grid; radii in meters.
    LetterC { outer_m: f64, inner_m: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    /// Multiplier on every line strength.
    StrengthScale,
    /// Target peak advancement (s), reached by solving for the strength scale.
    Advancement,
    /// Shift of every line center (Hz).
    DetuningShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl SweepConfig {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        (0..self.steps).map(|i| self.start + (self.stop - self.start) * i as f64 / (self.steps - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub write_frames: bool,
    pub write_images: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { write_frames: true, write_images: true }
    }
}

/// One problem found in a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, Diagnostic> {
        toml::from_str(text).map_err(|e| Diagnostic { field: "<file>".into(), message: e.message().trim().to_string() })
    }

    /// Every problem in the scenario; an empty list means it can run.
    /// Relative stencil paths resolve against `base_dir`.
    pub fn diagnostics(&self, base_dir: &Path) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut bad = |field: &str, message: String| out.push(Diagnostic { field: field.into(), message });

        if self.name.trim().is_empty() {
            bad("name", "must not be empty".into());
        }

        let p = &self.pulse;
        if !(p.fwhm_s.is_finite() && p.fwhm_s > 0.0) {
            bad("pulse.fwhm_s", format!("must be > 0, got {}", p.fwhm_s));
        }
        if !(p.window_fwhm.is_finite() && p.window_fwhm >= MIN_WINDOW_FWHM) {
            bad("pulse.window_fwhm", format!("must be at least {MIN_WINDOW_FWHM}, got {}", p.window_fwhm));
        }
        if p.time_samples < 16 {
            bad("pulse.time_samples", format!("must be at least 16, got {}", p.time_samples));
        }
        let step = (p.fwhm_s > 0.0 && p.window_fwhm > 0.0 && p.time_samples > 0)
            .then(|| p.window_fwhm * p.fwhm_s / p.time_samples as f64);

        let mut bandwidth: Option<(f64, &str)> = None;
        match (&self.medium, &self.calibration) {
            (Some(_), Some(_)) => bad("medium", "give either [medium] or [calibration], not both".into()),
            (None, None) => bad("medium", "one of [medium] or [calibration] is required".into()),
            (Some(m), None) => {
                check_geometry(&mut bad, "medium", m.length_m, m.carrier_hz);
                for (i, line) in m.lines.iter().enumerate() {
                    if let Err(e) = line.validate() {
                        bad(&format!("medium.lines[{i}]"), e.to_string());
                    }
                }
                if m.lines.iter().all(|l| l.validate().is_ok()) {
                    let shift = self.gradient.as_ref().map_or(0.0, |g| max_shift(g, self.imaging.as_ref()));
                    bandwidth = Some((m.model().required_bandwidth() + shift, "medium.lines"));
                }
            }
            (None, Some(c)) => {
                check_geometry(&mut bad, "calibration", c.length_m, c.carrier_hz);
                if !(c.peak_gain.is_finite() && c.peak_gain > 1.0) {
                    bad("calibration.peak_gain", format!("must be > 1, got {}", c.peak_gain));
                }
                if !c.advancement_s.is_finite() {
                    bad("calibration.advancement_s", "must be finite".into());
                }
                if c.halfwidths_hz.is_empty() {
                    bad("calibration.halfwidths_hz", "must list at least one halfwidth".into());
                }
                if let Some(h) = c.halfwidths_hz.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
                    bad("calibration.halfwidths_hz", format!("halfwidths must be > 0, got {h}"));
                }
                if let Some(t) = c.tolerance.filter(|t| !(t.is_finite() && *t > 0.0)) {
                    bad("calibration.tolerance", format!("must be > 0, got {t}"));
                }
                if let Some(r) = c.gain_width_ratio.filter(|r| !(r.is_finite() && *r > 0.0)) {
                    bad("calibration.gain_width_ratio", format!("must be > 0, got {r}"));
                }
                let widest = c.halfwidths_hz.iter().copied().filter(|h| h.is_finite()).fold(0.0, f64::max);
                let reach = match c.family {
                    LineFamily::GainWithAbsorption => c.gain_width_ratio.unwrap_or(10.0) * widest,
                    // line centers move up to 20 halfwidths
                    LineFamily::SingleLine | LineFamily::GainDoublet => 21.0 * widest,
                };
                bandwidth = Some((8.0 * reach, "calibration.halfwidths_hz"));
            }
        }
        if let (Some(step), Some((bw, field))) = (step, bandwidth) {
            if bw > 0.5 / step {
                bad(
                    field,
                    format!(
                        "time step {step:.4e} s cannot resolve the {bw:.4e} Hz medium bandwidth; \
                         a step of at most {:.4e} s is required (more time samples or a shorter window)",
                        0.5 / bw
                    ),
                );
            }
        }

        if let Some(im) = &self.imaging {
            let grid = im.grid();
            if let Err(e) = grid.validate() {
                bad("imaging", e.to_string());
            }
            for (name, w) in [("imaging.spot_fwhm_m", im.spot_fwhm_m.0), ("imaging.spot_fwhm_m", im.spot_fwhm_m.1)] {
                if !(w.is_finite() && w > 0.0) {
                    bad(name, format!("must be > 0, got {w}"));
                }
            }
            if grid.validate().is_ok() {
                let (hx, hy) = grid.half_extent();
                if !(im.spot_center_m.0.abs() <= hx && im.spot_center_m.1.abs() <= hy) {
                    bad("imaging.spot_center_m", format!("{:?} lies outside the grid", im.spot_center_m));
                }
            }
            if im.bin_factor < 1 {
                bad("imaging.bin_factor", "must be at least 1".into());
            }
            if !(im.gate_width_s.is_finite() && im.gate_width_s > 0.0) {
                bad("imaging.gate_width_s", format!("must be > 0, got {}", im.gate_width_s));
            }
            if !(im.frame_span_fwhm.is_finite() && im.frame_span_fwhm > 0.0) {
                bad("imaging.frame_span_fwhm", format!("must be > 0, got {}", im.frame_span_fwhm));
            }
            match &im.stencil {
                Some(StencilConfig::File { path, .. }) => {
                    let full = base_dir.join(path);
                    match std::fs::File::open(&full) {
                        Err(e) => bad("imaging.stencil.path", format!("{}: {e}", full.display())),
                        Ok(f) => {
                            if let Err(e) = imaging::io::read_pgm(std::io::BufReader::new(f)) {
                                bad("imaging.stencil.path", format!("{}: {e}", full.display()));
                            }
                        }
                    }
                }
                Some(StencilConfig::LetterC { outer_m, inner_m })
                    if !(inner_m.is_finite() && outer_m.is_finite() && *inner_m >= 0.0 && outer_m > inner_m) =>
                {
                    bad("imaging.stencil", format!("need 0 <= inner_m < outer_m, got {inner_m}, {outer_m}"));
                }
                Some(StencilConfig::LetterC { .. }) | None => {}
            }
        }

        if let Some(g) = &self.gradient {
            if self.imaging.is_none() {
                bad("gradient", "requires an [imaging] section".into());
            }
            let (length, carrier) = match (&self.medium, &self.calibration) {
                (Some(m), _) => (m.length_m, m.carrier_hz),
                (None, Some(c)) => (c.length_m, c.carrier_hz),
                (None, None) => (DEFAULT_LENGTH_M, RB_D1_CARRIER_HZ),
            };
            if length > 0.0 && carrier > 0.0 {
                if let Err(e) = g.validate(SPEED_OF_LIGHT / carrier, length) {
                    bad("gradient", e.to_string());
                }
            }
        }

        if let Some(s) = &self.sweep {
            if s.steps < 1 {
                bad("sweep.steps", "must be at least 1".into());
            }
            if !(s.start.is_finite() && s.stop.is_finite()) {
                bad("sweep", "start and stop must be finite".into());
            }
            match s.parameter {
                SweepParameter::StrengthScale if s.start < 0.0 || s.stop < 0.0 => {
                    bad("sweep", "strength scales must be >= 0".into())
                }
                SweepParameter::Advancement if s.start <= 0.0 || s.stop <= 0.0 => {
                    bad("sweep", "target advancements must be > 0".into())
                }
                _ => {}
            }
        }
        out
    }
}

fn check_geometry(bad: &mut impl FnMut(&str, String), section: &str, length: f64, carrier: f64) {
    if !(length.is_finite() && length > 0.0) {
        bad(&format!("{section}.length_m"), format!("must be > 0, got {length}"));
    }
    if !(carrier.is_finite() && carrier > 0.0) {
        bad(&format!("{section}.carrier_hz"), format!("must be > 0, got {carrier}"));
    }
}

/// Largest detuning shift the gradient applies on the imaging grid.
fn max_shift(g: &GradientSpec, im: Option<&ImagingConfig>) -> f64 {
    let Some(im) = im else { return 0.0 };
    let grid = im.grid();
    if grid.validate().is_err() {
        return 0.0;
    }
    [grid.x(0), grid.x(grid.nx - 1)].iter().map(|&x| g.detuning_at(x).abs()).fold(0.0, f64::max)
}
