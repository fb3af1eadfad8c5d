//! Runs one scenario and writes its artifacts.

use std::fmt::Write as _;
use std::path::Path;

use fastlight::experiment::PulseExperiment;
use fastlight::imaging::{
    self, apply_stencil, binned_grid, build_field_map, letter_c_mask, make_gaussian_spot, maps, normalized_correlation,
    propagate_image, superpixel_bin, BeamEllipse, GradientSpec, ImageMaps, ImagingOptions, MapSummary,
};
use fastlight::medium::{calibrate, Calibration, CalibrationOptions, CalibrationTargets, LineFamily, LorentzianLine, MediumModel};
use fastlight::metrics::{EdgeReport, PulseMetrics};
use fastlight::signal::{front_probe, FrontProbeOptions, TimeGrid};
use fastlight::SPEED_OF_LIGHT;
use ndarray::Array2;
use serde::Serialize;

use crate::config::{CalibrationConfig, ImagingConfig, Scenario, StencilConfig};
use crate::error::CliError;
use crate::output::{ArtifactWriter, Manifest};
use crate::sweep::{run_sweep, SweepTable};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOverrides {
    pub time_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub medium: MediumReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationReport>,
    pub pulse: PulseReport,
    pub front: FrontSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub imaging: Option<ImagingReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MediumReport {
    pub length_m: f64,
    pub carrier_hz: f64,
    pub lines: Vec<LorentzianLine>,
    /// Narrow-band values at the probe.
    pub cw_group_index: f64,
    pub cw_advancement_s: f64,
    pub cw_intensity_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub family: LineFamily,
    pub halfwidth_hz: f64,
    pub parameters: [f64; 2],
    pub measured_gain: f64,
    pub measured_advancement_s: f64,
    pub distortion: f64,
    pub residual: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseReport {
    pub fwhm_s: f64,
    pub time_samples: usize,
    pub time_step_s: f64,
    pub peak_gain: f64,
    pub advancement_s: f64,
    pub relative_advancement: f64,
    /// `1 - A c / L`.
    pub group_index: f64,
    /// `v_g / c`.
    pub group_velocity_over_c: f64,
    pub distortion: f64,
    pub output_fwhm_s: f64,
    pub rise_advancement_s: f64,
    pub fall_advancement_s: f64,
    pub tau_a_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_up: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_down: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_up_same_sign: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_down_same_sign: Option<f64>,
    pub ringing: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ringing_relative_height: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ringing_time_s: Option<f64>,
    pub multimodal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontSummary {
    pub pre_front_ratio: f64,
    pub earliest_response_s: f64,
    pub peak_advancement_s: f64,
    pub preserved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImagingReport {
    pub nx: usize,
    pub ny: usize,
    pub pitch_m: f64,
    pub bin_factor: usize,
    pub padding: (usize, usize),
    pub gate_width_s: f64,
    pub frame_bins: usize,
    /// D4σ ellipse of the amplified time-integrated image.
    pub ellipse_center_m: (f64, f64),
    pub ellipse_radii_m: (f64, f64),
    pub binned_in_ellipse: usize,
    pub min_advancement_s: f64,
    pub max_advancement_s: f64,
    pub min_gain: f64,
    pub max_gain: f64,
    pub monotone_x: bool,
    pub binned_non_negative_group_index: usize,
    pub lit_pixels: usize,
    pub pixels_non_negative_group_index: usize,
    pub pixels_unresolved: usize,
    pub pixel_min_advancement_s: f64,
    pub pixel_max_advancement_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stencil_correlation: Option<f64>,
    /// Relative mismatch between frame energy and the integrated trace energy.
    pub energy_error: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: Report,
    pub manifest: Manifest,
    pub sweep: Option<SweepTable>,
    pub model: MediumModel,
}

/// Validates, runs and writes one scenario. With `out_dir = None` the
/// artifacts are produced and hashed but not written.
pub fn run_scenario(
    scenario: &Scenario,
    base_dir: &Path,
    out_dir: Option<&Path>,
    overrides: RunOverrides,
) -> Result<ScenarioOutcome, CliError> {
    let mut scenario = scenario.clone();
    if let Some(n) = overrides.time_samples {
        scenario.pulse.time_samples = n;
    }
    let diagnostics = scenario.diagnostics(base_dir);
    if !diagnostics.is_empty() {
        return Err(CliError::Diagnostics(diagnostics));
    }

    let (model, calibration) = resolve_medium(&scenario)?;
    model.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let pulse = scenario.pulse;
    let time_grid = pulse.time_grid()?;

    let mut writer = ArtifactWriter::new(out_dir)?;
    writer.write("scenario.toml", toml::to_string(&scenario).map_err(|e| CliError::Other(e.to_string()))?.as_bytes())?;

    let traced: Traced;
    let mut imaging_report = None;
    if let Some(im) = &scenario.imaging {
        let (t, report) = run_imaging(&scenario, im, base_dir, &model, time_grid, &mut writer)?;
        traced = t;
        imaging_report = Some(report);
    } else {
        let experiment = PulseExperiment::with_samples(pulse.fwhm_s, pulse.time_samples, pulse.window_fwhm)?;
        let m = experiment.measure(&model)?;
        traced = Traced {
            grid: time_grid,
            reference: experiment.reference().intensity(),
            output: m.output.intensity(),
            reference_metrics: *experiment.reference_metrics(),
            metrics: m.metrics,
            peak_gain: m.peak_gain,
            advancement: m.advancement,
            distortion: m.distortion,
        };
    }
    writer.write("trace.csv", trace_csv(&traced).as_bytes())?;

    let front = front_probe(
        &model,
        0.0,
        FrontProbeOptions { pulse_fwhm: pulse.fwhm_s, samples: pulse.time_samples, window_fwhm: pulse.window_fwhm },
    )?;
    let edges = EdgeReport::from_metrics(&traced.reference_metrics, &traced.metrics);
    let (up_same, down_same) = edges.same_sign_betas();
    let group_index = 1.0 - traced.advancement * SPEED_OF_LIGHT / model.length_m;
    let report = Report {
        scenario: scenario.name.clone(),
        medium: MediumReport {
            length_m: model.length_m,
            carrier_hz: model.carrier_hz,
            lines: model.lines.clone(),
            cw_group_index: model.group_index(0.0),
            cw_advancement_s: model.advancement(0.0),
            cw_intensity_gain: model.intensity_gain(0.0),
        },
        calibration: calibration.map(|c| CalibrationReport {
            family: c.family,
            halfwidth_hz: c.halfwidth_hz,
            parameters: c.parameters,
            measured_gain: c.measured_gain,
            measured_advancement_s: c.measured_advancement,
            distortion: c.distortion,
            residual: c.residual,
            evaluations: c.evaluations,
        }),
        pulse: PulseReport {
            fwhm_s: pulse.fwhm_s,
            time_samples: pulse.time_samples,
            time_step_s: time_grid.step,
            peak_gain: traced.peak_gain,
            advancement_s: traced.advancement,
            relative_advancement: traced.advancement / pulse.fwhm_s,
            group_index,
            group_velocity_over_c: 1.0 / group_index,
            distortion: traced.distortion,
            output_fwhm_s: traced.metrics.fwhm,
            rise_advancement_s: edges.rise_advancement,
            fall_advancement_s: edges.fall_advancement,
            tau_a_s: edges.tau_a,
            beta_up: edges.beta_up,
            beta_down: edges.beta_down,
            beta_up_same_sign: up_same,
            beta_down_same_sign: down_same,
            ringing: traced.metrics.ringing.is_some(),
            ringing_relative_height: traced.metrics.ringing.map(|r| r.relative_height),
            ringing_time_s: traced.metrics.ringing.map(|r| r.time),
            multimodal: traced.metrics.multimodal,
        },
        front: FrontSummary {
            pre_front_ratio: front.pre_front_ratio,
            earliest_response_s: front.earliest_response,
            peak_advancement_s: front.peak_advancement,
            preserved: front.front_preserved(),
        },
        imaging: imaging_report,
    };
    writer.write("metrics.toml", toml::to_string(&report).map_err(|e| CliError::Other(e.to_string()))?.as_bytes())?;

    let sweep = match &scenario.sweep {
        Some(s) => {
            let table = run_sweep(&model, &pulse, s)?;
            writer.write("sweep.csv", table.to_csv().as_bytes())?;
            Some(table)
        }
        None => None,
    };
    let manifest = writer.finish(&scenario.name)?;
    Ok(ScenarioOutcome { report, manifest, sweep, model })
}

fn resolve_medium(s: &Scenario) -> Result<(MediumModel, Option<Calibration>), CliError> {
    match (&s.medium, &s.calibration) {
        (Some(m), None) => Ok((m.model(), None)),
        (None, Some(c)) => {
            let cal = run_calibration(c, s)?;
            log::info!(
                "calibrated {} with halfwidth {:e} Hz: gain {:.4}, advancement {:.4e} s",
                s.name,
                cal.halfwidth_hz,
                cal.measured_gain,
                cal.measured_advancement
            );
            Ok((cal.model.clone(), Some(cal)))
        }
        _ => Err(CliError::Config("exactly one of [medium] or [calibration] is required".into())),
    }
}

fn run_calibration(c: &CalibrationConfig, s: &Scenario) -> Result<Calibration, CliError> {
    let targets = CalibrationTargets {
        peak_gain: c.peak_gain,
        advancement: c.advancement_s,
        pulse_fwhm: s.pulse.fwhm_s,
        length_m: c.length_m,
        carrier_hz: c.carrier_hz,
        family: c.family,
        halfwidths_hz: c.halfwidths_hz.clone(),
        target_distortion: c.target_distortion,
    };
    let defaults = CalibrationOptions::default();
    let options = CalibrationOptions {
        tolerance: c.tolerance.unwrap_or(defaults.tolerance),
        gain_width_ratio: c.gain_width_ratio.unwrap_or(defaults.gain_width_ratio),
        time_samples: s.pulse.time_samples,
        window_fwhm: s.pulse.window_fwhm,
        ..defaults
    };
    Ok(calibrate(&targets, &options)?)
}

/// Reference and output intensity traces with their comparison.
struct Traced {
    grid: TimeGrid,
    reference: Vec<f64>,
    output: Vec<f64>,
    reference_metrics: PulseMetrics,
    metrics: PulseMetrics,
    peak_gain: f64,
    advancement: f64,
    distortion: f64,
}

fn trace_csv(t: &Traced) -> String {
    let peak = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let (rp, op) = (peak(&t.reference), peak(&t.output));
    let norm = |v: f64, p: f64| if p > 0.0 { v / p } else { 0.0 };
    let mut s = String::from("time_s,reference,advanced,reference_norm,advanced_norm\n");
    for (n, (r, o)) in t.reference.iter().zip(&t.output).enumerate() {
        let _ = writeln!(s, "{:e},{:e},{:e},{:e},{:e}", t.grid.time(n), r, o, norm(*r, rp), norm(*o, op));
    }
    s
}

fn stencil_mask(im: &ImagingConfig, base_dir: &Path) -> Result<Option<(Array2<f64>, bool)>, CliError> {
    Ok(match &im.stencil {
        None => None,
        Some(StencilConfig::File { path, resample }) => {
            let full = base_dir.join(path);
            let file = std::fs::File::open(&full).map_err(|e| CliError::Config(format!("{}: {e}", full.display())))?;
            let mask = imaging::io::read_pgm(std::io::BufReader::new(file))
                .map_err(|e| CliError::Config(format!("{}: {e}", full.display())))?;
            Some((mask, *resample))
        }
        Some(StencilConfig::LetterC { outer_m, inner_m }) => {
            Some((letter_c_mask(im.nx, im.ny, outer_m / im.pitch_m, inner_m / im.pitch_m), false))
        }
    })
}

fn run_imaging(
    scenario: &Scenario,
    im: &ImagingConfig,
    base_dir: &Path,
    model: &MediumModel,
    time_grid: TimeGrid,
    writer: &mut ArtifactWriter,
) -> Result<(Traced, ImagingReport), CliError> {
    let grid = im.grid();
    let spot = make_gaussian_spot(grid, im.spot_fwhm_m.0, im.spot_fwhm_m.1, im.spot_center_m)?;
    let mask = stencil_mask(im, base_dir)?;
    let amplitude = match &mask {
        Some((m, resample)) => apply_stencil(&spot, m, *resample)?,
        None => spot,
    };
    let gradient = scenario.gradient.unwrap_or_else(GradientSpec::uniform);
    let map = build_field_map(grid, amplitude, model.clone(), &gradient)?;
    let options = ImagingOptions { gate_width: im.gate_width_s, frame_span_fwhm: im.frame_span_fwhm };
    let run = propagate_image(&map, scenario.pulse.fwhm_s, time_grid, &options)?;

    let binned_out = superpixel_bin(&run.output, im.bin_factor)?;
    let binned_ref = superpixel_bin(&run.reference, im.bin_factor)?;
    let binned = maps(&binned_ref, &binned_out, model.length_m)?;
    let bgrid = binned_grid(&grid, im.bin_factor);
    let integrated = run.output.integrated();
    let ellipse = BeamEllipse::of(&integrated, &grid)
        .ok_or_else(|| CliError::Other("amplified image has no energy".into()))?;
    let summary = MapSummary::within(&binned, &bgrid, &ellipse);

    let light_time = model.length_m / SPEED_OF_LIGHT;
    let (mut lit, mut slow, mut unresolved) = (0, 0, 0);
    let (mut pmin, mut pmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for ((y, x), p) in run.pixels.indexed_iter() {
        if map.amplitude[[y, x]] == 0.0 {
            continue;
        }
        lit += 1;
        match p {
            Some(p) => {
                if p.advancement <= light_time {
                    slow += 1;
                }
                pmin = pmin.min(p.advancement);
                pmax = pmax.max(p.advancement);
            }
            None => unresolved += 1,
        }
    }
    let stencil_correlation = match &mask {
        Some((m, resample)) => {
            let on_grid = apply_stencil(&Array2::ones(grid.shape()), m, *resample)?;
            normalized_correlation(&integrated, &on_grid)
        }
        None => None,
    };
    let trace_energy: f64 = run.integrated.output.iter().sum::<f64>() * time_grid.step;
    let frame_energy = run.output.total_energy();
    let energy_error = if trace_energy > 0.0 { (frame_energy - trace_energy).abs() / trace_energy } else { 0.0 };

    write_maps(writer, "maps/binned", &binned, scenario.output.write_images)?;
    let pixel_gain = run.pixels.map(|p| p.as_ref().map_or(f64::NAN, |p| p.peak_gain));
    let pixel_adv = run.pixels.map(|p| p.as_ref().map_or(f64::NAN, |p| p.advancement));
    writer.write_with("maps/pixel/gain.csv", |b| imaging::io::write_map_csv(&pixel_gain, b))?;
    writer.write_with("maps/pixel/advancement_s.csv", |b| imaging::io::write_map_csv(&pixel_adv, b))?;
    writer.write_with("maps/pixel/integrated.csv", |b| imaging::io::write_map_csv(&integrated, b))?;
    if scenario.output.write_images {
        writer.write_with("maps/pixel/integrated.pgm", |b| imaging::io::write_pgm(&integrated, b))?;
        writer.write_with("maps/pixel/input.pgm", |b| imaging::io::write_pgm(&run.reference.integrated(), b))?;
        writer.write_with("maps/pixel/advancement_s.pgm", |b| imaging::io::write_pgm(&pixel_adv, b))?;
    }
    if scenario.output.write_frames {
        writer.write_with("frames/reference.bin", |b| imaging::io::write_raster(&binned_ref, b))?;
        writer.write_with("frames/output.bin", |b| imaging::io::write_raster(&binned_out, b))?;
    }

    let nan = f64::NAN;
    let report = ImagingReport {
        nx: im.nx,
        ny: im.ny,
        pitch_m: im.pitch_m,
        bin_factor: im.bin_factor,
        padding: binned_out.padding,
        gate_width_s: im.gate_width_s,
        frame_bins: run.output.bins(),
        ellipse_center_m: ellipse.center,
        ellipse_radii_m: ellipse.radii,
        binned_in_ellipse: summary.map_or(0, |s| s.pixels),
        min_advancement_s: summary.map_or(nan, |s| s.min_advancement),
        max_advancement_s: summary.map_or(nan, |s| s.max_advancement),
        min_gain: summary.map_or(nan, |s| s.min_gain),
        max_gain: summary.map_or(nan, |s| s.max_gain),
        monotone_x: summary.is_some_and(|s| s.monotone_x),
        binned_non_negative_group_index: summary.map_or(0, |s| s.non_negative_group_index),
        lit_pixels: lit,
        pixels_non_negative_group_index: slow,
        pixels_unresolved: unresolved,
        pixel_min_advancement_s: pmin,
        pixel_max_advancement_s: pmax,
        stencil_correlation,
        energy_error,
    };
    let i = run.integrated;
    let traced = Traced {
        grid: i.grid,
        reference: i.reference,
        output: i.output,
        reference_metrics: i.reference_metrics,
        metrics: i.metrics,
        peak_gain: i.peak_gain,
        advancement: i.advancement,
        distortion: i.distortion,
    };
    Ok((traced, report))
}

fn write_maps(writer: &mut ArtifactWriter, prefix: &str, m: &ImageMaps, images: bool) -> std::io::Result<()> {
    let low = m.low_signal.mapv(|f| if f { 1.0 } else { 0.0 });
    let csvs: [(&str, &Array2<f64>); 7] = [
        ("gain", &m.gain),
        ("advancement_s", &m.advancement),
        ("group_velocity_m_s", &m.group_velocity),
        ("group_index", &m.group_index),
        ("integrated", &m.integrated),
        ("low_signal", &low),
        ("uncertainty_s", &m.uncertainty),
    ];
    for (name, a) in csvs {
        writer.write_with(&format!("{prefix}/{name}.csv"), |b| imaging::io::write_map_csv(a, b))?;
    }
    if images {
        for (name, a) in [("gain", &m.gain), ("advancement_s", &m.advancement), ("integrated", &m.integrated)] {
            writer.write_with(&format!("{prefix}/{name}.pgm"), |b| imaging::io::write_pgm(a, b))?;
        }
    }
    Ok(())
}
