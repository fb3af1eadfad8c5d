use approx::assert_relative_eq;
use fastlight::experiment::PulseExperiment;
use fastlight::imaging::{
    build_field_map, make_gaussian_spot, propagate_image, superpixel_bin, GradientSpec, ImagingOptions, TransverseGrid,
};
use fastlight::medium::{calibrate, CalibrationOptions, CalibrationTargets, LineFamily};
use fastlight::signal::{front_probe, make_gaussian, FrontProbeOptions, Propagator};
use fastlight::{LorentzianLine, MediumModel, TimeGrid, RB_D1_CARRIER_HZ};
use proptest::prelude::*;

const LENGTH: f64 = 0.017;

fn medium(lines: Vec<LorentzianLine>) -> MediumModel {
    MediumModel { lines, length_m: LENGTH, carrier_hz: RB_D1_CARRIER_HZ }
}

fn line() -> impl Strategy<Value = LorentzianLine> {
    (-10e6..10e6f64, 1e6..20e6f64, -2.5..2.5f64).prop_map(|(c, g, ln_gain)| {
        let s = medium(Vec::new()).strength_for_log_gain(ln_gain);
        LorentzianLine { center_offset_hz: c, halfwidth_hz: g, strength: s }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn shifting_lines_shifts_the_response(lines in prop::collection::vec(line(), 1..3), d in -30e6..30e6f64, shift in -5e6..5e6f64) {
        let m = medium(lines);
        let shifted = m.shifted(shift);
        assert_relative_eq!(shifted.susceptibility(d + shift).re, m.susceptibility(d).re, max_relative = 1e-9, epsilon = 1e-15);
        // the wavenumber follows the absolute frequency, so gains agree only to ~shift/carrier
        assert_relative_eq!(shifted.intensity_gain(d + shift), m.intensity_gain(d), max_relative = 1e-6);
    }

    #[test]
    fn opposite_lines_cancel(l in line(), d in -30e6..30e6f64) {
        let negated = LorentzianLine { strength: -l.strength, ..l };
        let m = medium(vec![l, negated]);
        prop_assert!(m.susceptibility(d).norm() < 1e-18);
        prop_assert!((m.intensity_gain(d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_gain_roundtrips(ln_gain in -10.0..10.0f64) {
        let m = medium(Vec::new());
        assert_relative_eq!(m.log_gain_for_strength(m.strength_for_log_gain(ln_gain)), ln_gain, max_relative = 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_media_never_precede_the_front(lines in prop::collection::vec(line(), 1..3)) {
        let options = FrontProbeOptions { pulse_fwhm: 200e-9, samples: 1 << 13, window_fwhm: 32.0 };
        let report = front_probe(&medium(lines), 0.0, options).unwrap();
        prop_assert!(report.front_preserved(), "pre-front ratio {}", report.pre_front_ratio);
    }

    #[test]
    fn input_amplitude_does_not_change_the_comparison(lines in prop::collection::vec(line(), 1..3), amp in 1e-3..1e3f64) {
        let grid = TimeGrid::for_pulse(200e-9, 1 << 13, 32.0).unwrap();
        let m = medium(lines);
        let unit = PulseExperiment::from_reference(make_gaussian(grid, 200e-9, 0.0, 1.0).unwrap()).unwrap().measure(&m).unwrap();
        let other = PulseExperiment::from_reference(make_gaussian(grid, 200e-9, 0.0, amp).unwrap()).unwrap().measure(&m).unwrap();
        assert_relative_eq!(unit.advancement, other.advancement, epsilon = 1e-15);
        assert_relative_eq!(unit.peak_gain, other.peak_gain, max_relative = 1e-9);
        assert_relative_eq!(unit.distortion, other.distortion, epsilon = 1e-9);
        prop_assert!((0.0..=2f64.sqrt()).contains(&unit.distortion));
    }
}

#[test]
fn vacuum_propagation_is_the_identity() {
    let grid = TimeGrid::for_pulse(200e-9, 4096, 32.0).unwrap();
    let input = make_gaussian(grid, 200e-9, 0.0, 1.0).unwrap();
    let output = Propagator::new(grid).propagate(&input, &medium(Vec::new())).unwrap();
    for (a, b) in input.samples.iter().zip(&output.samples) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn calibration_meets_its_targets() {
    let targets = CalibrationTargets {
        peak_gain: 2.1,
        advancement: 50e-9,
        pulse_fwhm: 200e-9,
        length_m: LENGTH,
        carrier_hz: RB_D1_CARRIER_HZ,
        family: LineFamily::GainWithAbsorption,
        halfwidths_hz: vec![3e6],
        target_distortion: None,
    };
    let options = CalibrationOptions { time_samples: 1 << 13, window_fwhm: 32.0, ..CalibrationOptions::default() };
    let c = calibrate(&targets, &options).unwrap();
    assert_relative_eq!(c.measured_gain, 2.1, max_relative = 0.02);
    assert_relative_eq!(c.measured_advancement, 50e-9, max_relative = 0.02);

    let check = PulseExperiment::with_samples(200e-9, 1 << 13, 32.0).unwrap().measure(&c.model).unwrap();
    assert_eq!(check.advancement, c.measured_advancement);
    assert_eq!(check.peak_gain, c.measured_gain);
}

#[test]
fn imaging_a_uniform_medium_matches_a_single_pulse() {
    let grid = TransverseGrid { nx: 24, ny: 20, pitch: 50e-6 };
    let amplitude = make_gaussian_spot(grid, 600e-6, 500e-6, (0.0, 0.0)).unwrap();
    let model = medium(vec![
        LorentzianLine { center_offset_hz: 0.0, halfwidth_hz: 30e6, strength: 2.8e-5 },
        LorentzianLine { center_offset_hz: 0.0, halfwidth_hz: 3e6, strength: -2.6e-5 },
    ]);
    let map = build_field_map(grid, amplitude, model.clone(), &GradientSpec::uniform()).unwrap();
    let time = TimeGrid::for_pulse(200e-9, 1 << 13, 32.0).unwrap();
    let run = propagate_image(&map, 200e-9, time, &ImagingOptions::default()).unwrap();

    let single = PulseExperiment::new(time, 200e-9).unwrap().measure(&model).unwrap();
    assert_relative_eq!(run.integrated.advancement, single.advancement, max_relative = 1e-9);
    assert_relative_eq!(run.integrated.peak_gain, single.peak_gain, max_relative = 1e-9);
    for p in run.pixels.iter().flatten() {
        assert_eq!(p.advancement, single.advancement);
    }

    let binned = superpixel_bin(&run.output, 7).unwrap();
    assert_eq!(binned.padding, (1, 4));
    assert_relative_eq!(binned.total_energy(), run.output.total_energy(), max_relative = 1e-12);
}
