//! Prints calibrated line parameters for the shipped scenarios.

use fastlight::medium::{calibrate, CalibrationOptions, CalibrationTargets, LineFamily};
use fastlight::RB_D1_CARRIER_HZ;

fn main() {
    let cases = [
        ("fig2", 2.1, 50e-9, vec![3e6], None),
        ("fig3", 2.0, 95e-9, vec![6e6], None),
        ("fig4", 5.0, 124e-9, vec![2.5e6, 3e6], Some(0.8)),
    ];
    for (name, gain, adv, halfwidths, target_distortion) in cases {
        let targets = CalibrationTargets {
            peak_gain: gain,
            advancement: adv,
            pulse_fwhm: 200e-9,
            length_m: 0.017,
            carrier_hz: RB_D1_CARRIER_HZ,
            family: LineFamily::GainWithAbsorption,
            halfwidths_hz: halfwidths,
            target_distortion,
        };
        let t = std::time::Instant::now();
        let options = CalibrationOptions { goal: 1e-7, max_evaluations: 2000, ..CalibrationOptions::default() };
        match calibrate(&targets, &options) {
            Ok(c) => {
                println!(
                    "{name}: halfwidth {:e} params {:?} gain {:.5} adv {:.4e} D {:.4} residual {:.2e} evals {} ({:?})",
                    c.halfwidth_hz, c.parameters, c.measured_gain, c.measured_advancement, c.distortion, c.residual, c.evaluations, t.elapsed()
                );
                for l in &c.model.lines {
                    println!("  line {:e} {:e} {:e}", l.center_offset_hz, l.halfwidth_hz, l.strength);
                }
            }
            Err(e) => println!("{name}: {e}"),
        }
    }
}
