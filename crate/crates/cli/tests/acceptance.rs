//! Acceptance suite: one PASS/FAIL line per criterion.

use std::cell::Cell;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use fastlight::experiment::PulseExperiment;
use fastlight::imaging::GradientSpec;
use fastlight::medium::{phase_matching_spread, LorentzianLine, MediumModel};
use fastlight::metrics::{
    analyze_intensity, distortion_intensity, narrowing_factors, predicted_edges, EdgeReport,
};
use fastlight::signal::{front_probe, FrontProbeOptions};
use fastlight::{RB_D1_CARRIER_HZ, SPEED_OF_LIGHT};
use fastlight_cli::{load_scenario, run_scenario, run_sweep, RunOverrides, Scenario};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

const LENGTH: f64 = 0.017;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config { cases, failure_persistence: None, ..Config::default() },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    )
}

fn preset(name: &str) -> Scenario {
    load_scenario(name).expect("preset loads").0
}

fn preset_model(name: &str) -> MediumModel {
    preset(name).medium.expect("preset has an explicit medium").model()
}

fn run_preset(name: &str) -> fastlight_cli::ScenarioOutcome {
    run_scenario(&preset(name), Path::new("."), None, RunOverrides::default()).expect("preset runs")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Eighth-order central difference.
fn derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    const W: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    W.iter().enumerate().map(|(k, w)| w * (f(x + (k + 1) as f64 * h) - f(x - (k + 1) as f64 * h))).sum::<f64>() / h
}

fn line_strategy() -> impl Strategy<Value = LorentzianLine> {
    (-20e6..20e6f64, 2e6..50e6f64, -3.0..3.0f64).prop_map(|(c, g, ln_gain)| {
        let s = ln_gain * SPEED_OF_LIGHT / (2.0 * std::f64::consts::PI * RB_D1_CARRIER_HZ * LENGTH);
        LorentzianLine { center_offset_hz: c, halfwidth_hz: g, strength: s }
    })
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let worst = Cell::new(0.0f64);
    let media = prop::collection::vec(line_strategy(), 1..=2);
    let result = runner(1000).run(&(media, -60e6..60e6f64), |(lines, d)| {
        let gamma = lines.iter().map(|l| l.halfwidth_hz).fold(f64::INFINITY, f64::min);
        let model = MediumModel { lines, length_m: LENGTH, carrier_hz: RB_D1_CARRIER_HZ };
        let n = |x: f64| model.refractive_index(x).value.re;
        let fd = n(d) + (model.carrier_hz + d) * derivative(n, d, 0.05 * gamma);
        let analytic = model.group_index(d);
        let err = (fd - analytic).abs() / analytic.abs().max(1.0);
        worst.set(worst.get().max(err));
        prop_assert!(err <= 1e-6, "n_g {analytic} vs {fd} at {d} Hz");
        Ok(())
    });
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("max relative error {:.2e} over 1000 media in {secs:.3} s", worst.get());
    match result {
        Ok(()) => outcome(secs < 1.0, detail),
        Err(e) => outcome(false, format!("{detail}; {e}")),
    }
}

fn criterion_2() -> Outcome {
    let model = preset_model("fig2");
    let experiment = PulseExperiment::with_samples(2e-6, 1 << 15, 16.0).expect("grid");
    let measured = experiment.measure(&model).expect("propagates").advancement;
    let expected = model.advancement(0.0);
    let err = rel(measured, expected);
    outcome(err <= 0.01, format!("2 us pulse: {measured:.4e} s vs narrow-band {expected:.4e} s ({:.3} %)", 100.0 * err))
}

fn criterion_3() -> Outcome {
    let r = run_preset("fig2").report;
    let p = &r.pulse;
    let velocity_ratio = 1.0 / p.group_index;
    let pass = rel(p.peak_gain, 2.1) <= 0.05
        && (p.advancement_s - 50e-9).abs() <= 2e-9
        && rel(p.group_index, -880.0) <= 0.05;
    outcome(
        pass,
        format!(
            "gain {:.4}, advancement {:.3} ns, v_g = c/{:.1} ({velocity_ratio:.3e} c)",
            p.peak_gain,
            p.advancement_s * 1e9,
            p.group_index
        ),
    )
}

fn criterion_4() -> Outcome {
    let r = run_preset("fig4").report;
    let p = &r.pulse;
    let pass = rel(p.peak_gain, 5.0) <= 0.05
        && (p.advancement_s - 124e-9).abs() <= 3e-9
        && p.relative_advancement >= 0.6
        && (0.6..=1.0).contains(&p.distortion)
        && p.ringing;
    outcome(
        pass,
        format!(
            "gain {:.4}, advancement {:.3} ns ({:.1} % of FWHM), D {:.4}, ringing {} (height {:.3})",
            p.peak_gain,
            p.advancement_s * 1e9,
            100.0 * p.relative_advancement,
            p.distortion,
            p.ringing,
            p.ringing_relative_height.unwrap_or(0.0)
        ),
    )
}

fn criterion_5() -> Outcome {
    let s = preset("sweep-distortion");
    let model = s.medium.as_ref().expect("explicit medium").model();
    let table = run_sweep(&model, &s.pulse, s.sweep.as_ref().expect("sweep section")).expect("sweep runs");
    let (first, last) = (&table.rows[0], table.rows.last().expect("rows"));
    let pass = table.distortion_nondecreasing()
        && table.distortion_change() >= 0.05
        && (first.advancement - 5e-9).abs() < 0.1e-9
        && (last.advancement - 75e-9).abs() < 0.1e-9;
    outcome(
        pass,
        format!(
            "{} points, advancement {:.1}..{:.1} ns, D {:.4} -> {:.4} (change {:.4}), nondecreasing {}",
            table.rows.len(),
            first.advancement * 1e9,
            last.advancement * 1e9,
            first.distortion,
            last.distortion,
            table.distortion_change(),
            table.distortion_nondecreasing()
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut media: Vec<(String, MediumModel, f64)> = Vec::new();
    for name in fastlight_cli::presets::NAMES {
        let s = preset(name);
        let model = s.medium.as_ref().expect("explicit medium").model();
        if let (Some(g), Some(im)) = (&s.gradient, &s.imaging) {
            let grid = im.grid();
            for i in [0, grid.nx - 1] {
                let shift = g.detuning_at(grid.x(i));
                media.push((format!("{name}[x={i}]"), model.shifted(shift), s.pulse.fwhm_s));
            }
        }
        media.push((name.to_string(), model, s.pulse.fwhm_s));
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, model, fwhm) in &media {
        let f = front_probe(model, 0.0, FrontProbeOptions { pulse_fwhm: *fwhm, ..FrontProbeOptions::default() })
            .expect("front probe");
        let advancement = PulseExperiment::with_samples(*fwhm, 1 << 15, 64.0)
            .and_then(|e| e.measure(model))
            .expect("smooth pulse propagates")
            .advancement;
        pass &= f.front_preserved();
        if !model.is_vacuum() && !name.contains('[') {
            pass &= advancement >= 50e-9;
        }
        parts.push(format!("{name} {:.1e}/{:.1} ns", f.pre_front_ratio, advancement * 1e9));
    }
    outcome(pass, format!("pre-front ratio / smooth-pulse advancement: {}", parts.join(", ")))
}

fn profile() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, 8..96).prop_filter("needs energy", |v| v.iter().sum::<f64>() > 1e-3)
}

fn criterion_7() -> Outcome {
    const CASES: u32 = 10_000;
    let start = Instant::now();
    let step = 1e-9;
    let mut failures = Vec::new();
    let mut check = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };
    let pad = |v: &[f64], before: usize, total: usize| {
        let mut out = vec![0.0; total];
        out[before..before + v.len()].copy_from_slice(v);
        out
    };

    check(
        "gain-scaled copy",
        runner(CASES).run(&(profile(), 1e-3..1e3f64, 0usize..16), |(p, k, m)| {
            let total = p.len() + 32;
            let reference = pad(&p, 16, total);
            let output: Vec<f64> = pad(&p, 16 - m, total).iter().map(|v| k * v).collect();
            let d = distortion_intensity(&reference, &output, step, m as f64 * step).map_err(fail)?;
            prop_assert!(d.abs() < 1e-6, "D = {d}");
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    check(
        "disjoint",
        runner(CASES).run(&(profile(), profile()), |(a, b)| {
            let total = a.len() + b.len();
            let reference = pad(&a, 0, total);
            let output = pad(&b, a.len(), total);
            let d = distortion_intensity(&reference, &output, step, 0.0).map_err(fail)?;
            prop_assert!((d - 2f64.sqrt()).abs() < 1e-9, "D = {d}");
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    check(
        "symmetry and scale invariance",
        runner(CASES).run(&(profile(), profile(), 1e-3..1e3f64, 1e-3..1e3f64), |(a, b, ka, kb)| {
            let n = a.len().max(b.len());
            let (a, b) = (pad(&a, 0, n), pad(&b, 0, n));
            let d = distortion_intensity(&a, &b, step, 0.0).map_err(fail)?;
            let swapped = distortion_intensity(&b, &a, step, 0.0).map_err(fail)?;
            let sa: Vec<f64> = a.iter().map(|v| ka * v).collect();
            let sb: Vec<f64> = b.iter().map(|v| kb * v).collect();
            let scaled = distortion_intensity(&sa, &sb, step, 0.0).map_err(fail)?;
            prop_assert!((d - swapped).abs() < 1e-12, "{d} vs {swapped}");
            prop_assert!((d - scaled).abs() < 1e-9, "{d} vs {scaled}");
            prop_assert!((0.0..=2f64.sqrt() + 1e-12).contains(&d));
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("4 x {CASES} cases in {secs:.2} s");
    if failures.is_empty() {
        outcome(secs < 10.0, detail)
    } else {
        outcome(false, format!("{detail}; {}", failures.join("; ")))
    }
}

fn fail(e: impl std::fmt::Display) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

fn gaussian(times: &[f64], center: f64, fwhm: f64) -> Vec<f64> {
    let a = 4.0 * 2f64.ln() / (fwhm * fwhm);
    times.iter().map(|t| (-a * (t - center).powi(2)).exp()).collect()
}

fn criterion_8() -> Outcome {
    let worst_roundtrip = Cell::new(0.0f64);
    let roundtrip = runner(10_000).run(&(-200e-9..200e-9f64, 1e-9..500e-9f64, 0.2..10.0f64), |(t, tau, beta)| {
        let (rise, fall) = predicted_edges(t, tau, beta).map_err(fail)?;
        let (up, down) = narrowing_factors(rise, fall, t, tau).map_err(fail)?;
        let err = rel(up, beta).max(rel(down, beta));
        worst_roundtrip.set(worst_roundtrip.get().max(err));
        prop_assert!(err <= 1e-12, "beta {beta} -> ({up}, {down})");
        Ok(())
    });

    let step = 0.05e-9;
    let times: Vec<f64> = (0..40_000).map(|n| -1e-6 + n as f64 * step).collect();
    let fwhm = 200e-9;
    let reference = gaussian(&times, 0.0, fwhm);
    let ref_metrics = analyze_intensity(&reference, times[0], step).expect("reference");
    let worst_synthetic = Cell::new(0.0f64);
    let synthetic = runner(200).run(&(0.0..150e-9f64, 1.0..3.0f64, 0.5..20.0f64), |(t, beta, gain)| {
        let out: Vec<f64> = gaussian(&times, -t, fwhm / beta).iter().map(|v| gain * v).collect();
        let m = analyze_intensity(&out, times[0], step).map_err(fail)?;
        let e = EdgeReport::from_metrics(&ref_metrics, &m);
        let (up, down) = (e.beta_up.unwrap_or(f64::NAN), e.beta_down.unwrap_or(f64::NAN));
        let err = rel(up, beta).max(rel(down, beta));
        worst_synthetic.set(worst_synthetic.get().max(err));
        prop_assert!(err <= 0.01, "beta {beta} -> ({up}, {down})");
        Ok(())
    });

    let (up, down) = narrowing_factors(24e-9, 124e-9, 80e-9, 100e-9).unwrap_or((f64::NAN, f64::NAN));
    let pass = roundtrip.is_ok() && synthetic.is_ok();
    let mut detail = format!(
        "roundtrip max error {:.1e}, synthetic max error {:.1e}; \
         full-spot edges give ({up:.2}, {down:.2}) vs reported (1.67, 2.04), not scored",
        worst_roundtrip.get(),
        worst_synthetic.get()
    );
    for e in [roundtrip.err().map(|e| e.to_string()), synthetic.err().map(|e| e.to_string())].into_iter().flatten() {
        detail.push_str("; ");
        detail.push_str(&e);
    }
    outcome(pass, detail)
}

fn criterion_9() -> Outcome {
    let r = run_preset("fig3").report;
    let im = r.imaging.expect("imaging report");
    let within = |v: f64, target: f64, tol: f64| (v - target).abs() <= tol;
    let pass = im.binned_in_ellipse > 0
        && im.monotone_x
        && within(im.min_advancement_s, 40e-9, 10e-9)
        && within(im.max_advancement_s, 95e-9, 10e-9)
        && within(im.min_gain, 2.0, 0.4)
        && within(im.max_gain, 12.0, 2.4)
        && im.binned_non_negative_group_index == 0
        && im.pixels_non_negative_group_index == 0
        && im.pixels_unresolved == 0;
    outcome(
        pass,
        format!(
            "{} superpixels in ellipse: advancement {:.1}..{:.1} ns, gain {:.2}..{:.2}, monotone {}, \
             lit pixels with n_g >= 0: {}/{} ({} unresolved)",
            im.binned_in_ellipse,
            im.min_advancement_s * 1e9,
            im.max_advancement_s * 1e9,
            im.min_gain,
            im.max_gain,
            im.monotone_x,
            im.pixels_non_negative_group_index,
            im.lit_pixels,
            im.pixels_unresolved
        ),
    )
}

fn criterion_10() -> Outcome {
    let (lambda, length) = (795e-9, 0.017);
    let spread = phase_matching_spread(lambda, length);
    let gradient = |angle: f64| GradientSpec { max_angle: angle, ..GradientSpec::uniform() };
    let rejects = gradient(7e-3).validate(lambda, length).is_err() && gradient(spread * 1.001).validate(lambda, length).is_err();
    let accepts = gradient(6.7e-3).validate(lambda, length).is_ok();
    let pass = (spread * 1e3 * 10.0).round() == 68.0 && rejects && accepts;
    outcome(pass, format!("spread {:.3} mrad; 7 mrad rejected {rejects}, 6.7 mrad accepted {accepts}", spread * 1e3))
}

fn criterion_11() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_fastlight");
    let dir = tempfile::tempdir().expect("tempdir");
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for name in fastlight_cli::presets::NAMES {
        let mut manifests = Vec::new();
        for (run, threads) in [("a", 1), ("b", 1), ("c", 8)] {
            let out = dir.path().join(format!("{name}-{run}"));
            let status = Command::new(bin)
                .args(["--scenario", name, "--parallel", &threads.to_string(), "--out-dir"])
                .arg(&out)
                .output()
                .expect("binary runs");
            pass &= status.status.success();
            manifests.push(std::fs::read(out.join("manifest.toml")).unwrap_or_default());
        }
        let same = !manifests[0].is_empty() && manifests.iter().all(|m| *m == manifests[0]);
        pass &= same;
        parts.push(format!("{name} {}", if same { "identical" } else { "DIFFERENT" }));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 120.0;
    outcome(pass, format!("{} (3 runs each incl. --parallel 8) in {secs:.1} s", parts.join(", ")))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("group-index oracle", criterion_1),
        ("narrow-band advancement", criterion_2),
        ("fig2 reproduction", criterion_3),
        ("fig4 reproduction", criterion_4),
        ("distortion sweep", criterion_5),
        ("causality", criterion_6),
        ("distortion properties", criterion_7),
        ("narrowing-factor algebra", criterion_8),
        ("fig3 maps", criterion_9),
        ("phase-matching bound", criterion_10),
        ("determinism", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        failed += usize::from(!o.pass);
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
