//! Phenomenological dispersive gain medium built from Lorentzian lines.
//!
//! Each line contributes
//!
//! ```text
//! chi_j(d) = -strength_j * halfwidth_j / ((center_j - d) - i * halfwidth_j)
//! ```
//!
//! to the susceptibility at detuning `d` from the carrier. All poles sit at
//! `center_j - i * halfwidth_j`, in the lower half plane, so under the
//! `exp(-i 2 pi nu t)` envelope convention the response is causal for either
//! sign of `strength`. At line center `chi = -i * strength`, which makes a
//! positive strength amplify.
//!
//! The index uses the weak-medium linearisation `n = 1 + chi / 2`.

mod calibrate;

pub use calibrate::{
    calibrate, Calibration, CalibrationError, CalibrationOptions, CalibrationTargets,
    LineFamily,
};

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::SPEED_OF_LIGHT;

/// Intensity gain above which the transfer function is rejected.
pub const MAX_INTENSITY_GAIN: f64 = 1e6;

/// `|chi|` above which `n = 1 + chi/2` is flagged as degraded.
pub const WEAK_MEDIUM_LIMIT: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MediumError {
    #[error("line halfwidth must be finite and > 0, got {0}")]
    InvalidHalfwidth(f64),
    #[error("line strength and center offset must be finite")]
    NonFiniteLine,
    #[error("medium length must be finite and > 0, got {0}")]
    InvalidLength(f64),
    #[error("carrier frequency must be finite and > 0, got {0}")]
    InvalidCarrier(f64),
    #[error("group index is zero at detuning {detuning_hz} Hz; group velocity undefined")]
    UndefinedVelocity { detuning_hz: f64 },
    #[error("intensity gain {gain:.3e} at detuning {detuning_hz} Hz exceeds the {MAX_INTENSITY_GAIN:e} guard")]
    GainOverflow { gain: f64, detuning_hz: f64 },
    #[error("non-finite detuning {0}")]
    NonFiniteDetuning(f64),
}

/// A single Lorentzian line, positioned relative to the envelope carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorentzianLine {
    /// Line center relative to the carrier (Hz).
    pub center_offset_hz: f64,
    /// Half width at half maximum (Hz).
    pub halfwidth_hz: f64,
    /// Dimensionless susceptibility scale; positive amplifies.
    pub strength: f64,
}

impl LorentzianLine {
    pub fn new(center_offset_hz: f64, halfwidth_hz: f64, strength: f64) -> Result<Self, MediumError> {
        let line = Self { center_offset_hz, halfwidth_hz, strength };
        line.validate()?;
        Ok(line)
    }

    pub fn validate(&self) -> Result<(), MediumError> {
        if !(self.halfwidth_hz.is_finite() && self.halfwidth_hz > 0.0) {
            return Err(MediumError::InvalidHalfwidth(self.halfwidth_hz));
        }
        if !(self.strength.is_finite() && self.center_offset_hz.is_finite()) {
            return Err(MediumError::NonFiniteLine);
        }
        Ok(())
    }

    fn denominator(&self, detuning: f64) -> Complex64 {
        Complex64::new(self.center_offset_hz - detuning, -self.halfwidth_hz)
    }

    /// Contribution of this line to the susceptibility.
    pub fn susceptibility(&self, detuning: f64) -> Complex64 {
        -self.strength * self.halfwidth_hz / self.denominator(detuning)
    }

    /// d(chi)/d(detuning), per Hz.
    pub fn susceptibility_slope(&self, detuning: f64) -> Complex64 {
        let den = self.denominator(detuning);
        -self.strength * self.halfwidth_hz / (den * den)
    }
}

/// Line set plus propagation length and carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumModel {
    #[serde(default)]
    pub lines: Vec<LorentzianLine>,
    pub length_m: f64,
    pub carrier_hz: f64,
}

/// Everything the medium says about one detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionSample {
    pub detuning: f64,
    pub susceptibility: Complex64,
    pub index: Complex64,
    pub group_index: f64,
    pub intensity_gain: f64,
    /// Seconds; positive means the pulse arrives before a vacuum reference.
    pub advancement: f64,
    /// True when `|chi|` exceeds [`WEAK_MEDIUM_LIMIT`].
    pub weak_medium_violated: bool,
}

/// Refractive index with the weak-medium validity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefractiveIndex {
    pub value: Complex64,
    pub approximation_degraded: bool,
}

impl MediumModel {
    pub fn new(lines: Vec<LorentzianLine>, length_m: f64, carrier_hz: f64) -> Result<Self, MediumError> {
        let model = Self { lines, length_m, carrier_hz };
        model.validate()?;
        Ok(model)
    }

    pub fn vacuum(length_m: f64, carrier_hz: f64) -> Result<Self, MediumError> {
        Self::new(Vec::new(), length_m, carrier_hz)
    }

    pub fn validate(&self) -> Result<(), MediumError> {
        if !(self.length_m.is_finite() && self.length_m > 0.0) {
            return Err(MediumError::InvalidLength(self.length_m));
        }
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return Err(MediumError::InvalidCarrier(self.carrier_hz));
        }
        self.lines.iter().try_for_each(LorentzianLine::validate)
    }

    pub fn is_vacuum(&self) -> bool {
        self.lines.is_empty()
    }

    /// Same medium with every line strength multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for line in &mut out.lines {
            line.strength *= factor;
        }
        out
    }

    /// Same medium with every line center shifted by `shift_hz`.
    pub fn shifted(&self, shift_hz: f64) -> Self {
        let mut out = self.clone();
        for line in &mut out.lines {
            line.center_offset_hz += shift_hz;
        }
        out
    }

    /// Strength whose line-center intensity gain over this medium is `exp(ln_gain)`.
    pub fn strength_for_log_gain(&self, ln_gain: f64) -> f64 {
        ln_gain * SPEED_OF_LIGHT / (2.0 * PI * self.carrier_hz * self.length_m)
    }

    /// Natural log of the line-center intensity gain produced by `strength`.
    pub fn log_gain_for_strength(&self, strength: f64) -> f64 {
        strength * 2.0 * PI * self.carrier_hz * self.length_m / SPEED_OF_LIGHT
    }

    pub fn susceptibility(&self, detuning: f64) -> Complex64 {
        self.lines.iter().map(|l| l.susceptibility(detuning)).sum()
    }

    fn susceptibility_slope(&self, detuning: f64) -> Complex64 {
        self.lines.iter().map(|l| l.susceptibility_slope(detuning)).sum()
    }

    pub fn refractive_index(&self, detuning: f64) -> RefractiveIndex {
        let chi = self.susceptibility(detuning);
        let degraded = chi.norm() > WEAK_MEDIUM_LIMIT;
        if degraded {
            log::warn!("|chi| = {:.3e} at detuning {detuning} Hz; weak-medium index degraded", chi.norm());
        }
        RefractiveIndex { value: Complex64::new(1.0, 0.0) + chi * 0.5, approximation_degraded: degraded }
    }

    /// `n_g = Re[n + nu dn/dnu]` with `nu = carrier + detuning`, using the
    /// closed-form line derivative.
    pub fn group_index(&self, detuning: f64) -> f64 {
        if self.lines.is_empty() {
            return 1.0;
        }
        let nu = self.carrier_hz + detuning;
        let n = 1.0 + 0.5 * self.susceptibility(detuning).re;
        let dn = 0.5 * self.susceptibility_slope(detuning).re;
        n + nu * dn
    }

    pub fn group_velocity(&self, detuning: f64) -> Result<f64, MediumError> {
        let ng = self.group_index(detuning);
        if ng == 0.0 {
            return Err(MediumError::UndefinedVelocity { detuning_hz: detuning });
        }
        Ok(SPEED_OF_LIGHT / ng)
    }

    /// `(1 - n_g) L / c`: the negative of the relative delay `L/v_g - L/c`.
    pub fn advancement(&self, detuning: f64) -> f64 {
        (1.0 - self.group_index(detuning)) * self.length_m / SPEED_OF_LIGHT
    }

    /// CW intensity gain `|H|^2`.
    pub fn intensity_gain(&self, detuning: f64) -> f64 {
        (2.0 * self.transfer_exponent(detuning).re).exp()
    }

    /// `i k (n - 1) L` with `k = 2 pi (carrier + detuning) / c`.
    pub fn transfer_exponent(&self, detuning: f64) -> Complex64 {
        if self.lines.is_empty() {
            return Complex64::new(0.0, 0.0);
        }
        let k = 2.0 * PI * (self.carrier_hz + detuning) / SPEED_OF_LIGHT;
        let n_minus_one = self.susceptibility(detuning) * 0.5;
        Complex64::i() * n_minus_one * (k * self.length_m)
    }

    /// Transfer function at one detuning, guarded against runaway gain.
    pub fn transfer_at(&self, detuning: f64) -> Result<Complex64, MediumError> {
        if !detuning.is_finite() {
            return Err(MediumError::NonFiniteDetuning(detuning));
        }
        let exponent = self.transfer_exponent(detuning);
        let gain = (2.0 * exponent.re).exp();
        if gain > MAX_INTENSITY_GAIN {
            return Err(MediumError::GainOverflow { gain, detuning_hz: detuning });
        }
        Ok(exponent.exp())
    }

    /// Vacuum-referenced transfer function `exp[i k (n - 1) L]` on a detuning grid.
    pub fn transfer_function(&self, detunings: &[f64]) -> Result<Vec<Complex64>, MediumError> {
        detunings.iter().map(|&d| self.transfer_at(d)).collect()
    }

    pub fn sample(&self, detuning: f64) -> DispersionSample {
        let chi = self.susceptibility(detuning);
        let index = self.refractive_index(detuning);
        DispersionSample {
            detuning,
            susceptibility: chi,
            index: index.value,
            group_index: self.group_index(detuning),
            intensity_gain: self.intensity_gain(detuning),
            advancement: self.advancement(detuning),
            weak_medium_violated: index.approximation_degraded,
        }
    }

    /// Largest `|center| + 4 * FWHM` over the lines; the grid Nyquist
    /// frequency must cover it.
    pub fn required_bandwidth(&self) -> f64 {
        self.lines
            .iter()
            .map(|l| l.center_offset_hz.abs() + 8.0 * l.halfwidth_hz)
            .fold(0.0, f64::max)
    }
}

/// Allowed angular spread for phase matching, `sqrt(lambda / L)` (rad).
pub fn phase_matching_spread(wavelength_m: f64, length_m: f64) -> f64 {
    (wavelength_m / length_m).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RB_D1_CARRIER_HZ;
    use approx::assert_relative_eq;

    fn cell(lines: Vec<LorentzianLine>) -> MediumModel {
        MediumModel::new(lines, 0.017, RB_D1_CARRIER_HZ).unwrap()
    }

    #[test]
    fn vacuum_is_identity() {
        let m = cell(vec![]);
        for d in [-1e9, -3.3e6, 0.0, 7e5] {
            let s = m.sample(d);
            assert_eq!(s.susceptibility, Complex64::new(0.0, 0.0));
            assert_eq!(s.index, Complex64::new(1.0, 0.0));
            assert_eq!(s.group_index, 1.0);
            assert_eq!(s.intensity_gain, 1.0);
            assert_eq!(s.advancement, 0.0);
        }
        assert_eq!(m.transfer_function(&[0.0, 1e6]).unwrap(), vec![Complex64::new(1.0, 0.0); 2]);
    }

    #[test]
    fn line_center_is_pure_gain() {
        let line = LorentzianLine::new(2e6, 5e6, 3e-7).unwrap();
        let chi = cell(vec![line]).susceptibility(2e6);
        assert_relative_eq!(chi.re, 0.0, epsilon = 1e-22);
        assert_relative_eq!(chi.im, -3e-7, max_relative = 1e-14);
    }

    #[test]
    fn off_resonance_matches_direct_evaluation() {
        // strength 1e-7, halfwidth 5 MHz, one halfwidth above center:
        // -s*g/((-g) - i g) = s/(1 + i) = s/2 - i s/2
        let line = LorentzianLine::new(0.0, 5e6, 1e-7).unwrap();
        let chi = cell(vec![line]).susceptibility(5e6);
        assert_relative_eq!(chi.re, 5e-8, max_relative = 1e-14);
        assert_relative_eq!(chi.im, -5e-8, max_relative = 1e-14);
    }

    #[test]
    fn index_is_linear_in_chi() {
        // chi = 2e-6 real: one halfwidth away with strength chosen accordingly
        let line = LorentzianLine::new(0.0, 1e6, 4e-6).unwrap();
        let m = cell(vec![line]);
        let n = m.refractive_index(1e6);
        assert_relative_eq!(n.value.re, 1.0 + 1e-6, max_relative = 1e-15);
        assert!(!n.approximation_degraded);
        let strong = cell(vec![LorentzianLine::new(0.0, 1e6, 0.5).unwrap()]);
        assert!(strong.refractive_index(0.0).approximation_degraded);
    }

    #[test]
    fn transfer_gain_at_line_center_matches_closed_form() {
        let m = cell(vec![LorentzianLine::new(0.0, 2e6, 2e-6).unwrap()]);
        let h = m.transfer_at(0.0).unwrap();
        let expected = (2.0 * PI * RB_D1_CARRIER_HZ * 2e-6 * 0.017 / SPEED_OF_LIGHT).exp();
        assert_relative_eq!(h.norm_sqr(), expected, max_relative = 1e-12);
        assert_relative_eq!(m.log_gain_for_strength(m.strength_for_log_gain(3.7)), 3.7, max_relative = 1e-14);
    }

    #[test]
    fn transfer_guard_trips() {
        let m = cell(vec![LorentzianLine::new(0.0, 2e6, 0.0).unwrap()]);
        let s = m.strength_for_log_gain(15.0);
        let m = cell(vec![LorentzianLine::new(0.0, 2e6, s).unwrap()]);
        assert!(matches!(m.transfer_at(0.0), Err(MediumError::GainOverflow { .. })));
        assert!(m.transfer_at(1e9).is_ok());
    }

    #[test]
    fn transfer_is_pointwise() {
        let m = cell(vec![
            LorentzianLine::new(-1e6, 2e6, 1e-6).unwrap(),
            LorentzianLine::new(3e6, 1e6, -5e-7).unwrap(),
        ]);
        let grid: Vec<f64> = (0..257).map(|i| (i as f64 - 128.0) * 7.3e4).collect();
        let mut reversed = grid.clone();
        reversed.reverse();
        let a = m.transfer_function(&grid).unwrap();
        let mut b = m.transfer_function(&reversed).unwrap();
        b.reverse();
        assert_eq!(a, b);
        for (d, h) in grid.iter().zip(&a) {
            assert_eq!(*h, m.transfer_at(*d).unwrap());
        }
    }

    #[test]
    fn gain_line_wing_is_anomalous() {
        let m = cell(vec![LorentzianLine::new(-3e6, 1e6, 1e-6).unwrap()]);
        let h = 10.0;
        let slope = (m.refractive_index(h).value.re - m.refractive_index(-h).value.re) / (2.0 * h);
        assert!(slope < 0.0);
        assert!(m.group_index(0.0) < 0.0);
        // flipping to an absorption line flips the sign of n_g - 1
        let flipped = m.scaled(-1.0);
        assert!(flipped.group_index(0.0) > 1.0);
    }

    #[test]
    fn advancement_from_group_index() {
        // n_g = -880 over 1.7 cm -> 881 L / c
        let adv = (1.0 - -880.0) * 0.017 / SPEED_OF_LIGHT;
        assert_relative_eq!(adv, 49.96e-9, max_relative = 1e-3);
        let adv = (1.0 - -2180.0) * 0.017 / SPEED_OF_LIGHT;
        assert_relative_eq!(adv, 123.67e-9, max_relative = 1e-3);
    }

    #[test]
    fn zero_group_index_is_an_error() {
        // n_g(0) = 1 + nu * dn/dnu for a line at center -g: choose strength so n_g = 0
        let probe = LorentzianLine::new(-1e6, 1e6, 1.0).unwrap();
        let unit = cell(vec![probe]);
        let ng1 = unit.group_index(0.0) - 1.0;
        let m = unit.scaled(-1.0 / ng1);
        let ng = m.group_index(0.0);
        assert!(ng.abs() < 1e-12, "{ng}");
        if ng == 0.0 {
            assert!(m.group_velocity(0.0).is_err());
        }
        let vac = cell(vec![]);
        assert_eq!(vac.group_velocity(0.0).unwrap(), SPEED_OF_LIGHT);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(LorentzianLine::new(0.0, 0.0, 1.0).is_err());
        assert!(LorentzianLine::new(0.0, -1.0, 1.0).is_err());
        assert!(LorentzianLine::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(MediumModel::new(vec![], 0.0, 1e14).is_err());
        assert!(MediumModel::new(vec![], 0.01, -1.0).is_err());
    }

    #[test]
    fn phase_matching_spread_for_the_cell() {
        let spread = phase_matching_spread(795e-9, 0.017);
        assert_relative_eq!(spread, 6.8385e-3, max_relative = 1e-4);
    }
}
