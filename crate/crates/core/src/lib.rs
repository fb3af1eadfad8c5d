#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Fast-light pulse and image propagation through anomalously dispersive gain media.
//!
//! The crate is organised bottom-up:
//!
//! * [`medium`] holds the phenomenological Lorentzian-line medium: susceptibility,
//!   refractive and group index, transfer function, and calibration of line
//!   parameters to a target pulse gain and advancement.
//! * [`signal`] holds sampled complex envelopes, Gaussian pulse synthesis and
//!   spectral-domain propagation.
//! * [`metrics`] measures pulses: peak and edge timing, distortion, and narrowing
//!   factors.
//! * [`imaging`] propagates multi-spatial-mode images pixel by pixel and reduces
//!   them to gated frames and gain/advancement maps.
//!
//! Sign conventions: envelopes evolve as `exp(-i 2 pi nu t)`, a line with positive
//! `strength` amplifies, and a positive advancement means the pulse arrives earlier
//! than a vacuum-referenced pulse.

pub mod experiment;
pub mod imaging;
pub mod medium;
pub mod metrics;
pub mod signal;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Carrier frequency of the Rb D1 line probe used throughout the presets (795 nm).
pub const RB_D1_CARRIER_HZ: f64 = SPEED_OF_LIGHT / 795e-9;

pub use imaging::{FieldMap, GatedFrameStack, GradientSpec, TransverseGrid};
pub use medium::{DispersionSample, LorentzianLine, MediumModel};
pub use metrics::{EdgeReport, PulseMetrics};
pub use signal::{Envelope, TimeGrid};
