//! Pulsed two-tone electromechanics: quadrature dynamics of a mechanical
//! oscillator under red/blue sideband pumping, a heterodyne receiver model,
//! Y-factor calibration and maximum-likelihood Gaussian state tomography.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod config;
pub mod dynamics;
pub mod linalg;
pub mod model;
pub mod protocol;
pub mod receiver;
pub mod rng;
pub mod stats;
pub mod tomography;

/// Version stamped into every CSV and JSON output.
pub const SCHEMA_VERSION: u32 = 1;
