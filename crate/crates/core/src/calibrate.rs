//! Y-factor calibration: every quantity is inferred from a ratio of measured
//! variances against a thermal state of known occupancy n_m, so the unknown
//! receiver gain cancels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::Quadrature;
use crate::model::{DeviceParams, ModelError, PumpSegment, ReceiverParams, ZERO_POINT_VARIANCE};
use crate::receiver::{demodulate_envelope, ReceiverError, ShotRecord};
use crate::stats::fit_line;

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("value must be positive, got {0}")]
    NonPositive(f64),
    #[error("ratio must exceed 1, got {0}")]
    RatioTooSmall(f64),
    #[error("variances must satisfy var_therm > var_test > 0 (got {therm}, {test})")]
    VarianceOrder { therm: f64, test: f64 },
    #[error("inconsistent calibration: inferred added noise {0} quanta puts the cooled state below its zero point")]
    Inconsistent(f64),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("envelope fit too noisy: slope {slope:.4e} ± {se:.4e} 1/s")]
    NoisyFit { slope: f64, se: f64 },
    #[error("need at least 3 points with distinct n_m")]
    Degenerate,
    #[error(transparent)]
    Receiver(#[from] ReceiverError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Variance relative to the zero-point level, in dB.
pub fn to_db(v: f64) -> Result<f64, CalibrateError> {
    if !(v > 0.0) {
        return Err(CalibrateError::NonPositive(v));
    }
    Ok(10.0 * (v / ZERO_POINT_VARIANCE).log10())
}

/// Inverse of [`to_db`].
pub fn from_db(db: f64) -> f64 {
    ZERO_POINT_VARIANCE * 10f64.powf(db / 10.0)
}

/// Quantum efficiency (1 + 2⟨ΔX²_add⟩)⁻¹ of a measurement adding `added` quanta.
pub fn quantum_efficiency(added: f64) -> f64 {
    1.0 / (1.0 + 2.0 * added)
}

/// n_sb + n_add ≈ (n_m + 1)/r − 1 from a thermal/cooled two-quadrature ratio.
pub fn residual_occupancy(r: f64, n_m: f64) -> Result<f64, CalibrateError> {
    if !(r > 1.0) {
        return Err(CalibrateError::RatioTooSmall(r));
    }
    Ok((n_m + 1.0) / r - 1.0)
}

/// Resolved-sideband floor κ²/16ω_m².
pub fn sideband_floor(dev: &DeviceParams) -> f64 {
    (dev.kappa / (4.0 * dev.omega_m)).powi(2)
}

/// (n_sb,min, n_add,min): the lowest occupancy reachable by cooling with
/// `cool` and the lowest added occupancy of phase-insensitive amplification
/// with `amp`.
pub fn sideband_limits(
    cool: &PumpSegment,
    amp: &PumpSegment,
    dev: &DeviceParams,
) -> Result<(f64, f64), CalibrateError> {
    dev.check()?;
    if !(cool.gamma_minus > dev.gamma_m) {
        return Err(CalibrateError::Precondition(format!(
            "cooling needs gamma_minus > gamma_m (got {})",
            cool.gamma_minus
        )));
    }
    if !(amp.gamma_plus > dev.gamma_m) {
        return Err(CalibrateError::Precondition(format!(
            "amplification needs gamma_plus > gamma_m (got {})",
            amp.gamma_plus
        )));
    }
    let floor = sideband_floor(dev);
    let n_sb = dev.gamma_m * dev.n_m / (cool.gamma_minus + dev.gamma_m) + floor;
    let n_add = dev.gamma_m * dev.n_m / (amp.gamma_plus - dev.gamma_m) + floor;
    Ok((n_sb, n_add))
}

fn check_order(therm: f64, test: f64) -> Result<(), CalibrateError> {
    if !(therm > test && test > 0.0) || !therm.is_finite() {
        return Err(CalibrateError::VarianceOrder { therm, test });
    }
    Ok(())
}

/// Thermal/cooled variance ratio for given added noise (forward model).
pub fn added_noise_ratio(n_m: f64, n_sb: f64, added: f64) -> f64 {
    (n_m + 0.5 + added) / (n_sb + 0.5 + added)
}

/// Solve r = (n_m + ½ + A)/(n_sb + ½ + A) for the added noise A of one
/// quadrature. Negative results are returned as they are unless they would
/// push the cooled state below its zero point (A ≤ −½).
pub fn infer_added_noise(
    var_therm: f64,
    var_cooled: f64,
    n_m: f64,
    n_sb_assumed: f64,
    _quadrature: Quadrature,
) -> Result<f64, CalibrateError> {
    check_order(var_therm, var_cooled)?;
    let r = var_therm / var_cooled;
    let added = (n_m + 0.5 - r * (n_sb_assumed + 0.5)) / (r - 1.0);
    if !(added > -ZERO_POINT_VARIANCE) {
        return Err(CalibrateError::Inconsistent(added));
    }
    Ok(added)
}

/// Thermal/squeezed variance ratio under phase-insensitive readout (forward model).
pub fn squeeze_ratio(n_m: f64, n_add: f64, variance: f64) -> f64 {
    (n_m + n_add + 1.0) / (variance + n_add + 0.5)
}

/// Squeezed and anti-squeezed variances inferred from a two-quadrature
/// readout. `unphysical` flags results that are negative or violate
/// V₋V₊ ≥ ¼; values are never clipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeInference {
    pub minus: f64,
    pub plus: f64,
    pub n_add: f64,
    pub unphysical: bool,
}

pub fn infer_squeezing(
    var_therm: f64,
    var_sq_max: f64,
    var_sq_min: f64,
    n_m: f64,
    amp: &PumpSegment,
    dev: &DeviceParams,
) -> Result<SqueezeInference, CalibrateError> {
    if amp.gamma_minus != 0.0 {
        return Err(CalibrateError::Precondition(
            "squeezing readout needs a blue-only (two-quadrature) amplifier".into(),
        ));
    }
    for v in [var_therm, var_sq_max, var_sq_min] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(CalibrateError::NonPositive(v));
        }
    }
    dev.check()?;
    if !(amp.gamma_plus > dev.gamma_m) {
        return Err(CalibrateError::Precondition(
            "amplification needs gamma_plus > gamma_m".into(),
        ));
    }
    let n_add = dev.gamma_m * dev.n_m / (amp.gamma_plus - dev.gamma_m) + sideband_floor(dev);
    let solve = |v: f64| (n_m + n_add + 1.0) * v / var_therm - n_add - 0.5;
    let minus = solve(var_sq_min);
    let plus = solve(var_sq_max);
    let unphysical = minus <= 0.0 || plus <= 0.0 || minus * plus < 0.25 * (1.0 - 1e-9);
    Ok(SqueezeInference {
        minus,
        plus,
        n_add,
        unphysical,
    })
}

/// Total variance ⟨ΔX(φ)²⟩ (state plus added noise) as measured against a
/// thermal reference, with nothing subtracted.
pub fn direct_total_variance(
    var_therm: f64,
    var_test: f64,
    n_m: f64,
) -> Result<f64, CalibrateError> {
    for v in [var_therm, var_test] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(CalibrateError::NonPositive(v));
        }
    }
    Ok((n_m + 0.5) * var_test / var_therm)
}

/// Energy gain from the exponential envelope of the amplification window
/// [start, end): a log-linear fit of the demodulated amplitude grows as
/// e^{λt/2}, so G = e^{λ(end − start)}.
pub fn gain_from_envelope(
    rec: &ShotRecord,
    rx: &ReceiverParams,
    start: f64,
    end: f64,
) -> Result<f64, CalibrateError> {
    let pts = demodulate_envelope(rec, rx, start, end, 10.0)?;
    let ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ls: Vec<f64> = pts
        .iter()
        .map(|p| p.1.max(f64::MIN_POSITIVE).ln())
        .collect();
    let fit = fit_line(&ts, &ls).ok_or(CalibrateError::Degenerate)?;
    let scale = fit.slope.abs().max(1.0 / (end - start));
    if !(fit.slope_se <= 0.1 * scale) {
        return Err(CalibrateError::NoisyFit {
            slope: fit.slope,
            se: fit.slope_se,
        });
    }
    Ok((2.0 * fit.slope * (end - start)).exp())
}

/// Result of a temperature sweep fit variance = G·(n_m + n_add + 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalSweepFit {
    pub slope: f64,
    pub intercept: f64,
    pub n_add: f64,
    pub n_add_se: f64,
}

pub fn fit_thermal_sweep(points: &[(f64, f64)]) -> Result<ThermalSweepFit, CalibrateError> {
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let f = fit_line(&xs, &ys).ok_or(CalibrateError::Degenerate)?;
    let ratio = f.intercept / f.slope;
    // delta method on a/b
    let var = (f.intercept_se.powi(2) / f.slope.powi(2))
        + (ratio.powi(2) * f.slope_se.powi(2) / f.slope.powi(2))
        - 2.0 * ratio * f.cov_ab / f.slope.powi(2);
    Ok(ThermalSweepFit {
        slope: f.slope,
        intercept: f.intercept,
        n_add: ratio - 1.0,
        n_add_se: var.max(0.0).sqrt(),
    })
}

/// One calibrated value as written to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    /// Γ₊/Γ₋ or angle of the operating point.
    pub operating_point: f64,
    pub quadrature: Quadrature,
    pub value_quanta: f64,
    pub value_db: Option<f64>,
    pub ci_low: f64,
    pub ci_high: f64,
    pub method: String,
}
