//! Analytic results of the resonant model.

use super::{DynamicsError, Quadrature};
use crate::model::{DeviceParams, PumpSegment};

/// expm1(λt)/λ, continuous through λ = 0.
pub(crate) fn growth_integral(lambda: f64, t: f64) -> f64 {
    if (lambda * t).abs() < 1e-6 {
        t * (1.0 + 0.5 * lambda * t)
    } else {
        (lambda * t).exp_m1() / lambda
    }
}

/// Variance of quadrature `q` after time `t` under constant resonant pumps,
/// starting from variance `v0`.
pub fn variance_closed_form(
    q: Quadrature,
    seg: &PumpSegment,
    dev: &DeviceParams,
    v0: f64,
    t: f64,
) -> Result<f64, DynamicsError> {
    seg.check()?;
    dev.check()?;
    if !v0.is_finite() || !t.is_finite() {
        return Err(DynamicsError::NonFinite("v0 or t"));
    }
    if t < 0.0 {
        return Err(DynamicsError::NegativeTime(t));
    }
    let lambda = seg.gamma_plus - seg.gamma_minus - dev.gamma_m;
    let mix = (seg.gamma_plus.sqrt() + q.sign() * seg.gamma_minus.sqrt()).powi(2);
    let drive = 0.5 * (mix * (2.0 * dev.n_c + 1.0) + dev.gamma_m * (2.0 * dev.n_m + 1.0));
    let decay = if (lambda * t).abs() < 1e-6 {
        1.0 + lambda * t
    } else {
        (lambda * t).exp()
    };
    Ok(v0 * decay + drive * growth_integral(lambda, t))
}

/// Added noise of phase-sensitive amplification (quanta, referred to the
/// input) in the large-gain limit.
pub fn added_noise_ideal(
    q: Quadrature,
    gamma_plus: f64,
    gamma_minus: f64,
    dev: &DeviceParams,
) -> Result<f64, DynamicsError> {
    dev.check()?;
    if !gamma_plus.is_finite() || !gamma_minus.is_finite() || gamma_minus < 0.0 {
        return Err(DynamicsError::NonFinite("rates"));
    }
    if !(gamma_plus > gamma_minus) {
        return Err(DynamicsError::NotAmplifying {
            gamma_plus,
            gamma_minus,
        });
    }
    let net = gamma_plus - gamma_minus - dev.gamma_m;
    if net == 0.0 {
        return Err(DynamicsError::Pole);
    }
    let mix = (gamma_plus.sqrt() + q.sign() * gamma_minus.sqrt()).powi(2);
    Ok((mix * (2.0 * dev.n_c + 1.0) + dev.gamma_m * (2.0 * dev.n_m + 1.0)) / (2.0 * net.abs()))
}

/// Stationary variance of quadrature `q` under dissipative squeezing
/// (Γ₋ > Γ₊).
pub fn squeezed_variance_ideal(
    q: Quadrature,
    gamma_plus: f64,
    gamma_minus: f64,
    dev: &DeviceParams,
) -> Result<f64, DynamicsError> {
    dev.check()?;
    if !gamma_plus.is_finite() || !gamma_minus.is_finite() || gamma_plus < 0.0 {
        return Err(DynamicsError::NonFinite("rates"));
    }
    if !(gamma_minus > gamma_plus) {
        return Err(DynamicsError::NotSqueezing {
            gamma_plus,
            gamma_minus,
        });
    }
    let mix = (gamma_plus.sqrt() + q.sign() * gamma_minus.sqrt()).powi(2);
    let num = mix * (2.0 * dev.n_c + 1.0) + dev.gamma_m * (2.0 * dev.n_m + 1.0);
    Ok(num / (2.0 * (gamma_minus - gamma_plus + dev.gamma_m)))
}

/// Energy gain e^{(Γ₊−Γ₋−Γ_m)t} of a resonant amplification segment.
pub fn energy_gain(seg: &PumpSegment, dev: &DeviceParams) -> f64 {
    ((seg.gamma_plus - seg.gamma_minus - dev.gamma_m) * seg.duration).exp()
}
