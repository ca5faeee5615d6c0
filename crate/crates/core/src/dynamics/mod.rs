//! Linear Gaussian dynamics of the mechanical quadratures under two-tone
//! driving, with the cavity adiabatically eliminated.
//!
//! Two drift/diffusion models are available: the resonant rotating-wave
//! model, whose quadratures decouple, and the detuned model in which the
//! pump-shifted cavity detuning Δ and the pump offset δ_m couple X₁ and X₂.
//! Both feed the same covariance integrator and trajectory engine.

mod closed_form;
mod lyapunov;
mod theory;
mod trajectories;

pub use closed_form::{
    added_noise_ideal, energy_gain, squeezed_variance_ideal, variance_closed_form,
};
pub use lyapunov::{
    evolve_covariance, evolve_schedule, schedule_transition, segment_transition,
    stationary_covariance, Transition,
};
pub use theory::{added_noise_full, squeezed_variances_full};
pub use trajectories::{simulate_trajectories, TrajectoryOptions};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DeviceParams, ModelError, PumpSegment, BREAKDOWN_FRACTION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid regime: {0}")]
    InvalidRegime(String),
    #[error("segment is not amplifying (gamma_plus {gamma_plus} <= gamma_minus {gamma_minus})")]
    NotAmplifying { gamma_plus: f64, gamma_minus: f64 },
    #[error("segment is not squeezing (gamma_minus {gamma_minus} <= gamma_plus {gamma_plus})")]
    NotSqueezing { gamma_plus: f64, gamma_minus: f64 },
    #[error(
        "net rate gamma_plus - gamma_minus - gamma_m is exactly zero; stationary value diverges"
    )]
    Pole,
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("negative evolution time {0}")]
    NegativeTime(f64),
    #[error("step {step:.3e} s exceeds 1/(50 x max rate) = {limit:.3e} s")]
    UnstableStep { step: f64, limit: f64 },
    #[error("covariance integration did not reach the step-halving tolerance")]
    NotConverged,
    #[error("drift matrix is not stable; no stationary covariance")]
    Unstable,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One of the two preferred quadratures: `Minus` is X₁ = X₋, `Plus` is X₂ = X₊.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    Minus,
    Plus,
}

impl Quadrature {
    pub fn index(self) -> usize {
        match self {
            Quadrature::Minus => 0,
            Quadrature::Plus => 1,
        }
    }

    /// Sign in (√Γ₊ ± √Γ₋).
    pub(crate) fn sign(self) -> f64 {
        match self {
            Quadrature::Minus => -1.0,
            Quadrature::Plus => 1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Quadrature::Minus => "minus",
            Quadrature::Plus => "plus",
        }
    }
}

/// Which equations of motion drive the quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theory {
    /// Resonant rotating-wave model; detunings are ignored.
    #[default]
    Ideal,
    /// Detuned model with the pump-induced cavity shift added to Δ₀.
    Full,
    /// Detuned model with Δ = Δ₀ (no pump-induced shift).
    FullStaticDetuning,
}

/// dX = A X dt + dW with ⟨dW dWᵀ⟩ = D dt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftDiffusion {
    pub drift: Matrix2<f64>,
    pub diffusion: Matrix2<f64>,
}

impl DriftDiffusion {
    pub fn is_diagonal(&self) -> bool {
        self.drift[(0, 1)] == 0.0 && self.drift[(1, 0)] == 0.0
    }

    /// Largest rate appearing in the drift matrix.
    pub fn max_rate(&self) -> f64 {
        crate::linalg::max_abs(&self.drift)
    }
}

fn check_weak_coupling(seg: &PumpSegment, dev: &DeviceParams) -> Result<(), DynamicsError> {
    seg.check()?;
    dev.check()?;
    let limit = dev.kappa / BREAKDOWN_FRACTION;
    let rate = seg.gamma_plus.max(seg.gamma_minus);
    if !(rate < limit) {
        return Err(DynamicsError::InvalidRegime(format!(
            "max(gamma_plus, gamma_minus) = {rate:.4e} rad/s is not below kappa/2 = {limit:.4e} rad/s"
        )));
    }
    Ok(())
}

/// Quadrature diffusion for given instantaneous rates. The detuned forcing
/// vector has norm (1 + 4Δ²/κ²) times the resonant one and orthogonal
/// components, so its intensity equals the resonant one and carries no
/// X₁–X₂ correlation.
fn diffusion(gamma_plus: f64, gamma_minus: f64, dev: &DeviceParams) -> Matrix2<f64> {
    let (sp, sm) = (gamma_plus.sqrt(), gamma_minus.sqrt());
    let thermal = dev.gamma_m * (dev.n_m + 0.5);
    let cavity = dev.n_c + 0.5;
    Matrix2::new(
        (sp - sm).powi(2) * cavity + thermal,
        0.0,
        0.0,
        (sp + sm).powi(2) * cavity + thermal,
    )
}

/// Drift for given instantaneous rates, detuning Δ and offset δ_m.
fn drift(
    gamma_plus: f64,
    gamma_minus: f64,
    delta: f64,
    delta_m: f64,
    dev: &DeviceParams,
) -> Matrix2<f64> {
    let diag = 0.5 * (gamma_plus - gamma_minus - dev.gamma_m);
    let (sp, sm) = (gamma_plus.sqrt(), gamma_minus.sqrt());
    let ratio = delta / dev.kappa;
    Matrix2::new(
        diag,
        delta_m + ratio * (sp - sm).powi(2),
        -delta_m - ratio * (sp + sm).powi(2),
        diag,
    )
}

/// Resonant rotating-wave drift and diffusion.
pub fn drift_diffusion_rwa(
    seg: &PumpSegment,
    dev: &DeviceParams,
) -> Result<DriftDiffusion, DynamicsError> {
    check_weak_coupling(seg, dev)?;
    if !seg.is_rwa() {
        return Err(DynamicsError::InvalidRegime(format!(
            "resonant model needs delta_0 = delta_m = 0 (got {}, {})",
            seg.delta_0, seg.delta_m
        )));
    }
    Ok(DriftDiffusion {
        drift: drift(seg.gamma_plus, seg.gamma_minus, 0.0, 0.0, dev),
        diffusion: diffusion(seg.gamma_plus, seg.gamma_minus, dev),
    })
}

/// Detuned drift and diffusion using Δ from [`effective_detuning`].
pub fn drift_diffusion_full(
    seg: &PumpSegment,
    dev: &DeviceParams,
) -> Result<DriftDiffusion, DynamicsError> {
    drift_diffusion_detuned(seg, dev, effective_detuning(seg, dev))
}

/// Detuned drift and diffusion for an explicit cavity detuning Δ.
pub fn drift_diffusion_detuned(
    seg: &PumpSegment,
    dev: &DeviceParams,
    delta: f64,
) -> Result<DriftDiffusion, DynamicsError> {
    check_weak_coupling(seg, dev)?;
    if !delta.is_finite() {
        return Err(DynamicsError::NonFinite("detuning"));
    }
    Ok(DriftDiffusion {
        drift: drift(seg.gamma_plus, seg.gamma_minus, delta, seg.delta_m, dev),
        diffusion: diffusion(seg.gamma_plus, seg.gamma_minus, dev),
    })
}

/// Single-mode squeezing strength χ = (2Δ/κ)·√(Γ₊Γ₋) of the detuned model.
pub fn single_mode_squeezing(seg: &PumpSegment, dev: &DeviceParams, delta: f64) -> f64 {
    2.0 * delta / dev.kappa * (seg.gamma_plus * seg.gamma_minus).sqrt()
}

/// Pump-shifted detuning Δ_eff = Δ₀ + (κ / 2ω_m)(Γ₊ + Γ₋), with Γ± taken as
/// the quoted operating-point rates.
pub fn effective_detuning(seg: &PumpSegment, dev: &DeviceParams) -> f64 {
    seg.delta_0 + dev.kappa / (2.0 * dev.omega_m) * (seg.gamma_plus + seg.gamma_minus)
}

impl Theory {
    /// Detuning Δ used for a segment, fixed for the whole segment.
    pub fn detuning(self, seg: &PumpSegment, dev: &DeviceParams) -> f64 {
        match self {
            Theory::Ideal => 0.0,
            Theory::Full => effective_detuning(seg, dev),
            Theory::FullStaticDetuning => seg.delta_0,
        }
    }

    pub fn drift_diffusion(
        self,
        seg: &PumpSegment,
        dev: &DeviceParams,
    ) -> Result<DriftDiffusion, DynamicsError> {
        match self {
            Theory::Ideal => {
                let resonant = PumpSegment {
                    delta_0: 0.0,
                    delta_m: 0.0,
                    ..*seg
                };
                drift_diffusion_rwa(&resonant, dev)
            }
            _ => drift_diffusion_detuned(seg, dev, self.detuning(seg, dev)),
        }
    }

    /// Drift/diffusion at time `t` into the segment, with Γ± scaled by the
    /// squared envelope and Δ held at its segment value.
    pub(crate) fn drift_diffusion_at(
        self,
        seg: &PumpSegment,
        dev: &DeviceParams,
        delta: f64,
        t: f64,
    ) -> DriftDiffusion {
        let (gp, gm) = seg.rates_at(t);
        let delta_m = if self == Theory::Ideal {
            0.0
        } else {
            seg.delta_m
        };
        DriftDiffusion {
            drift: drift(gp, gm, delta, delta_m, dev),
            diffusion: diffusion(gp, gm, dev),
        }
    }
}
