//! Amplifier and squeezer figures of merit under any [`Theory`].

use super::{segment_transition, stationary_covariance, DynamicsError, Theory};
use crate::linalg::sym_eigenvalues;
use crate::model::{DeviceParams, PumpSegment};

/// Added noise of an amplification segment for (X₁, X₂), in quanta referred
/// to the input: the output noise of each quadrature grown from zero divided
/// by that quadrature's power gain (ΦΦᵀ)_ii, as a Y-factor measurement would
/// see it. Finite duration is kept, so the result approaches the large-gain
/// value from below.
pub fn added_noise_full(
    seg: &PumpSegment,
    dev: &DeviceParams,
    theory: Theory,
) -> Result<[f64; 2], DynamicsError> {
    if !(seg.gamma_plus > seg.gamma_minus) {
        return Err(DynamicsError::NotAmplifying {
            gamma_plus: seg.gamma_plus,
            gamma_minus: seg.gamma_minus,
        });
    }
    let tr = segment_transition(seg, dev, theory)?;
    let gain = tr.power_gain();
    Ok([tr.noise[(0, 0)] / gain[0], tr.noise[(1, 1)] / gain[1]])
}

/// Stationary principal variances (squeezed, anti-squeezed) of a squeezing
/// segment held on indefinitely.
pub fn squeezed_variances_full(
    seg: &PumpSegment,
    dev: &DeviceParams,
    theory: Theory,
) -> Result<[f64; 2], DynamicsError> {
    if !(seg.gamma_minus > seg.gamma_plus) {
        return Err(DynamicsError::NotSqueezing {
            gamma_plus: seg.gamma_plus,
            gamma_minus: seg.gamma_minus,
        });
    }
    let dd = theory.drift_diffusion(seg, dev)?;
    let (lo, hi) = sym_eigenvalues(&stationary_covariance(&dd)?);
    Ok([lo, hi])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{added_noise_ideal, energy_gain, squeezed_variance_ideal, Quadrature};
    use crate::model::{default_device, hz};
    use approx::assert_relative_eq;

    #[test]
    fn ideal_theory_reproduces_large_gain_formula() {
        let dev = default_device();
        let g = hz(181e3);
        let seg = PumpSegment::new(30e-6, 2.5 * g, g);
        let [a1, a2] = added_noise_full(&seg, &dev, Theory::Ideal).unwrap();
        let finite = 1.0 - 1.0 / energy_gain(&seg, &dev);
        assert_relative_eq!(
            a1,
            added_noise_ideal(Quadrature::Minus, 2.5 * g, g, &dev).unwrap() * finite,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            a2,
            added_noise_ideal(Quadrature::Plus, 2.5 * g, g, &dev).unwrap() * finite,
            max_relative = 1e-12
        );
    }

    #[test]
    fn ideal_squeezing_matches_stationary_lyapunov() {
        let dev = default_device();
        let g = hz(154e3);
        for ratio in [0.1, 0.5, 0.8] {
            let seg = PumpSegment::new(1.0, ratio * g, g);
            let [lo, hi] = squeezed_variances_full(&seg, &dev, Theory::Ideal).unwrap();
            assert_relative_eq!(
                lo,
                squeezed_variance_ideal(Quadrature::Minus, ratio * g, g, &dev).unwrap(),
                max_relative = 1e-12
            );
            assert_relative_eq!(
                hi,
                squeezed_variance_ideal(Quadrature::Plus, ratio * g, g, &dev).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn detuning_degrades_squeezing() {
        let dev = default_device();
        let g = hz(154e3);
        let seg = PumpSegment::new(1.0, 0.5 * g, g).with_detuning(hz(-74e3), hz(300.0));
        let ideal = squeezed_variances_full(&seg, &dev, Theory::Ideal).unwrap();
        let full = squeezed_variances_full(&seg, &dev, Theory::Full).unwrap();
        assert!(full[0] > ideal[0]);
    }
}
