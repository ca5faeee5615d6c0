use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::TomographyError;
use crate::linalg::sym_eigenvalues;
use crate::model::{principal_angle, SqueezeParams, HEISENBERG_TOLERANCE, ZERO_POINT_VARIANCE};

/// Squeeze parameters of a covariance, with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeFit {
    pub params: SqueezeParams,
    /// Isotropic covariance: φ is undefined and reported as 0.
    pub degenerate: bool,
    /// det < ¼ beyond tolerance; n_sq is then negative.
    pub unphysical: bool,
}

/// Invert the squeezed-thermal parametrization: n_sq + ½ = √det G,
/// r = ¼ ln(λ_max/λ_min) and φ = atan2(−2G₁₂, G₁₁ − G₂₂) in [0, 2π).
pub fn covariance_to_squeeze(cov: &Matrix2<f64>) -> Result<SqueezeFit, TomographyError> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(TomographyError::NotPositiveDefinite);
    }
    let (lo, hi) = sym_eigenvalues(cov);
    if !(lo > 0.0) {
        return Err(TomographyError::NotPositiveDefinite);
    }
    let det = lo * hi;
    let n_sq = det.sqrt() - ZERO_POINT_VARIANCE;
    let r = 0.25 * (hi / lo).ln();
    let off = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
    let diff = cov[(0, 0)] - cov[(1, 1)];
    let degenerate = (hi - lo) <= 1e-12 * hi;
    let phi = if degenerate {
        0.0
    } else {
        principal_angle((-2.0 * off).atan2(diff))
    };
    Ok(SqueezeFit {
        params: SqueezeParams { r, n_sq, phi },
        degenerate,
        unphysical: det < 0.25 * (1.0 - HEISENBERG_TOLERANCE),
    })
}

/// Purity μ = 1/(1 + 2 n_sq).
pub fn purity(sp: &SqueezeParams) -> f64 {
    1.0 / (1.0 + 2.0 * sp.n_sq)
}
