use super::TomographyError;
use crate::linalg::sym_eigenvalues;
use crate::model::SqueezeParams;

pub const DEFAULT_TRUNCATION: usize = 60;
/// Largest probability mass allowed beyond the truncation.
pub const TAIL_TOLERANCE: f64 = 1e-6;

/// Photon-number distribution P_0..P_{N−1} of a squeezed thermal state.
///
/// With covariance eigenvalues a, b the generating function is
/// Σ P_n tⁿ = [(a+½)(b+½)(1−αt)(1−βt)]^(−½), α = (a−½)/(a+½),
/// β = (b−½)/(b+½), which gives the three-term recursion
/// (n+1) P_{n+1} = (α+β)(n+½) P_n − αβ n P_{n−1}.
pub fn fock_populations(
    sp: &SqueezeParams,
    truncation: usize,
) -> Result<Vec<f64>, TomographyError> {
    if truncation == 0 {
        return Err(TomographyError::InsufficientTruncation { n: 0, tail: 1.0 });
    }
    let (a, b) = sym_eigenvalues(&sp.covariance());
    if !(a > 0.0 && a * b >= 0.25 * (1.0 - 1e-9)) {
        return Err(TomographyError::NotPositiveDefinite);
    }
    let alpha = (a - 0.5) / (a + 0.5);
    let beta = (b - 0.5) / (b + 0.5);
    let (p, q) = (alpha + beta, alpha * beta);

    let mut out = Vec::with_capacity(truncation);
    out.push(1.0 / ((a + 0.5) * (b + 0.5)).sqrt());
    let mut prev = 0.0;
    for n in 0..truncation - 1 {
        let nf = n as f64;
        let next = (p * (nf + 0.5) * out[n] - q * nf * prev) / (nf + 1.0);
        prev = out[n];
        out.push(next.max(0.0));
    }
    let tail = 1.0 - out.iter().sum::<f64>();
    if tail >= TAIL_TOLERANCE {
        return Err(TomographyError::InsufficientTruncation {
            n: truncation,
            tail,
        });
    }
    Ok(out)
}

/// [`fock_populations`] starting at [`DEFAULT_TRUNCATION`] and doubling
/// until the tail is negligible.
pub fn fock_populations_auto(sp: &SqueezeParams) -> Result<Vec<f64>, TomographyError> {
    let mut n = DEFAULT_TRUNCATION;
    loop {
        match fock_populations(sp, n) {
            Err(TomographyError::InsufficientTruncation { .. }) if n < 1 << 16 => n *= 2,
            r => return r,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_squeezed_state;
    use crate::tomography::purity;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    /// ρ = S(r) ρ_th S(r)† in an M-level number basis, S(r) = exp(r(a² − a†²)/2).
    fn density_matrix(r: f64, n_th: f64, m: usize) -> DMatrix<f64> {
        let mut lower = DMatrix::zeros(m, m);
        for k in 1..m {
            lower[(k - 1, k)] = (k as f64).sqrt();
        }
        let a2 = &lower * &lower;
        let gen = (&a2 - a2.transpose()) * (0.5 * r);
        let s = gen.exp();
        let x = n_th / (n_th + 1.0);
        let rho_th = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                x.powi(i as i32) / (n_th + 1.0)
            } else {
                0.0
            }
        });
        &s * rho_th * s.transpose()
    }

    #[test]
    fn vacuum() {
        let p = fock_populations(&SqueezeParams::new(0.0, 0.0, 0.0).unwrap(), 10).unwrap();
        assert_eq!(p[0], 1.0);
        assert!(p[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn thermal_matches_density_operator() {
        let p = fock_populations_auto(&SqueezeParams::new(0.0, 0.44, 0.0).unwrap()).unwrap();
        assert_relative_eq!(p[0], 1.0 / 1.44, epsilon = 1e-12);
        assert_relative_eq!(p[0], 0.694, epsilon = 1e-3);
        let rho = density_matrix(0.0, 0.44, 80);
        for k in 0..30 {
            assert_relative_eq!(p[k], rho[(k, k)], epsilon = 1e-12);
        }
    }

    #[test]
    fn squeezed_thermal_matches_density_operator() {
        let sp = reference_squeezed_state();
        let p = fock_populations_auto(&sp).unwrap();
        let rho = density_matrix(sp.r, sp.n_sq, 200);
        for k in 0..40 {
            assert_relative_eq!(p[k], rho[(k, k)], epsilon = 1e-10);
        }
        let tr2: f64 = rho.iter().map(|v| v * v).sum();
        assert_relative_eq!(tr2, purity(&sp), epsilon = 1e-8);
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn squeezed_vacuum_has_even_support() {
        let p = fock_populations_auto(&SqueezeParams::new(0.9, 0.0, 0.3).unwrap()).unwrap();
        for (n, v) in p.iter().enumerate() {
            if n % 2 == 1 {
                assert!(v.abs() < 1e-14, "P_{n} = {v}");
            }
        }
        assert_relative_eq!(p[0], 1.0 / 0.9f64.cosh(), epsilon = 1e-12);
    }

    #[test]
    fn short_truncation_is_rejected() {
        let sp = SqueezeParams::new(0.5, 2.0, 0.0).unwrap();
        assert!(matches!(
            fock_populations(&sp, 5),
            Err(TomographyError::InsufficientTruncation { .. })
        ));
        assert!(fock_populations(&sp, 0).is_err());
    }

    proptest! {
        #[test]
        fn populations_are_rotation_invariant(r in 0.0..1.0f64, n in 0.0..1.5f64, a in 0.0..6.2f64, b in 0.0..6.2f64) {
            let pa = fock_populations_auto(&SqueezeParams::new(r, n, a).unwrap()).unwrap();
            let pb = fock_populations(&SqueezeParams::new(r, n, b).unwrap(), pa.len()).unwrap();
            for (x, y) in pa.iter().zip(&pb) {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!(*x >= 0.0);
            }
            let s: f64 = pa.iter().sum();
            prop_assert!(s <= 1.0 + 1e-9 && s > 1.0 - TAIL_TOLERANCE);
        }
    }
}
