//! Small closed-form helpers for 2×2 matrices.

use nalgebra::{Matrix2, Vector2};

/// Eigenvalues of a symmetric 2×2 matrix, ascending.
pub fn sym_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let mean = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let rad = half_diff.hypot(b);
    (mean - rad, mean + rad)
}

/// Angle θ ∈ [0, π) of the eigenvector (cos θ, sin θ) belonging to the
/// smaller eigenvalue of a symmetric matrix.
pub fn minor_axis_angle(m: &Matrix2<f64>) -> f64 {
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    // major axis at ½·atan2(2b, a − d)
    let major = 0.5 * (2.0 * b).atan2(a - d);
    (major + std::f64::consts::FRAC_PI_2).rem_euclid(std::f64::consts::PI)
}

/// Counter-clockwise rotation by θ.
pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Measurement rotation S(φ): its first row is the measured axis
/// (cos φ, sin φ), so [S G Sᵀ]₁₁ is the marginal variance at angle φ.
pub fn measurement_rotation(phi: f64) -> Matrix2<f64> {
    rotation(-phi)
}

pub fn axis(phi: f64) -> Vector2<f64> {
    let (s, c) = phi.sin_cos();
    Vector2::new(c, s)
}

/// exp(A) for a real 2×2 matrix via A = sI + B with B² = qI.
pub fn expm(a: &Matrix2<f64>) -> Matrix2<f64> {
    let s = 0.5 * a.trace();
    let b = a - Matrix2::identity() * s;
    let q = -b.determinant();
    let (c0, c1) = if q.abs() < 1e-8 {
        // series to O(q³) keeps relative error below 1e-24
        (1.0 + q / 2.0 + q * q / 24.0, 1.0 + q / 6.0 + q * q / 120.0)
    } else if q > 0.0 {
        let w = q.sqrt();
        (w.cosh(), w.sinh() / w)
    } else {
        let w = (-q).sqrt();
        (w.cos(), w.sin() / w)
    };
    (Matrix2::identity() * c0 + b * c1) * s.exp()
}

/// Lower-triangular factor L with L·Lᵀ = m for a symmetric positive
/// semidefinite matrix; tolerates zero diagonal entries.
pub fn psd_factor(m: &Matrix2<f64>) -> Matrix2<f64> {
    let a = m[(0, 0)].max(0.0);
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let c = m[(1, 1)].max(0.0);
    if a > 0.0 {
        let l11 = a.sqrt();
        let l21 = b / l11;
        let l22 = (c - l21 * l21).max(0.0).sqrt();
        Matrix2::new(l11, 0.0, l21, l22)
    } else {
        Matrix2::new(0.0, 0.0, 0.0, c.sqrt())
    }
}

pub fn symmetrize(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry.
pub fn max_abs(m: &Matrix2<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn taylor_expm(a: &Matrix2<f64>) -> Matrix2<f64> {
        // scaling and squaring with a long Taylor series as an independent route
        let k = 4;
        let scaled = a / 2f64.powi(k);
        let mut term = Matrix2::identity();
        let mut sum = Matrix2::identity();
        for n in 1..40 {
            term = term * scaled / n as f64;
            sum += term;
        }
        for _ in 0..k {
            sum = sum * sum;
        }
        sum
    }

    #[test]
    fn expm_matches_series_in_all_regimes() {
        for a in [
            Matrix2::new(0.3, 1.2, -0.7, -0.1), // complex eigenvalues
            Matrix2::new(0.3, 1.2, 0.7, -0.1),  // real eigenvalues
            Matrix2::new(0.5, 0.0, 0.0, 0.5),   // scalar
            Matrix2::new(-1.0, 1e-5, 1e-5, -1.0),
        ] {
            let e = expm(&a);
            let t = taylor_expm(&a);
            for i in 0..4 {
                assert_relative_eq!(e[i], t[i], epsilon = 1e-12, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn psd_factor_reconstructs() {
        let m = Matrix2::new(2.0, 0.3, 0.3, 0.7);
        let l = psd_factor(&m);
        let back = l * l.transpose();
        for i in 0..4 {
            assert_relative_eq!(back[i], m[i], epsilon = 1e-14);
        }
        let l = psd_factor(&Matrix2::new(0.0, 0.0, 0.0, 4.0));
        assert_eq!(l[(1, 1)], 2.0);
    }

    #[test]
    fn eigen_helpers() {
        let m = Matrix2::new(2.0, 0.0, 0.0, 0.125);
        assert_eq!(sym_eigenvalues(&m), (0.125, 2.0));
        assert_relative_eq!(minor_axis_angle(&m), std::f64::consts::FRAC_PI_2);
        let r = rotation(0.4);
        let rotated = r * m * r.transpose();
        assert_relative_eq!(
            minor_axis_angle(&rotated),
            std::f64::consts::FRAC_PI_2 + 0.4,
            max_relative = 1e-12
        );
        let s = measurement_rotation(0.3);
        assert_relative_eq!(s[(0, 0)], 0.3f64.cos());
        assert_relative_eq!(s[(0, 1)], 0.3f64.sin());
    }
}
