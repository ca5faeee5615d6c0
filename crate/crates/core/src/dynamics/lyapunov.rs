//! Covariance evolution dG/dt = A G + G Aᵀ + D.
//!
//! Every segment is summarised by its Gaussian transition (Φ, N): the mean
//! maps as Φ·x and the covariance as Φ G Φᵀ + N. Constant diagonal drifts use
//! the exact solution; everything else goes through RK4 with step halving
//! until the result stops moving at the 1e-9 level.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::closed_form::growth_integral;
use super::{DriftDiffusion, DynamicsError, Theory};
use crate::linalg::{expm, max_abs, psd_factor, symmetrize};
use crate::model::{DeviceParams, GaussianState, ModelError, PulseSchedule, PumpSegment};

const REL_TOL: f64 = 1e-9;
const MAX_STEPS: usize = 1 << 24;

/// Linear Gaussian map x → Φx + w, w ~ N(0, N).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub phi: Matrix2<f64>,
    pub noise: Matrix2<f64>,
}

impl Transition {
    pub fn identity() -> Self {
        Self {
            phi: Matrix2::identity(),
            noise: Matrix2::zeros(),
        }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Transition) -> Transition {
        Transition {
            phi: next.phi * self.phi,
            noise: symmetrize(&(next.phi * self.noise * next.phi.transpose() + next.noise)),
        }
    }

    pub fn apply_cov(&self, cov: &Matrix2<f64>) -> Matrix2<f64> {
        symmetrize(&(self.phi * cov * self.phi.transpose() + self.noise))
    }

    /// Propagate a state; the result is checked for physicality.
    pub fn apply(&self, state: &GaussianState) -> Result<GaussianState, ModelError> {
        GaussianState::new(self.phi * state.mean(), self.apply_cov(state.cov()))
    }

    /// Draw one end point given the start point `x0`.
    pub fn sample<R: Rng + ?Sized>(&self, x0: &Vector2<f64>, rng: &mut R) -> Vector2<f64> {
        let l = psd_factor(&self.noise);
        let xi = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        self.phi * x0 + l * xi
    }

    /// Per-quadrature power gain (ΦΦᵀ)_ii.
    pub fn power_gain(&self) -> [f64; 2] {
        let g = self.phi * self.phi.transpose();
        [g[(0, 0)], g[(1, 1)]]
    }
}

#[derive(Clone, Copy)]
struct Joint {
    phi: Matrix2<f64>,
    noise: Matrix2<f64>,
}

impl Joint {
    fn axpy(&self, h: f64, k: &Joint) -> Joint {
        Joint {
            phi: self.phi + k.phi * h,
            noise: self.noise + k.noise * h,
        }
    }
}

fn rhs(dd: &DriftDiffusion, y: &Joint) -> Joint {
    let a = &dd.drift;
    Joint {
        phi: a * y.phi,
        noise: a * y.noise + y.noise * a.transpose() + dd.diffusion,
    }
}

fn rk4<F: Fn(f64) -> DriftDiffusion>(
    field: &F,
    t0: f64,
    t1: f64,
    steps: usize,
    y0: Joint,
) -> Joint {
    let h = (t1 - t0) / steps as f64;
    let mut y = y0;
    for i in 0..steps {
        let t = t0 + h * i as f64;
        let mid = field(t + 0.5 * h);
        let k1 = rhs(&field(t), &y);
        let k2 = rhs(&mid, &y.axpy(0.5 * h, &k1));
        let k3 = rhs(&mid, &y.axpy(0.5 * h, &k2));
        let k4 = rhs(&field(t + h), &y.axpy(h, &k3));
        y = Joint {
            phi: y.phi + (k1.phi + k2.phi * 2.0 + k3.phi * 2.0 + k4.phi) * (h / 6.0),
            noise: y.noise + (k1.noise + k2.noise * 2.0 + k3.noise * 2.0 + k4.noise) * (h / 6.0),
        };
    }
    y
}

fn relative_change(a: &Matrix2<f64>, b: &Matrix2<f64>) -> f64 {
    let scale = max_abs(b);
    if scale == 0.0 {
        0.0
    } else {
        max_abs(&(a - b)) / scale
    }
}

/// Integrate (Φ, N) over [t0, t1] on a smooth stretch of the drive.
fn integrate_smooth<F: Fn(f64) -> DriftDiffusion>(
    field: &F,
    t0: f64,
    t1: f64,
    rate: f64,
    y0: Joint,
) -> Result<Joint, DynamicsError> {
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(y0);
    }
    let mut steps = ((span * rate * 20.0).ceil() as usize).clamp(8, MAX_STEPS);
    let mut coarse = rk4(field, t0, t1, steps, y0);
    while steps < MAX_STEPS {
        steps *= 2;
        let fine = rk4(field, t0, t1, steps, y0);
        if relative_change(&coarse.phi, &fine.phi) < REL_TOL
            && relative_change(&coarse.noise, &fine.noise) < REL_TOL
        {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(DynamicsError::NotConverged)
}

/// Exact transition of a constant diagonal drift.
fn diagonal_transition(dd: &DriftDiffusion, t: f64) -> Transition {
    let a = [dd.drift[(0, 0)], dd.drift[(1, 1)]];
    let mut phi = Matrix2::zeros();
    let mut noise = Matrix2::zeros();
    for i in 0..2 {
        phi[(i, i)] = (a[i] * t).exp();
        for j in 0..2 {
            noise[(i, j)] = dd.diffusion[(i, j)] * growth_integral(a[i] + a[j], t);
        }
    }
    Transition { phi, noise }
}

/// Transition of a constant drift/diffusion over time `t`.
pub fn constant_transition(dd: &DriftDiffusion, t: f64) -> Result<Transition, DynamicsError> {
    if !t.is_finite() {
        return Err(DynamicsError::NonFinite("time"));
    }
    if t < 0.0 {
        return Err(DynamicsError::NegativeTime(t));
    }
    if dd.is_diagonal() {
        return Ok(diagonal_transition(dd, t));
    }
    let field = |_: f64| *dd;
    let y = integrate_smooth(
        &field,
        0.0,
        t,
        dd.max_rate(),
        Joint {
            phi: Matrix2::identity(),
            noise: Matrix2::zeros(),
        },
    )?;
    Ok(Transition {
        phi: expm(&(dd.drift * t)),
        noise: symmetrize(&y.noise),
    })
}

/// Evolve a state under a constant drift/diffusion for time `t`.
pub fn evolve_covariance(
    state: &GaussianState,
    dd: &DriftDiffusion,
    t: f64,
) -> Result<GaussianState, DynamicsError> {
    Ok(constant_transition(dd, t)?.apply(state)?)
}

/// Transition across one pump segment, including its envelope edges.
pub fn segment_transition(
    seg: &PumpSegment,
    dev: &DeviceParams,
    theory: Theory,
) -> Result<Transition, DynamicsError> {
    let nominal = theory.drift_diffusion(seg, dev)?;
    if !seg.has_edges() {
        return constant_transition(&nominal, seg.duration);
    }
    let delta = theory.detuning(seg, dev);
    let field = |t: f64| theory.drift_diffusion_at(seg, dev, delta, t);
    // split where the envelope's second derivative jumps
    let edge = (2.0 * seg.envelope_sigma).min(0.5 * seg.duration);
    let breaks = [0.0, edge, seg.duration - edge, seg.duration];
    let rate = nominal.max_rate().max(1.0 / seg.envelope_sigma);
    let mut y = Joint {
        phi: Matrix2::identity(),
        noise: Matrix2::zeros(),
    };
    for w in breaks.windows(2) {
        y = integrate_smooth(&field, w[0], w[1], rate, y)?;
    }
    Ok(Transition {
        phi: y.phi,
        noise: symmetrize(&y.noise),
    })
}

/// Composite transition of a whole schedule.
pub fn schedule_transition(
    schedule: &PulseSchedule,
    dev: &DeviceParams,
    theory: Theory,
) -> Result<Transition, DynamicsError> {
    schedule
        .iter()
        .try_fold(Transition::identity(), |acc, seg| {
            Ok(acc.then(&segment_transition(seg, dev, theory)?))
        })
}

/// States after each segment of `schedule`, starting from `state`.
pub fn evolve_schedule(
    state: &GaussianState,
    schedule: &PulseSchedule,
    dev: &DeviceParams,
    theory: Theory,
) -> Result<Vec<GaussianState>, DynamicsError> {
    let mut out = Vec::with_capacity(schedule.len());
    let mut current = *state;
    for seg in schedule.iter() {
        current = segment_transition(seg, dev, theory)?.apply(&current)?;
        out.push(current);
    }
    Ok(out)
}

/// Solution of A G + G Aᵀ + D = 0 for a stable drift.
pub fn stationary_covariance(dd: &DriftDiffusion) -> Result<Matrix2<f64>, DynamicsError> {
    let a = &dd.drift;
    if !(a.trace() < 0.0 && a.determinant() > 0.0) {
        return Err(DynamicsError::Unstable);
    }
    let (p, b, c, d) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    // unknowns (G₁₁, G₁₂, G₂₂)
    let m = Matrix3::new(2.0 * p, 2.0 * b, 0.0, c, p + d, b, 0.0, 2.0 * c, 2.0 * d);
    let rhs = -Vector3::new(
        dd.diffusion[(0, 0)],
        0.5 * (dd.diffusion[(0, 1)] + dd.diffusion[(1, 0)]),
        dd.diffusion[(1, 1)],
    );
    let g = m.lu().solve(&rhs).ok_or(DynamicsError::Unstable)?;
    Ok(Matrix2::new(g[0], g[1], g[1], g[2]))
}
