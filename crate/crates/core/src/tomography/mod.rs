//! Gaussian state tomography from angle-resolved quadrature marginals.
//!
//! The covariance G maximizing the Gaussian likelihood of samples x_k taken
//! along axes u_k = (cos φ_k, sin φ_k) satisfies D = R with
//! D = Σ u uᵀ/s, R = Σ u uᵀ x²/s², s = uᵀGu + δ²_η. The reconstruction
//! iterates G ← T G Tᵀ with T = D⁻¹R, falling back to the diluted step
//! T = (I + εD⁻¹R)/(1 + ε) whenever the plain step would lower the
//! likelihood.

mod bootstrap;
mod fock;
mod io;
mod squeeze;

pub use bootstrap::{
    analyze, bootstrap_ci, AnalysisOptions, ParameterIntervals, ReconstructionResult,
};
pub use fock::{fock_populations, fock_populations_auto, DEFAULT_TRUNCATION, TAIL_TOLERANCE};
pub use io::{read_marginals_csv, write_fock_csv, write_marginals_csv, DatasetMetadata};
pub use squeeze::{covariance_to_squeeze, purity, SqueezeFit};

use std::f64::consts::PI;

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{axis, max_abs, symmetrize};
use crate::model::{GaussianState, ModelError};
use crate::rng::stream;

#[derive(Debug, Error)]
pub enum TomographyError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("quantum efficiency must lie in (0, 1], got {0}")]
    InvalidEfficiency(f64),
    #[error("reconstruction did not converge in {0} iterations")]
    NotConverged(usize),
    #[error("singular D matrix")]
    SingularD,
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("Fock truncation {n} leaves tail mass {tail:.3e}")]
    InsufficientTruncation { n: usize, tail: f64 },
    #[error("need at least 200 bootstrap resamples, got {0}")]
    TooFewResamples(usize),
    #[error("estimator failed on {failed} of {total} resamples")]
    BootstrapFailures { failed: usize, total: usize },
    #[error("likelihood decreased at iteration {iteration}: {before} -> {after}")]
    LikelihoodDecrease {
        iteration: usize,
        before: f64,
        after: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv: {0}")]
    Csv(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// δ²_η = (1 − η)/(2η): vacuum noise admitted by an efficiency-η measurement.
pub fn efficiency_noise(eta_q: f64) -> f64 {
    (1.0 - eta_q) / (2.0 * eta_q)
}

/// Samples x along measurement angles φ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalDataset {
    /// (φ in rad, x in quanta^½).
    pub points: Vec<(f64, f64)>,
    pub eta_q: f64,
}

impl MarginalDataset {
    pub fn new(points: Vec<(f64, f64)>, eta_q: f64) -> Result<Self, TomographyError> {
        let d = Self { points, eta_q };
        d.check()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn check(&self) -> Result<(), TomographyError> {
        if !(self.eta_q > 0.0 && self.eta_q <= 1.0) {
            return Err(TomographyError::InvalidEfficiency(self.eta_q));
        }
        if self
            .points
            .iter()
            .any(|(p, x)| !p.is_finite() || !x.is_finite())
        {
            return Err(TomographyError::InvalidDataset("non-finite sample".into()));
        }
        let mut axes: Vec<f64> = self.points.iter().map(|p| p.0.rem_euclid(PI)).collect();
        axes.sort_by(f64::total_cmp);
        axes.dedup();
        if axes.len() < 2 {
            return Err(TomographyError::InvalidDataset(
                "need at least 2 distinct angles".into(),
            ));
        }
        // largest empty arc of the axis circle (circumference π)
        let mut gap = axes[0] + PI - axes[axes.len() - 1];
        for w in axes.windows(2) {
            gap = gap.max(w[1] - w[0]);
        }
        if PI - gap < PI / 2.0 - 1e-12 {
            return Err(TomographyError::InvalidDataset(format!(
                "angles span {:.4} rad; need at least pi/2",
                PI - gap
            )));
        }
        Ok(())
    }

    /// Same samples, every angle shifted by θ.
    pub fn rotated(&self, theta: f64) -> Self {
        Self {
            points: self.points.iter().map(|&(p, x)| (p + theta, x)).collect(),
            eta_q: self.eta_q,
        }
    }
}

/// Draw `shots_per_angle` samples at each angle from `state`, broadened by
/// δ²_η. Angle j uses stream `(seed, j)`.
pub fn sample_marginals(
    state: &GaussianState,
    angles: &[f64],
    shots_per_angle: usize,
    eta_q: f64,
    seed: u64,
) -> Result<MarginalDataset, TomographyError> {
    if !(eta_q > 0.0 && eta_q <= 1.0) {
        return Err(TomographyError::InvalidEfficiency(eta_q));
    }
    let extra = efficiency_noise(eta_q);
    let mut points = Vec::with_capacity(angles.len() * shots_per_angle);
    for (j, &phi) in angles.iter().enumerate() {
        let u = axis(phi);
        let mean = u.dot(state.mean());
        let sd = ((u.transpose() * state.cov() * u)[0] + extra).sqrt();
        let mut rng = stream(seed, j as u64);
        for _ in 0..shots_per_angle {
            let z: f64 = rng.sample(StandardNormal);
            points.push((phi, mean + sd * z));
        }
    }
    Ok(MarginalDataset { points, eta_q })
}

/// How the measurement inefficiency is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfficiencyMode {
    /// δ²_η sits in the likelihood; the result is the state before loss.
    #[default]
    Deconvolve,
    /// δ²_η is left in the reported covariance.
    Fold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    pub max_iter: usize,
    /// Stop when max |ΔG| / max |G| falls below this.
    pub tol: f64,
    pub mode: EfficiencyMode,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-10,
            mode: EfficiencyMode::Deconvolve,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub cov: Matrix2<f64>,
    pub iterations: usize,
    /// Log-likelihood before the first and after every iteration.
    pub log_likelihood: Vec<f64>,
}

/// Per-angle sufficient statistics (count, Σx²): the zero-mean Gaussian
/// likelihood depends on the data only through these.
#[derive(Debug, Clone)]
pub(crate) struct AngleStats {
    groups: Vec<(Matrix2<f64>, f64, f64)>,
}

impl AngleStats {
    pub(crate) fn from_points<'a, I: IntoIterator<Item = &'a (f64, f64)>>(points: I) -> Self {
        let mut pairs: Vec<(f64, f64)> = points.into_iter().copied().collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut groups = Vec::new();
        let mut i = 0;
        while i < pairs.len() {
            let phi = pairs[i].0;
            let (mut n, mut s2) = (0.0, 0.0);
            while i < pairs.len() && pairs[i].0 == phi {
                n += 1.0;
                s2 += pairs[i].1 * pairs[i].1;
                i += 1;
            }
            let u = axis(phi);
            groups.push((u * u.transpose(), n, s2));
        }
        Self { groups }
    }

    fn variances(&self, g: &Matrix2<f64>, extra: f64) -> Option<Vec<f64>> {
        self.groups
            .iter()
            .map(|(p, _, _)| {
                let s = (p.component_mul(g)).sum() + extra;
                (s > 0.0 && s.is_finite()).then_some(s)
            })
            .collect()
    }

    fn log_likelihood(&self, g: &Matrix2<f64>, extra: f64) -> Option<f64> {
        let s = self.variances(g, extra)?;
        Some(
            -0.5 * self
                .groups
                .iter()
                .zip(&s)
                .map(|((_, n, s2), s)| n * (2.0 * PI * s).ln() + s2 / s)
                .sum::<f64>(),
        )
    }

    /// D⁻¹R at G.
    fn step_matrix(&self, g: &Matrix2<f64>, extra: f64) -> Result<Matrix2<f64>, TomographyError> {
        let s = self
            .variances(g, extra)
            .ok_or(TomographyError::NotPositiveDefinite)?;
        let mut d = Matrix2::zeros();
        let mut r = Matrix2::zeros();
        for ((p, n, s2), s) in self.groups.iter().zip(&s) {
            d += p * (n / s);
            r += p * (s2 / (s * s));
        }
        let dinv = d.try_inverse().ok_or(TomographyError::SingularD)?;
        Ok(dinv * r)
    }
}

fn extra_noise(data: &MarginalDataset, mode: EfficiencyMode) -> f64 {
    match mode {
        EfficiencyMode::Deconvolve => efficiency_noise(data.eta_q),
        EfficiencyMode::Fold => 0.0,
    }
}

/// Maximum-likelihood covariance of the marginals, starting from `init`
/// (vacuum if `None`). Every accepted step raises the log-likelihood.
pub fn reconstruct_covariance(
    data: &MarginalDataset,
    init: Option<&GaussianState>,
    opts: &ReconstructOptions,
) -> Result<Reconstruction, TomographyError> {
    data.check()?;
    let stats = AngleStats::from_points(&data.points);
    let g0 = init
        .map(|s| *s.cov())
        .unwrap_or_else(|| *GaussianState::vacuum().cov());
    reconstruct_from_stats(&stats, extra_noise(data, opts.mode), g0, opts)
}

pub(crate) fn reconstruct_from_stats(
    stats: &AngleStats,
    extra: f64,
    g0: Matrix2<f64>,
    opts: &ReconstructOptions,
) -> Result<Reconstruction, TomographyError> {
    let mut g = g0;
    let mut ll = stats
        .log_likelihood(&g, extra)
        .ok_or(TomographyError::NotPositiveDefinite)?;
    let mut trace = vec![ll];
    for it in 1..=opts.max_iter {
        let t = stats.step_matrix(&g, extra)?;
        let mut eps = 1.0;
        let mut next = None;
        // plain step first, then ever more diluted ones
        for attempt in 0..64 {
            let step = if attempt == 0 {
                t
            } else {
                (Matrix2::identity() + t * eps) / (1.0 + eps)
            };
            let cand = symmetrize(&(step * g * step.transpose()));
            if let Some(l) = stats.log_likelihood(&cand, extra) {
                // strict: the plain step can settle into a 2-cycle of equal likelihood
                if l > ll {
                    next = Some((cand, l));
                    break;
                }
            }
            if attempt > 0 {
                eps *= 0.5;
            }
        }
        let Some((cand, l)) = next else {
            // no ascent direction left at machine precision
            return Ok(Reconstruction {
                cov: g,
                iterations: it,
                log_likelihood: trace,
            });
        };
        let change = max_abs(&(cand - g)) / max_abs(&g);
        if l < ll - 1e-10 * ll.abs() {
            return Err(TomographyError::LikelihoodDecrease {
                iteration: it,
                before: ll,
                after: l,
            });
        }
        g = cand;
        ll = l;
        trace.push(ll);
        if change < opts.tol {
            return Ok(Reconstruction {
                cov: g,
                iterations: it,
                log_likelihood: trace,
            });
        }
    }
    Err(TomographyError::NotConverged(opts.max_iter))
}

/// Evenly spaced angles over [0, π).
pub fn angle_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| PI * k as f64 / n as f64).collect()
}
