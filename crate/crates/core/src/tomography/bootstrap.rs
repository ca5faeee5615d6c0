use std::f64::consts::{PI, TAU};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::{
    covariance_to_squeeze, extra_noise, fock_populations, fock_populations_auto, purity,
    reconstruct_covariance, reconstruct_from_stats, AngleStats, MarginalDataset,
    ReconstructOptions, SqueezeFit, TomographyError,
};
use crate::stats::{bootstrap, Interval};

/// Case-resampling bootstrap of a vector-valued estimator. Returns one
/// percentile interval per estimator component.
pub fn bootstrap_ci<F>(
    data: &MarginalDataset,
    estimator: F,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<Interval>, TomographyError>
where
    F: Fn(&MarginalDataset) -> Option<Vec<f64>> + Sync,
{
    let draws = bootstrap(data.len(), resamples, seed, |idx| {
        let resampled = MarginalDataset {
            points: idx.iter().map(|&i| data.points[i]).collect(),
            eta_q: data.eta_q,
        };
        estimator(&resampled)
    });
    intervals(draws, resamples, level)
}

fn intervals(
    draws: Vec<Option<Vec<f64>>>,
    resamples: usize,
    level: f64,
) -> Result<Vec<Interval>, TomographyError> {
    if resamples < 200 {
        return Err(TomographyError::TooFewResamples(resamples));
    }
    let ok: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    let failed = resamples - ok.len();
    if failed * 20 > resamples || ok.is_empty() {
        return Err(TomographyError::BootstrapFailures {
            failed,
            total: resamples,
        });
    }
    let dim = ok.iter().map(Vec::len).min().unwrap_or(0);
    Ok((0..dim)
        .map(|k| {
            let col: Vec<f64> = ok.iter().map(|v| v[k]).collect();
            Interval::from_samples(&col, level)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub reconstruct: ReconstructOptions,
    /// 0 disables the bootstrap.
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            reconstruct: ReconstructOptions::default(),
            resamples: 200,
            level: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterIntervals {
    pub r: Interval,
    pub n_sq: Interval,
    /// Unwrapped around the point estimate, so it may leave [0, 2π).
    pub phi: Interval,
    pub purity: Interval,
    pub level: f64,
    pub resamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub cov: Matrix2<f64>,
    pub squeeze: SqueezeFit,
    pub fock_diag: Vec<f64>,
    pub purity: f64,
    pub iterations: usize,
    pub ci: Option<ParameterIntervals>,
    /// Bootstrap intervals of each entry of `fock_diag`.
    pub fock_ci: Option<Vec<Interval>>,
}

/// Full pipeline: reconstruction, squeeze parameters, Fock populations,
/// purity and (optionally) bootstrap intervals.
pub fn analyze(
    data: &MarginalDataset,
    opts: &AnalysisOptions,
) -> Result<ReconstructionResult, TomographyError> {
    let rec = reconstruct_covariance(data, None, &opts.reconstruct)?;
    let squeeze = covariance_to_squeeze(&rec.cov)?;
    let fock_diag = fock_populations_auto(&squeeze.params)?;
    let mu = purity(&squeeze.params);

    let (ci, fock_ci) = if opts.resamples == 0 {
        (None, None)
    } else {
        let extra = extra_noise(data, opts.reconstruct.mode);
        let n_fock = fock_diag.len();
        let phi0 = squeeze.params.phi;
        // resamples start from the full-data estimate; a looser tolerance is
        // ample next to the sampling spread
        let ropts = ReconstructOptions {
            tol: opts.reconstruct.tol.max(1e-9),
            ..opts.reconstruct
        };
        let draws = bootstrap(data.len(), opts.resamples, opts.seed, |idx| {
            let stats = AngleStats::from_points(idx.iter().map(|&i| &data.points[i]));
            let g = reconstruct_from_stats(&stats, extra, rec.cov, &ropts)
                .ok()?
                .cov;
            let p = covariance_to_squeeze(&g).ok()?.params;
            let phi = phi0 + (p.phi - phi0 + PI).rem_euclid(TAU) - PI;
            let mut v = vec![p.r, p.n_sq, phi, purity(&p)];
            v.extend(fock_populations(&p, n_fock).unwrap_or_else(|_| truncated(&p, n_fock)));
            Some(v)
        });
        let iv = intervals(draws, opts.resamples, opts.level)?;
        (
            Some(ParameterIntervals {
                r: iv[0],
                n_sq: iv[1],
                phi: iv[2],
                purity: iv[3],
                level: opts.level,
                resamples: opts.resamples,
            }),
            Some(iv[4..].to_vec()),
        )
    };

    Ok(ReconstructionResult {
        cov: rec.cov,
        squeeze,
        fock_diag,
        purity: mu,
        iterations: rec.iterations,
        ci,
        fock_ci,
    })
}

/// Leading entries of the untruncated distribution (a resample may carry
/// more tail mass than the point estimate).
fn truncated(sp: &crate::model::SqueezeParams, n: usize) -> Vec<f64> {
    let mut v = fock_populations_auto(sp).unwrap_or_default();
    v.resize(n, 0.0);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GaussianState, SqueezeParams};
    use crate::tomography::{angle_grid, sample_marginals};

    fn data(seed: u64) -> MarginalDataset {
        let state =
            GaussianState::squeezed_thermal(&SqueezeParams::new(0.5, 0.3, 1.0).unwrap()).unwrap();
        sample_marginals(&state, &angle_grid(8), 200, 0.9, seed).unwrap()
    }

    #[test]
    fn constant_estimator_gives_zero_width() {
        let iv = bootstrap_ci(&data(1), |_| Some(vec![3.0]), 200, 0.9, 1).unwrap();
        assert_eq!(
            iv[0],
            Interval {
                low: 3.0,
                high: 3.0
            }
        );
    }

    #[test]
    fn preconditions() {
        assert!(matches!(
            bootstrap_ci(&data(1), |_| Some(vec![1.0]), 100, 0.9, 1),
            Err(TomographyError::TooFewResamples(100))
        ));
        // a third of resamples failing
        let flaky = |d: &MarginalDataset| (d.points[0].1 > -0.3).then(|| vec![1.0]);
        assert!(matches!(
            bootstrap_ci(&data(2), flaky, 300, 0.9, 1),
            Err(TomographyError::BootstrapFailures { .. })
        ));
    }

    #[test]
    fn analysis_is_deterministic_and_consistent() {
        let d = data(3);
        let opts = AnalysisOptions {
            seed: 9,
            ..Default::default()
        };
        let a = analyze(&d, &opts).unwrap();
        assert_eq!(a, analyze(&d, &opts).unwrap());
        let ci = a.ci.unwrap();
        assert!(ci.r.contains(a.squeeze.params.r));
        assert!(ci.phi.contains(a.squeeze.params.phi));
        assert_eq!(a.fock_ci.as_ref().unwrap().len(), a.fock_diag.len());
        assert!(a.fock_diag.iter().all(|&p| p >= 0.0));
        assert!(a.purity > 0.0 && a.purity <= 1.0);
    }
}
