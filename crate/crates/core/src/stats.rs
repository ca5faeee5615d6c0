//! Sample statistics shared by calibration, tomography and the protocols.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::stream;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (N − 1) sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Unbiased sample covariance of 2-vectors.
pub fn covariance(xs: &[Vector2<f64>]) -> Matrix2<f64> {
    let n = xs.len() as f64;
    let m = xs.iter().fold(Vector2::zeros(), |a, x| a + x) / n;
    let s = xs.iter().fold(Matrix2::zeros(), |a, x| {
        let d = x - m;
        a + d * d.transpose()
    });
    s / (n - 1.0)
}

/// Linear interpolation percentile (q in [0, 1]) of unsorted data.
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Ordinary least squares y = a + b·x with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_se: f64,
    pub slope_se: f64,
    /// Cov(intercept, slope).
    pub cov_ab: f64,
}

/// None when the abscissae are degenerate or there are fewer than 3 points.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 3 || ys.len() != n {
        return None;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 1e-12 * xs.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE)) {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let s2 = rss / (n as f64 - 2.0);
    let slope_var = s2 / sxx;
    let intercept_var = s2 * (1.0 / n as f64 + mx * mx / sxx);
    Some(LineFit {
        intercept,
        slope,
        intercept_se: intercept_var.sqrt(),
        slope_se: slope_var.sqrt(),
        cov_ab: -mx * slope_var,
    })
}

/// Percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }

    pub fn from_samples(xs: &[f64], level: f64) -> Self {
        let tail = 0.5 * (1.0 - level);
        Interval {
            low: percentile(xs, tail),
            high: percentile(xs, 1.0 - tail),
        }
    }
}

/// Case-resampling bootstrap. Resample `b` draws `n` indices with
/// replacement from stream `(seed, b)` and evaluates `f`; failed resamples
/// are returned as `None` so callers can bound the failure rate.
pub fn bootstrap<T, F>(n: usize, resamples: usize, seed: u64, f: F) -> Vec<Option<T>>
where
    T: Send,
    F: Fn(&[usize]) -> Option<T> + Sync,
{
    (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, b as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            f(&idx)
        })
        .collect()
}
