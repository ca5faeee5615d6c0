//! Euler–Maruyama sampling of the quadrature SDE, one independent stream per
//! shot. Serves as the stochastic oracle for the covariance integrator.

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DynamicsError, Theory};
use crate::linalg::psd_factor;
use crate::model::{DeviceParams, GaussianState, PulseSchedule};
use crate::rng::stream;

/// Fewest steps per fastest drift timescale that is accepted.
pub const MIN_STEPS_PER_RATE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOptions {
    pub theory: Theory,
    /// Step is 1/(steps_per_rate · max|A_ij|).
    pub steps_per_rate: f64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            theory: Theory::Ideal,
            steps_per_rate: 200.0,
        }
    }
}

struct Plan {
    steps: usize,
    dt: f64,
    constant: bool,
}

/// End points of `shots` independent trajectories through `schedule`.
/// Shot `i` uses stream `(seed, i)`, so results do not depend on threading.
pub fn simulate_trajectories(
    state: &GaussianState,
    schedule: &PulseSchedule,
    dev: &DeviceParams,
    shots: usize,
    seed: u64,
    options: &TrajectoryOptions,
) -> Result<Vec<Vector2<f64>>, DynamicsError> {
    if !(options.steps_per_rate >= MIN_STEPS_PER_RATE) {
        return Err(DynamicsError::UnstableStep {
            step: 1.0 / options.steps_per_rate,
            limit: 1.0 / MIN_STEPS_PER_RATE,
        });
    }
    let theory = options.theory;
    let mut plans = Vec::with_capacity(schedule.len());
    for seg in schedule.iter() {
        let dd = theory.drift_diffusion(seg, dev)?;
        let rate = dd.max_rate();
        let steps = if rate > 0.0 && seg.duration > 0.0 {
            (seg.duration * rate * options.steps_per_rate)
                .ceil()
                .max(1.0) as usize
        } else {
            1
        };
        plans.push(Plan {
            steps,
            dt: seg.duration / steps as f64,
            constant: !seg.has_edges(),
        });
    }
    let deltas: Vec<f64> = schedule.iter().map(|s| theory.detuning(s, dev)).collect();
    let start_factor = psd_factor(state.cov());

    let out = (0..shots)
        .into_par_iter()
        .map(|shot| {
            let mut rng = stream(seed, shot as u64);
            let mut x = state.mean() + start_factor * normal_pair(&mut rng);
            for ((seg, plan), &delta) in schedule.iter().zip(&plans).zip(&deltas) {
                let sqrt_dt = plan.dt.sqrt();
                let mut dd = theory.drift_diffusion_at(seg, dev, delta, 0.0);
                let mut l = psd_factor(&dd.diffusion);
                for k in 0..plan.steps {
                    if !plan.constant {
                        dd = theory.drift_diffusion_at(seg, dev, delta, k as f64 * plan.dt);
                        l = psd_factor(&dd.diffusion);
                    }
                    x += dd.drift * x * plan.dt + l * normal_pair(&mut rng) * sqrt_dt;
                }
            }
            x
        })
        .collect();
    Ok(out)
}

fn normal_pair<R: Rng>(rng: &mut R) -> Vector2<f64> {
    Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::segment_transition;
    use crate::model::{default_device, hz, PumpSegment};

    #[test]
    fn deterministic_and_thread_independent() {
        let dev = default_device();
        let schedule = PulseSchedule::new(vec![PumpSegment::new(5e-6, hz(200e3), hz(100e3))]);
        let opts = TrajectoryOptions::default();
        let a =
            simulate_trajectories(&GaussianState::vacuum(), &schedule, &dev, 64, 9, &opts).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool
            .install(|| {
                simulate_trajectories(&GaussianState::vacuum(), &schedule, &dev, 64, 9, &opts)
            })
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_coarse_steps() {
        let dev = default_device();
        let schedule = PulseSchedule::new(vec![PumpSegment::idle(1e-3)]);
        let opts = TrajectoryOptions {
            steps_per_rate: 10.0,
            ..Default::default()
        };
        assert!(matches!(
            simulate_trajectories(&GaussianState::vacuum(), &schedule, &dev, 1, 0, &opts),
            Err(DynamicsError::UnstableStep { .. })
        ));
    }

    #[test]
    fn sample_covariance_tracks_lyapunov() {
        let dev = default_device();
        let seg = PumpSegment::new(10e-6, hz(150e3), hz(300e3)).with_detuning(hz(-74e3), hz(300.0));
        let schedule = PulseSchedule::new(vec![seg]);
        let opts = TrajectoryOptions {
            theory: Theory::Full,
            steps_per_rate: 100.0,
        };
        let start = GaussianState::thermal(1.0);
        let n = 20_000;
        let xs = simulate_trajectories(&start, &schedule, &dev, n, 3, &opts).unwrap();
        let cov = segment_transition(&seg, &dev, Theory::Full)
            .unwrap()
            .apply_cov(start.cov());
        for (i, j) in [(0, 0), (1, 1), (0, 1)] {
            let s = xs.iter().map(|x| x[i] * x[j]).sum::<f64>() / n as f64;
            let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n as f64).sqrt();
            assert!(
                (s - cov[(i, j)]).abs() < 5.0 * se,
                "{i}{j}: {s} vs {}",
                cov[(i, j)]
            );
        }
    }
}
