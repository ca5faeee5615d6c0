//! The named experiments: prepare → (rotate the measurement frame) →
//! amplify → transfer → heterodyne readout, repeated over a sweep grid.
//!
//! Every shot is simulated by sampling the exact Gaussian transition of each
//! pulse and, in [`ReadoutMode::Trace`], synthesizing and demodulating its
//! voltage record. [`ReadoutMode::Gaussian`] draws the extracted pair
//! directly from its (identical) output distribution, which is much faster.

mod experiments;
mod table;

pub use experiments::{
    run, run_added_noise_sweep, run_direct_variance_vs_angle, run_squeeze_sweep, run_thermal_sweep,
    run_tomography, theory_table, AddedNoisePoint, AddedNoiseSweep, DirectVariancePoint,
    DirectVarianceSweep, ExperimentOutput, SqueezePoint, SqueezeSweep, ThermalPoint, ThermalSweep,
    TomographyRun,
};
pub use table::{Column, Format, Table};

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::CalibrateError;
use crate::dynamics::{segment_transition, DynamicsError, Theory, Transition};
use crate::linalg::{measurement_rotation, psd_factor};
use crate::model::{
    hz, reference_squeezed_state, DeviceParams, GaussianState, ModelError, PulseSchedule,
    PumpSegment, ReceiverParams, SqueezeParams,
};
use crate::receiver::{correct_phase, ReceiverError, ReceiverPlan, Window};
use crate::rng::{derive_seed, stream};
use crate::tomography::TomographyError;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Receiver(#[from] ReceiverError),
    #[error(transparent)]
    Calibrate(#[from] CalibrateError),
    #[error(transparent)]
    Tomography(#[from] TomographyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    AddedNoiseSweep,
    SqueezeSweep,
    TomographyRun,
    DirectVarianceVsAngle,
    ThermalSweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::AddedNoiseSweep,
        ExperimentKind::SqueezeSweep,
        ExperimentKind::TomographyRun,
        ExperimentKind::DirectVarianceVsAngle,
        ExperimentKind::ThermalSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::AddedNoiseSweep => "added_noise_sweep",
            ExperimentKind::SqueezeSweep => "squeeze_sweep",
            ExperimentKind::TomographyRun => "tomography_run",
            ExperimentKind::DirectVarianceVsAngle => "direct_variance_vs_angle",
            ExperimentKind::ThermalSweep => "thermal_sweep",
        }
    }

    /// Γ₊/Γ₋ ratios, measurement angles (rad) or bath occupancies.
    pub fn default_sweep(self) -> Vec<f64> {
        match self {
            ExperimentKind::AddedNoiseSweep => log_grid(1.1, 4.0, 12),
            ExperimentKind::SqueezeSweep => log_grid(0.1, 0.9, 12),
            ExperimentKind::TomographyRun => crate::tomography::angle_grid(16),
            ExperimentKind::DirectVarianceVsAngle => crate::tomography::angle_grid(32),
            ExperimentKind::ThermalSweep => (1..=8).map(|k| 10.0 * k as f64).collect(),
        }
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutMode {
    /// Synthesize and demodulate every voltage record.
    #[default]
    Trace,
    /// Sample the extracted quadratures from their exact distribution.
    Gaussian,
}

/// State whose quadratures are measured by the direct-variance and
/// tomography experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Preparation {
    Thermal,
    /// Thermal state after the cooling pulse.
    Cooled,
    /// Thermal state after the squeezing pulse at Γ₊ = ratio·Γ₋.
    Squeezed {
        ratio: f64,
    },
    /// The reconstructed state of the reference experiment.
    Reference,
    Explicit {
        params: SqueezeParams,
    },
    /// Thermal state after the experiment's explicit `schedule`.
    Schedule,
}

/// Occupancy assumed for the cooled reference in the Y-factor inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CooledOccupancy {
    /// What the simulated cooling pulse actually produces.
    #[default]
    Model,
    /// The resolved-sideband cooling limit.
    SidebandLimit,
}

/// Pulse parameters shared by the experiments (rates in rad/s, times in s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub cool_gamma_minus: f64,
    pub cool_duration: f64,
    /// Γ₋ held fixed while Γ₊ is swept in the amplifier experiments.
    pub probe_gamma_minus: f64,
    /// Every amplification pulse is lengthened to reach this energy gain.
    pub target_gain: f64,
    pub transfer_gamma_minus: f64,
    pub transfer_duration: f64,
    pub squeeze_gamma_minus: f64,
    pub squeeze_duration: f64,
    /// Blue-only (phase-insensitive) amplifier used to read out both quadratures.
    pub readout_gamma_plus: f64,
    pub readout_duration: f64,
    /// Γ₊/Γ₋ of the single-quadrature amplifier for angle-resolved readout.
    pub tea_ratio: f64,
    pub delta_0: f64,
    pub delta_m: f64,
    pub edge_sigma: f64,
    /// Shot spacing; sets the phase drift between shots.
    pub repetition_period: f64,
}

impl Default for Sequence {
    fn default() -> Self {
        Self {
            cool_gamma_minus: hz(181e3),
            cool_duration: 50e-6,
            probe_gamma_minus: hz(181e3),
            target_gain: 1e5,
            transfer_gamma_minus: hz(181e3),
            transfer_duration: 10e-6,
            squeeze_gamma_minus: hz(154e3),
            squeeze_duration: 90e-6,
            readout_gamma_plus: hz(73e3),
            readout_duration: 30e-6,
            tea_ratio: 1.2,
            delta_0: -hz(74e3),
            delta_m: hz(300.0),
            edge_sigma: 0.0,
            repetition_period: 2e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    /// 0 disables confidence intervals.
    pub resamples: usize,
    pub level: f64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self {
            resamples: 200,
            level: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub kind: ExperimentKind,
    pub device: DeviceParams,
    pub receiver: ReceiverParams,
    pub sequence: Sequence,
    pub sweep: Vec<f64>,
    /// Shots per preparation and sweep point.
    pub shots: usize,
    pub seed: u64,
    pub readout: ReadoutMode,
    /// Equations of motion used to simulate the pulses.
    pub simulation_theory: Theory,
    /// Detuned model drawn as the "full" overlay.
    pub overlay_theory: Theory,
    /// Preparation pulses for [`Preparation::Schedule`].
    pub schedule: Vec<PumpSegment>,
    pub preparation: Preparation,
    pub cooled_occupancy: CooledOccupancy,
    pub bootstrap: BootstrapSettings,
    /// Efficiency handed to the tomography; derived from the readout chain
    /// when absent.
    pub eta_q: Option<f64>,
}

impl Experiment {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            device: DeviceParams::default(),
            receiver: ReceiverParams::default(),
            sequence: Sequence::default(),
            sweep: kind.default_sweep(),
            shots: 2048,
            seed: 0,
            readout: ReadoutMode::Trace,
            simulation_theory: Theory::Ideal,
            overlay_theory: Theory::Full,
            schedule: Vec::new(),
            preparation: Preparation::Reference,
            cooled_occupancy: CooledOccupancy::Model,
            bootstrap: BootstrapSettings::default(),
            eta_q: None,
        }
    }

    pub fn check(&self) -> Result<(), ProtocolError> {
        self.device.check()?;
        self.receiver.check()?;
        if self.sweep.is_empty() {
            return Err(ProtocolError::Invalid("sweep grid is empty".into()));
        }
        if self.sweep.iter().any(|v| !v.is_finite()) {
            return Err(ProtocolError::Invalid(
                "sweep grid has non-finite entries".into(),
            ));
        }
        if self.shots < 2 {
            return Err(ProtocolError::Invalid(format!(
                "need at least 2 shots, got {}",
                self.shots
            )));
        }
        let s = &self.sequence;
        if !(s.target_gain > 1.0) {
            return Err(ProtocolError::Invalid(format!(
                "target_gain must exceed 1, got {}",
                s.target_gain
            )));
        }
        if !(self.bootstrap.level > 0.0 && self.bootstrap.level < 1.0) {
            return Err(ProtocolError::Invalid(format!(
                "bootstrap level must lie in (0, 1), got {}",
                self.bootstrap.level
            )));
        }
        if let Some(eta) = self.eta_q {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(ProtocolError::Invalid(format!(
                    "eta_q must lie in (0, 1], got {eta}"
                )));
            }
        }
        if self.preparation == Preparation::Schedule && self.schedule.is_empty() {
            return Err(ProtocolError::Invalid(
                "preparation \"schedule\" needs a non-empty schedule".into(),
            ));
        }
        if self.overlay_theory == Theory::Ideal {
            return Err(ProtocolError::Invalid(
                "overlay_theory must be a detuned model".into(),
            ));
        }
        if self.kind == ExperimentKind::ThermalSweep && self.sweep.iter().any(|&n| n < 0.0) {
            return Err(ProtocolError::Invalid(
                "bath occupancies must be >= 0".into(),
            ));
        }
        Ok(())
    }

    fn pumped(&self, duration: f64, gp: f64, gm: f64) -> PumpSegment {
        let s = &self.sequence;
        PumpSegment::new(self.on_grid(duration), gp, gm)
            .with_detuning(s.delta_0, s.delta_m)
            .with_sigma(s.edge_sigma)
    }

    /// Durations snap to the receiver's sample grid so the record and the
    /// simulated pulse agree.
    fn on_grid(&self, t: f64) -> f64 {
        let fs = self.receiver.sample_rate;
        (t * fs).round().max(1.0) / fs
    }

    pub fn cooling_pulse(&self) -> PumpSegment {
        self.pumped(
            self.sequence.cool_duration,
            0.0,
            self.sequence.cool_gamma_minus,
        )
    }

    pub fn squeezing_pulse(&self, ratio: f64) -> PumpSegment {
        let gm = self.sequence.squeeze_gamma_minus;
        self.pumped(self.sequence.squeeze_duration, ratio * gm, gm)
    }

    /// Two-tone amplifier at Γ₊ = ratio·Γ₋, long enough for the target gain.
    pub fn tea_pulse(&self, ratio: f64) -> Result<PumpSegment, ProtocolError> {
        let gm = self.sequence.probe_gamma_minus;
        let gp = ratio * gm;
        let lambda = gp - gm - self.device.gamma_m;
        if !(lambda > 0.0) {
            return Err(DynamicsError::NotAmplifying {
                gamma_plus: gp,
                gamma_minus: gm,
            }
            .into());
        }
        Ok(self.pumped(self.sequence.target_gain.ln() / lambda, gp, gm))
    }

    /// Blue-only amplifier reading out both quadratures.
    pub fn readout_pulse(&self) -> PumpSegment {
        self.pumped(
            self.sequence.readout_duration,
            self.sequence.readout_gamma_plus,
            0.0,
        )
    }

    pub fn transfer_pulse(&self) -> PumpSegment {
        PumpSegment::new(
            self.on_grid(self.sequence.transfer_duration),
            0.0,
            self.sequence.transfer_gamma_minus,
        )
    }

    pub(crate) fn preparation_pulses(&self, prep: Preparation) -> Vec<PumpSegment> {
        match prep {
            Preparation::Cooled => vec![self.cooling_pulse()],
            Preparation::Squeezed { ratio } => vec![self.squeezing_pulse(ratio)],
            Preparation::Schedule => self.schedule.clone(),
            _ => Vec::new(),
        }
    }

    pub(crate) fn initial_covariance(
        &self,
        prep: Preparation,
    ) -> Result<Matrix2<f64>, ProtocolError> {
        Ok(match prep {
            Preparation::Thermal
            | Preparation::Cooled
            | Preparation::Squeezed { .. }
            | Preparation::Schedule => *GaussianState::thermal(self.device.n_m).cov(),
            Preparation::Reference => reference_squeezed_state().covariance(),
            Preparation::Explicit { params } => *GaussianState::squeezed_thermal(&params)?.cov(),
        })
    }

    /// Every pulse sequence the experiment will play, for validation.
    pub fn schedules(&self) -> Result<Vec<PulseSchedule>, ProtocolError> {
        let tr = self.transfer_pulse();
        let mut out = Vec::new();
        match self.kind {
            ExperimentKind::AddedNoiseSweep => {
                for &r in &self.sweep {
                    out.push(PulseSchedule::new(vec![
                        self.cooling_pulse(),
                        self.tea_pulse(r)?,
                        tr,
                    ]));
                }
            }
            ExperimentKind::SqueezeSweep => {
                for &r in &self.sweep {
                    out.push(PulseSchedule::new(vec![
                        self.squeezing_pulse(r),
                        self.readout_pulse(),
                        tr,
                    ]));
                }
            }
            ExperimentKind::TomographyRun | ExperimentKind::DirectVarianceVsAngle => {
                let mut segs = self.preparation_pulses(self.preparation);
                segs.push(self.tea_pulse(self.sequence.tea_ratio)?);
                segs.push(tr);
                out.push(PulseSchedule::new(segs));
            }
            ExperimentKind::ThermalSweep => {
                out.push(PulseSchedule::new(vec![self.readout_pulse(), tr]))
            }
        }
        Ok(out)
    }
}

/// Preparation → frame rotation → amplifier → transfer → receiver, as one
/// linear Gaussian channel from the initial state to the extracted pair.
pub(crate) struct Chain {
    initial: Matrix2<f64>,
    prepare: Transition,
    amplify: Transition,
    plan: ReceiverPlan,
    receiver_noise: Matrix2<f64>,
}

impl Chain {
    pub(crate) fn new(
        exp: &Experiment,
        dev: &DeviceParams,
        initial: Matrix2<f64>,
        prep: &[PumpSegment],
        amp: PumpSegment,
    ) -> Result<Self, ProtocolError> {
        let theory = exp.simulation_theory;
        let mut prepare = Transition::identity();
        for seg in prep {
            prepare = prepare.then(&segment_transition(seg, dev, theory)?);
        }
        let amplify = segment_transition(&amp, dev, theory)?;
        let plan = ReceiverPlan::new(
            &PulseSchedule::new(vec![amp, exp.transfer_pulse()]),
            dev,
            &exp.receiver,
        )?;
        let receiver_noise = plan.extraction_noise_covariance(Window::Transferred)?;
        Ok(Self {
            initial,
            prepare,
            amplify,
            plan,
            receiver_noise,
        })
    }

    /// State covariance entering the amplifier, in the frame measured at `phi`.
    pub(crate) fn prepared(&self, phi: f64) -> Matrix2<f64> {
        let s = measurement_rotation(phi);
        s * self.prepare.apply_cov(&self.initial) * s.transpose()
    }

    /// Exact covariance of the extracted (input-referred) pair.
    pub(crate) fn expected(&self, phi: f64) -> Matrix2<f64> {
        self.amplify.apply_cov(&self.prepared(phi)) / self.plan.gain() + self.receiver_noise
    }

    pub(crate) fn run(
        &self,
        exp: &Experiment,
        phi: f64,
        seed: u64,
    ) -> Result<Vec<Vector2<f64>>, ProtocolError> {
        match exp.readout {
            ReadoutMode::Gaussian => {
                let l = psd_factor(&self.expected(phi));
                let mut rng = stream(seed, 0);
                Ok((0..exp.shots)
                    .map(|_| {
                        l * Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                    })
                    .collect())
            }
            ReadoutMode::Trace => self.run_traces(exp, phi, seed),
        }
    }

    fn run_traces(
        &self,
        exp: &Experiment,
        phi: f64,
        seed: u64,
    ) -> Result<Vec<Vector2<f64>>, ProtocolError> {
        let s = measurement_rotation(phi);
        let l0 = psd_factor(&self.initial);
        let scale = self.plan.gain().sqrt();
        let period = exp.sequence.repetition_period;
        (0..exp.shots)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, i as u64);
                let x0 = l0 * Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                let y = s * self.prepare.sample(&x0, &mut rng);
                let out = self.amplify.sample(&y, &mut rng) / scale;
                let mut rec = [self.plan.synthesize(
                    &out,
                    i as f64 * period,
                    phi,
                    derive_seed(seed, i as u64),
                )];
                let x = self.plan.extract(&rec[0], Window::Transferred)?;
                rec[0].extracted = Some([x[0], x[1]]);
                correct_phase(&mut rec, &exp.receiver);
                let e = rec[0].extracted.expect("set above");
                Ok(Vector2::new(e[0], e[1]))
            })
            .collect()
    }
}

/// Occupancy-like variance of a quadrature, V − ½.
pub(crate) fn occupancy(v: f64) -> f64 {
    v - 0.5
}

/// Angle grid helper for periodicity checks: `n` points over [0, 2π).
pub fn full_turn_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::covariance;

    #[test]
    fn grids() {
        let g = log_grid(1.1, 4.0, 12);
        assert_eq!(g.len(), 12);
        assert!((g[0] - 1.1).abs() < 1e-15 && (g[11] - 4.0).abs() < 1e-12);
        for k in ExperimentKind::ALL {
            assert!(!k.default_sweep().is_empty());
        }
    }

    #[test]
    fn pulses_reach_target_gain() {
        let exp = Experiment::new(ExperimentKind::AddedNoiseSweep);
        for r in [1.1, 2.0, 4.0] {
            let seg = exp.tea_pulse(r).unwrap();
            let lambda = seg.gamma_plus - seg.gamma_minus - exp.device.gamma_m;
            let g = (lambda * seg.duration).exp();
            assert!((g / 1e5 - 1.0).abs() < 0.05, "{g}");
        }
        assert!(exp.tea_pulse(1.0).is_err());
    }

    #[test]
    fn trace_and_gaussian_readout_agree() {
        let mut exp = Experiment::new(ExperimentKind::DirectVarianceVsAngle);
        exp.shots = 4000;
        exp.receiver.phase_drift_rate = 3.0;
        let dev = exp.device;
        let chain = Chain::new(
            &exp,
            &dev,
            reference_squeezed_state().covariance(),
            &[],
            exp.tea_pulse(1.2).unwrap(),
        )
        .unwrap();
        let want = chain.expected(0.4);
        let got = covariance(&chain.run(&exp, 0.4, 5).unwrap());
        for (g, w) in got.iter().zip(want.iter()) {
            let se = (2.0 / exp.shots as f64).sqrt() * want.diagonal().max();
            assert!((g - w).abs() < 5.0 * se, "{got} vs {want}");
        }
    }
}
