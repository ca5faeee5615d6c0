//! Heterodyne readout: synthesis of the microwave voltage record of one shot
//! and its inversion back to input-referred mechanical quadratures.
//!
//! A shot is read out through the last two segments of its schedule: an
//! amplification segment, during which the cavity output carries the growing
//! mechanical field, and a red-only transfer segment that swaps the amplified
//! motion into the cavity, where it leaks out as an exponentially decaying
//! pulse. Time t = 0 of the record is the start of the amplification segment.

use std::io::Write;

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::rotation;
use crate::model::{DeviceParams, ModelError, PulseSchedule, ReceiverParams};
use crate::rng::stream;

#[derive(Debug, Error)]
pub enum ReceiverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(
        "schedule must end with an amplification segment followed by a red-only transfer segment"
    )]
    MissingTransfer,
    #[error("window [{start:.3e}, {end:.3e}) s lies outside the {len}-sample record")]
    WindowOutsideRecord { start: f64, end: f64, len: usize },
    #[error("readout window has zero envelope energy")]
    ZeroEnergy,
    #[error("record does not match the receiver plan ({got} samples, expected {expected})")]
    LengthMismatch { got: usize, expected: usize },
    #[error("need at least {needed} heterodyne periods in the window, found {found:.1}")]
    TooFewPeriods { needed: f64, found: f64 },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which part of the record the quadratures are read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Output field during amplification.
    Amplified,
    /// Mechanical field swapped into the cavity after amplification.
    #[default]
    Transferred,
}

/// One digitized shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    /// Volts, one per sample.
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    /// Wall-clock start of the trace within the run (s).
    pub t0: f64,
    /// Measurement axis φ (rad) as seen by the receiver.
    pub tomography_angle: f64,
    /// Input-referred (X₁, X₂) once extracted.
    pub extracted: Option<[f64; 2]>,
}

/// JSON sidecar accompanying a CSV trace export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub sample_rate: f64,
    pub samples: usize,
    pub t0: f64,
    pub tomography_angle: f64,
    pub extracted: Option<[f64; 2]>,
    pub receiver: ReceiverParams,
}

/// Precomputed envelopes and references for one amplify/transfer layout.
#[derive(Debug, Clone)]
pub struct ReceiverPlan {
    rx: ReceiverParams,
    envelope: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
    amplify_samples: usize,
    /// Energy gain of the amplification segment.
    gain: f64,
    sigma: f64,
}

impl ReceiverPlan {
    pub fn new(
        schedule: &PulseSchedule,
        dev: &DeviceParams,
        rx: &ReceiverParams,
    ) -> Result<Self, ReceiverError> {
        rx.check()?;
        dev.check()?;
        let n = schedule.len();
        if n < 2 {
            return Err(ReceiverError::MissingTransfer);
        }
        let amp = &schedule.segments[n - 2];
        let tr = &schedule.segments[n - 1];
        amp.check()?;
        tr.check()?;
        if tr.gamma_plus != 0.0 || !(tr.gamma_minus > 0.0) {
            return Err(ReceiverError::MissingTransfer);
        }
        let fs = rx.sample_rate;
        let amplify_samples = (amp.duration * fs).round() as usize;
        let transfer_samples = (tr.duration * fs).round() as usize;
        let lambda = amp.gamma_plus - amp.gamma_minus - dev.gamma_m;
        let gain = (lambda * amplify_samples as f64 / fs).exp();
        let total = amplify_samples + transfer_samples;
        let mut envelope = Vec::with_capacity(total);
        let mut cos = Vec::with_capacity(total);
        let mut sin = Vec::with_capacity(total);
        let amp_scale = (amp.gamma_plus + amp.gamma_minus).sqrt();
        let tr_scale = gain.sqrt() * tr.gamma_minus.sqrt();
        for k in 0..total {
            let t = k as f64 / fs;
            let e = if k < amplify_samples {
                amp_scale * (0.5 * lambda * t).exp()
            } else {
                let s = (k - amplify_samples) as f64 / fs;
                tr_scale * (-0.5 * tr.gamma_minus * s).exp()
            };
            envelope.push(e);
            let (s, c) = (rx.omega_het * t).sin_cos();
            cos.push(c);
            sin.push(s);
        }
        Ok(Self {
            rx: *rx,
            envelope,
            cos,
            sin,
            amplify_samples,
            gain,
            sigma: ((rx.n_hemt + 0.5) * fs / 2.0).sqrt(),
        })
    }

    pub fn len(&self) -> usize {
        self.envelope.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envelope.is_empty()
    }

    /// Energy gain G of the amplification segment.
    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn receiver(&self) -> &ReceiverParams {
        &self.rx
    }

    fn range(&self, window: Window) -> std::ops::Range<usize> {
        match window {
            Window::Amplified => 0..self.amplify_samples,
            Window::Transferred => self.amplify_samples..self.len(),
        }
    }

    /// ∫ e(t)² dt over a window (quanta⁻¹-free envelope energy).
    pub fn window_energy(&self, window: Window) -> f64 {
        self.envelope[self.range(window)]
            .iter()
            .map(|e| e * e)
            .sum::<f64>()
            / self.rx.sample_rate
    }

    /// Normal matrix BᵀB of the fit basis (e·cos, e·sin) over a window.
    fn normal_matrix(&self, window: Window) -> Matrix2<f64> {
        let mut m = Matrix2::zeros();
        for k in self.range(window) {
            let (a, b) = (
                self.envelope[k] * self.cos[k],
                self.envelope[k] * self.sin[k],
            );
            m += Matrix2::new(a * a, a * b, a * b, b * b);
        }
        m
    }

    /// Covariance of the receiver-noise contribution to the extracted pair,
    /// referred to the amplifier input: σ²(BᵀB)⁻¹ ≈ (n_hemt + ½)/E · I.
    pub fn extraction_noise_covariance(
        &self,
        window: Window,
    ) -> Result<Matrix2<f64>, ReceiverError> {
        let m = self.normal_matrix(window);
        let inv = m.try_inverse().ok_or(ReceiverError::ZeroEnergy)?;
        Ok(inv * self.sigma * self.sigma)
    }

    /// Trace for input quadratures `x` at wall-clock `t0`, nominal angle
    /// `angle`. The measurement axis has drifted by `phase_drift_rate·t0`.
    pub fn synthesize(&self, x: &Vector2<f64>, t0: f64, angle: f64, seed: u64) -> ShotRecord {
        let drift = self.rx.phase_drift_rate * t0;
        let seen = rotation(drift) * x;
        let gain = self.rx.g_tot.sqrt();
        let mut rng = stream(seed, 0);
        let samples = (0..self.len())
            .map(|k| {
                let signal = self.envelope[k] * (seen[0] * self.cos[k] + seen[1] * self.sin[k]);
                let noise: f64 = rng.sample(StandardNormal);
                gain * (signal + self.sigma * noise)
            })
            .collect();
        ShotRecord {
            samples,
            sample_rate: self.rx.sample_rate,
            t0,
            tomography_angle: angle + drift,
            extracted: None,
        }
    }

    /// Least-squares fit of the record onto (e·cos ω_het t, e·sin ω_het t),
    /// divided by √G_tot: an exact, linear inverse of [`Self::synthesize`].
    pub fn extract(&self, rec: &ShotRecord, window: Window) -> Result<Vector2<f64>, ReceiverError> {
        if rec.samples.len() != self.len() {
            return Err(ReceiverError::LengthMismatch {
                got: rec.samples.len(),
                expected: self.len(),
            });
        }
        let r = self.range(window);
        if r.is_empty() {
            return Err(ReceiverError::ZeroEnergy);
        }
        let mut rhs = Vector2::zeros();
        for k in r {
            let v = rec.samples[k];
            rhs += Vector2::new(
                self.envelope[k] * self.cos[k],
                self.envelope[k] * self.sin[k],
            ) * v;
        }
        let m = self.normal_matrix(window);
        let est = m.lu().solve(&rhs).ok_or(ReceiverError::ZeroEnergy)?;
        Ok(est / self.rx.g_tot.sqrt())
    }
}

/// Synthesize one shot's voltage record.
pub fn synthesize_trace(
    x: &Vector2<f64>,
    schedule: &PulseSchedule,
    dev: &DeviceParams,
    rx: &ReceiverParams,
    t0: f64,
    seed: u64,
) -> Result<ShotRecord, ReceiverError> {
    Ok(ReceiverPlan::new(schedule, dev, rx)?.synthesize(x, t0, 0.0, seed))
}

/// Extract input-referred quadratures from one record and store them on it.
pub fn extract_quadratures(
    rec: &mut ShotRecord,
    schedule: &PulseSchedule,
    dev: &DeviceParams,
    rx: &ReceiverParams,
    window: Window,
) -> Result<[f64; 2], ReceiverError> {
    let plan = ReceiverPlan::new(schedule, dev, rx)?;
    let x = plan.extract(rec, window)?;
    rec.extracted = Some([x[0], x[1]]);
    Ok([x[0], x[1]])
}

/// Synthesize and extract many shots in parallel; shot `i` uses seed
/// stream `(seed, i)` for its receiver noise.
pub fn read_out_shots(
    plan: &ReceiverPlan,
    inputs: &[Vector2<f64>],
    t0s: &[f64],
    angle: f64,
    window: Window,
    seed: u64,
) -> Result<Vec<ShotRecord>, ReceiverError> {
    inputs
        .par_iter()
        .zip(t0s.par_iter())
        .enumerate()
        .map(|(i, (x, &t0))| {
            let mut rec = plan.synthesize(x, t0, angle, crate::rng::derive_seed(seed, i as u64));
            let est = plan.extract(&rec, window)?;
            rec.extracted = Some([est[0], est[1]]);
            Ok(rec)
        })
        .collect()
}

/// Undo the linear drift of the measurement axis: each extracted pair is
/// rotated by −drift·t0 and its angle label moved back by the same amount.
pub fn correct_phase(records: &mut [ShotRecord], rx: &ReceiverParams) {
    for rec in records.iter_mut() {
        let theta = rx.phase_drift_rate * rec.t0;
        if let Some(x) = rec.extracted {
            let back = rotation(-theta) * Vector2::new(x[0], x[1]);
            rec.extracted = Some([back[0], back[1]]);
        }
        rec.tomography_angle -= theta;
    }
}

/// Least-squares drift rate from monitored pump phases at times `t0s`.
pub fn estimate_drift_rate(t0s: &[f64], phases: &[f64]) -> Option<f64> {
    let n = t0s.len().min(phases.len());
    if n < 2 {
        return None;
    }
    let mt = t0s[..n].iter().sum::<f64>() / n as f64;
    let mp = phases[..n].iter().sum::<f64>() / n as f64;
    let sxy: f64 = (0..n).map(|i| (t0s[i] - mt) * (phases[i] - mp)).sum();
    let sxx: f64 = (0..n).map(|i| (t0s[i] - mt).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Amplitude of the heterodyne tone in consecutive blocks of a window, by
/// boxcar I/Q demodulation. Blocks span a whole number of heterodyne
/// periods where the sample rate allows. Returns (block centre time, amplitude).
pub fn demodulate_envelope(
    rec: &ShotRecord,
    rx: &ReceiverParams,
    start: f64,
    end: f64,
    min_periods: f64,
) -> Result<Vec<(f64, f64)>, ReceiverError> {
    rx.check()?;
    let fs = rec.sample_rate;
    let (a, b) = ((start * fs).round() as usize, (end * fs).round() as usize);
    if !(start >= 0.0) || b > rec.samples.len() || a >= b {
        return Err(ReceiverError::WindowOutsideRecord {
            start,
            end,
            len: rec.samples.len(),
        });
    }
    let per_period = fs * std::f64::consts::TAU / rx.omega_het;
    let found = (b - a) as f64 / per_period;
    if found < min_periods {
        return Err(ReceiverError::TooFewPeriods {
            needed: min_periods,
            found,
        });
    }
    // whole periods per block, 1..=12, closest to an integer sample count
    let periods = (1..=12)
        .min_by(|&p, &q| {
            let f = |m: usize| {
                let s = per_period * m as f64;
                (s - s.round()).abs() / s
            };
            f(p).total_cmp(&f(q))
        })
        .unwrap_or(1);
    let block = ((per_period * periods as f64).round() as usize).max(2);
    let mut out = Vec::new();
    let mut k = a;
    while k + block <= b {
        let (mut i, mut q) = (0.0, 0.0);
        for j in k..k + block {
            let (s, c) = (rx.omega_het * j as f64 / fs).sin_cos();
            i += rec.samples[j] * c;
            q += rec.samples[j] * s;
        }
        let amp = 2.0 * i.hypot(q) / block as f64;
        out.push(((k as f64 + 0.5 * (block - 1) as f64) / fs, amp));
        k += block;
    }
    Ok(out)
}

/// CSV export with columns (time_s, voltage_V).
pub fn write_trace_csv<W: Write>(rec: &ShotRecord, mut out: W) -> Result<(), ReceiverError> {
    writeln!(out, "time_s,voltage_V")?;
    for (k, v) in rec.samples.iter().enumerate() {
        writeln!(out, "{:e},{:e}", k as f64 / rec.sample_rate, v)?;
    }
    Ok(())
}

pub fn trace_metadata(rec: &ShotRecord, rx: &ReceiverParams) -> TraceMetadata {
    TraceMetadata {
        sample_rate: rec.sample_rate,
        samples: rec.samples.len(),
        t0: rec.t0,
        tomography_angle: rec.tomography_angle,
        extracted: rec.extracted,
        receiver: *rx,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_device, hz, PumpSegment};
    use approx::assert_relative_eq;

    fn layout(gp: f64) -> PulseSchedule {
        PulseSchedule::new(vec![
            PumpSegment::idle(1e-6),
            PumpSegment::new(20e-6, gp, hz(100e3)),
            PumpSegment::new(10e-6, 0.0, hz(181e3)),
        ])
    }

    fn quiet() -> ReceiverParams {
        ReceiverParams {
            n_hemt: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_round_trip_both_windows() {
        let dev = default_device();
        let rx = quiet();
        let plan = ReceiverPlan::new(&layout(hz(150e3)), &dev, &rx).unwrap();
        let mut rec = plan.synthesize(&Vector2::new(1.0, 0.0), 0.0, 0.0, 1);
        // strip the noise: synthesize adds σ·ξ, so rebuild with σ = 0
        let clean = ReceiverPlan {
            sigma: 0.0,
            ..plan.clone()
        };
        rec.samples = clean
            .synthesize(&Vector2::new(1.0, 0.0), 0.0, 0.0, 1)
            .samples;
        for w in [Window::Amplified, Window::Transferred] {
            let x = clean.extract(&rec, w).unwrap();
            assert!((x[0] - 1.0).abs() < 1e-6 && x[1].abs() < 1e-6, "{w:?}: {x}");
        }
        let rec = clean.synthesize(&Vector2::new(-0.3, 2.5), 0.0, 0.0, 1);
        let x = clean.extract(&rec, Window::Transferred).unwrap();
        assert_relative_eq!(x, Vector2::new(-0.3, 2.5), epsilon = 1e-10);
    }

    #[test]
    fn extraction_is_linear() {
        let dev = default_device();
        let plan = ReceiverPlan::new(&layout(hz(150e3)), &dev, &ReceiverParams::default()).unwrap();
        let r1 = plan.synthesize(&Vector2::new(0.7, -0.2), 0.0, 0.0, 4);
        let r2 = plan.synthesize(&Vector2::new(-1.1, 0.4), 0.0, 0.0, 5);
        let (a, b) = (2.5, -0.75);
        let mix = ShotRecord {
            samples: r1
                .samples
                .iter()
                .zip(&r2.samples)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            ..r1.clone()
        };
        let e1 = plan.extract(&r1, Window::Transferred).unwrap();
        let e2 = plan.extract(&r2, Window::Transferred).unwrap();
        let em = plan.extract(&mix, Window::Transferred).unwrap();
        let want = e1 * a + e2 * b;
        assert!((em - want).amax() < 1e-12 * want.amax().max(1.0));
    }

    #[test]
    fn vacuum_floor_and_gain_scaling() {
        let dev = default_device();
        let plan = ReceiverPlan::new(&layout(hz(150e3)), &dev, &quiet()).unwrap();
        let rec = plan.synthesize(&Vector2::zeros(), 0.0, 0.0, 11);
        let var = rec.samples.iter().map(|v| v * v).sum::<f64>() / rec.samples.len() as f64;
        let floor = 0.5 * rec.sample_rate / 2.0;
        let se = floor * (2.0 / rec.samples.len() as f64).sqrt();
        assert!((var - floor).abs() < 5.0 * se);

        let rx4 = ReceiverParams {
            g_tot: 2.0,
            ..quiet()
        };
        let plan2 = ReceiverPlan::new(&layout(hz(150e3)), &dev, &rx4).unwrap();
        let x = Vector2::new(0.4, 0.9);
        let p1: f64 = plan
            .synthesize(&x, 0.0, 0.0, 3)
            .samples
            .iter()
            .map(|v| v * v)
            .sum();
        let p2: f64 = plan2
            .synthesize(&x, 0.0, 0.0, 3)
            .samples
            .iter()
            .map(|v| v * v)
            .sum();
        assert_relative_eq!(p2, 2.0 * p1, max_relative = 1e-12);
    }

    #[test]
    fn referred_receiver_noise_matches_ensemble() {
        let dev = default_device();
        // λ·T = ln 500 gives G = 500
        let t = 20e-6;
        let gp = hz(100e3) + dev.gamma_m + 500f64.ln() / t;
        let rx = ReceiverParams::default();
        let plan = ReceiverPlan::new(&layout(gp), &dev, &rx).unwrap();
        assert_relative_eq!(plan.gain(), 500.0, max_relative = 1e-9);
        let predicted = plan
            .extraction_noise_covariance(Window::Transferred)
            .unwrap();
        // (n_hemt + ½)/E with E ≈ G(1 − e^{−Γ₋T})
        let e = plan.window_energy(Window::Transferred);
        assert_relative_eq!(predicted[(0, 0)], 20.5 / e, max_relative = 2e-2);
        assert_relative_eq!(
            e,
            500.0 * (1.0 - (-hz(181e3) * 10e-6).exp()),
            max_relative = 2e-2
        );
        let n = 10_000;
        let xs = vec![Vector2::zeros(); n];
        let t0s = vec![0.0; n];
        let recs = read_out_shots(&plan, &xs, &t0s, 0.0, Window::Transferred, 8).unwrap();
        let var = recs
            .iter()
            .map(|r| r.extracted.unwrap()[0].powi(2))
            .sum::<f64>()
            / n as f64;
        let se = predicted[(0, 0)] * (2.0 / n as f64).sqrt();
        assert!(
            (var - predicted[(0, 0)]).abs() < 5.0 * se,
            "{var} vs {}",
            predicted[(0, 0)]
        );
    }

    #[test]
    fn transfer_envelope_decays_at_red_rate() {
        let dev = default_device();
        let rx = quiet();
        let schedule = layout(hz(150e3));
        let clean = ReceiverPlan {
            sigma: 0.0,
            ..ReceiverPlan::new(&schedule, &dev, &rx).unwrap()
        };
        let rec = clean.synthesize(&Vector2::new(1.0, 0.3), 0.0, 0.0, 0);
        let pts = demodulate_envelope(&rec, &rx, 20e-6, 30e-6, 10.0).unwrap();
        let n = pts.len() as f64;
        let (mt, ml) = (
            pts.iter().map(|p| p.0).sum::<f64>() / n,
            pts.iter().map(|p| p.1.ln()).sum::<f64>() / n,
        );
        let slope = pts
            .iter()
            .map(|p| (p.0 - mt) * (p.1.ln() - ml))
            .sum::<f64>()
            / pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
        assert_relative_eq!(-2.0 * slope, hz(181e3), max_relative = 1e-2);
    }

    #[test]
    fn drift_correction_restores_axis() {
        let dev = default_device();
        let rx = ReceiverParams {
            phase_drift_rate: std::f64::consts::TAU * 0.5,
            ..quiet()
        };
        let plan = ReceiverPlan::new(&layout(hz(150e3)), &dev, &rx).unwrap();
        let clean = ReceiverPlan { sigma: 0.0, ..plan };
        let n = 2048;
        let xs = vec![Vector2::new(1.0, 0.0); n];
        let t0s: Vec<f64> = (0..n).map(|i| i as f64 / 500.0).collect();
        let mut recs = read_out_shots(&clean, &xs, &t0s, 0.2, Window::Transferred, 1).unwrap();
        let raw_last = recs[n - 1].extracted.unwrap();
        assert!(raw_last[1].atan2(raw_last[0]).abs() > 0.1);
        correct_phase(&mut recs, &rx);
        let worst = recs
            .iter()
            .map(|r| {
                let x = r.extracted.unwrap();
                x[1].atan2(x[0]).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
        assert!(recs.iter().all(|r| (r.tomography_angle - 0.2).abs() < 1e-9));

        let zero = ReceiverParams {
            phase_drift_rate: 0.0,
            ..rx
        };
        let mut again = recs.clone();
        correct_phase(&mut again, &zero);
        assert_eq!(again, recs);
        let phases: Vec<f64> = t0s.iter().map(|t| rx.phase_drift_rate * t + 0.1).collect();
        assert_relative_eq!(
            estimate_drift_rate(&t0s, &phases).unwrap(),
            rx.phase_drift_rate,
            max_relative = 1e-9
        );
    }

    #[test]
    fn rejects_bad_layouts() {
        let dev = default_device();
        let rx = ReceiverParams::default();
        let no_transfer = PulseSchedule::new(vec![PumpSegment::new(1e-5, hz(100e3), 0.0)]);
        assert!(matches!(
            ReceiverPlan::new(&no_transfer, &dev, &rx),
            Err(ReceiverError::MissingTransfer)
        ));
        let nyq = ReceiverParams {
            sample_rate: 1e6,
            ..rx
        };
        assert!(matches!(
            ReceiverPlan::new(&layout(hz(150e3)), &dev, &nyq),
            Err(ReceiverError::Model(_))
        ));
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let dev = default_device();
        let rx = ReceiverParams::default();
        let rec = synthesize_trace(
            &Vector2::new(1.0, 0.0),
            &layout(hz(150e3)),
            &dev,
            &rx,
            0.0,
            0,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&rec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time_s,voltage_V\n"));
        assert_eq!(text.lines().count(), rec.samples.len() + 1);
        let meta = serde_json::to_string(&trace_metadata(&rec, &rx)).unwrap();
        assert!(meta.contains("\"samples\":1500"));
    }
}
