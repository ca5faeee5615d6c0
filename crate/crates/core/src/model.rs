//! Domain types shared by every stage of the toolkit.
//!
//! All rates are angular (rad/s) and all variances are in quanta with the
//! vacuum variance fixed at ½ per quadrature. Configuration files carry
//! ordinary frequencies; see [`crate::config`] for the conversion.

use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Variance of one quadrature of the ground state.
pub const ZERO_POINT_VARIANCE: f64 = 0.5;

/// Relative slack on det(cov) ≥ ¼ to absorb integrator rounding.
pub const HEISENBERG_TOLERANCE: f64 = 1e-9;

/// `validate` warns once max(Γ₊, Γ₋) reaches κ / this.
pub const STRONG_COUPLING_FRACTION: f64 = 10.0;

/// Dynamics refuse segments with max(Γ₊, Γ₋) ≥ κ / this: the cavity can no
/// longer be eliminated at all.
pub const BREAKDOWN_FRACTION: f64 = 2.0;

/// Angular frequency from an ordinary frequency in Hz.
pub fn hz(f: f64) -> f64 {
    TAU * f
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("covariance is not symmetric: off-diagonals {0} and {1}")]
    Asymmetric(f64, f64),
    #[error("covariance violates the Heisenberg bound: det = {det} < 1/4")]
    Unphysical { det: f64 },
    #[error("covariance is not positive definite (eigenvalues {0}, {1})")]
    NotPositive(f64, f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid device parameter: {0}")]
    InvalidDevice(String),
    #[error("invalid pump segment: {0}")]
    InvalidSegment(String),
    #[error("invalid receiver parameter: {0}")]
    InvalidReceiver(String),
    #[error("invalid squeeze parameters: {0}")]
    InvalidSqueeze(String),
}

/// Physical constants of the electromechanical circuit plus bath occupancies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub omega_c: f64,
    pub kappa: f64,
    pub kappa_ext: f64,
    pub omega_m: f64,
    pub gamma_m: f64,
    pub g0: f64,
    pub n_m: f64,
    pub n_c: f64,
}

impl DeviceParams {
    /// Internal cavity loss rate.
    pub fn kappa_0(&self) -> f64 {
        self.kappa - self.kappa_ext
    }

    pub fn is_resolved_sideband(&self) -> bool {
        self.kappa < self.omega_m
    }

    /// Γ± = 4 g₀² n± / κ for a circulating photon number n±.
    pub fn rate_from_photons(&self, photons: f64) -> f64 {
        4.0 * self.g0 * self.g0 * photons / self.kappa
    }

    pub fn photons_from_rate(&self, rate: f64) -> f64 {
        rate * self.kappa / (4.0 * self.g0 * self.g0)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let rates = [
            ("omega_c", self.omega_c),
            ("kappa", self.kappa),
            ("kappa_ext", self.kappa_ext),
            ("omega_m", self.omega_m),
            ("gamma_m", self.gamma_m),
            ("g0", self.g0),
        ];
        for (name, v) in rates {
            if !v.is_finite() || v <= 0.0 {
                return Err(ModelError::InvalidDevice(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if self.kappa_ext > self.kappa {
            return Err(ModelError::InvalidDevice(format!(
                "kappa_ext ({}) exceeds kappa ({})",
                self.kappa_ext, self.kappa
            )));
        }
        for (name, v) in [("n_m", self.n_m), ("n_c", self.n_c)] {
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::InvalidDevice(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for DeviceParams {
    fn default() -> Self {
        default_device()
    }
}

/// The device of the reference experiment.
pub fn default_device() -> DeviceParams {
    DeviceParams {
        omega_c: hz(7.376841e9),
        kappa: hz(3.4e6),
        kappa_ext: hz(3.1e6),
        omega_m: hz(9.3608e6),
        gamma_m: hz(21.0),
        g0: hz(287.0),
        n_m: 36.0,
        n_c: 0.0,
    }
}

/// One constant-rate stretch of the two-tone drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSegment {
    /// Seconds.
    pub duration: f64,
    /// Blue-pump rate Γ₊.
    pub gamma_plus: f64,
    /// Red-pump rate Γ₋.
    pub gamma_minus: f64,
    /// Static common detuning Δ₀ of both pumps.
    pub delta_0: f64,
    /// Pump frequency offset δ_m from ω_m.
    pub delta_m: f64,
    /// Mean pump phase (φ₊ + φ₋)/2.
    pub phi_avg: f64,
    /// Width of the Gaussian rise and fall of the field envelope (s).
    pub envelope_sigma: f64,
}

impl PumpSegment {
    pub fn new(duration: f64, gamma_plus: f64, gamma_minus: f64) -> Self {
        Self {
            duration,
            gamma_plus,
            gamma_minus,
            delta_0: 0.0,
            delta_m: 0.0,
            phi_avg: 0.0,
            envelope_sigma: 0.0,
        }
    }

    pub fn idle(duration: f64) -> Self {
        Self::new(duration, 0.0, 0.0)
    }

    pub fn with_detuning(mut self, delta_0: f64, delta_m: f64) -> Self {
        self.delta_0 = delta_0;
        self.delta_m = delta_m;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.envelope_sigma = sigma;
        self
    }

    pub fn with_phase(mut self, phi_avg: f64) -> Self {
        self.phi_avg = phi_avg;
        self
    }

    /// Γ_em = Γ₋ − Γ₊; positive cools/squeezes, negative amplifies.
    pub fn gamma_em(&self) -> f64 {
        self.gamma_minus - self.gamma_plus
    }

    pub fn is_rwa(&self) -> bool {
        self.delta_0 == 0.0 && self.delta_m == 0.0
    }

    pub fn has_edges(&self) -> bool {
        self.envelope_sigma > 0.0
    }

    /// Field-amplitude envelope at time `t` into the segment: a square pulse
    /// whose rise and fall are Gaussian flanks reaching full amplitude 2σ
    /// inside each end.
    pub fn envelope(&self, t: f64) -> f64 {
        let sigma = self.envelope_sigma;
        if sigma <= 0.0 {
            return 1.0;
        }
        let edge = 2.0 * sigma;
        let mut env: f64 = 1.0;
        if t < edge {
            let d = t - edge;
            env = env.min((-d * d / (2.0 * sigma * sigma)).exp());
        }
        let fall = self.duration - edge;
        if t > fall {
            let d = t - fall;
            env = env.min((-d * d / (2.0 * sigma * sigma)).exp());
        }
        env
    }

    /// (Γ₊(t), Γ₋(t)); rates follow pump power, i.e. the squared envelope.
    pub fn rates_at(&self, t: f64) -> (f64, f64) {
        let e2 = self.envelope(t).powi(2);
        (self.gamma_plus * e2, self.gamma_minus * e2)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let fields = [
            ("duration", self.duration),
            ("gamma_plus", self.gamma_plus),
            ("gamma_minus", self.gamma_minus),
            ("envelope_sigma", self.envelope_sigma),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::InvalidSegment(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("delta_0", self.delta_0),
            ("delta_m", self.delta_m),
            ("phi_avg", self.phi_avg),
        ] {
            if !v.is_finite() {
                return Err(ModelError::InvalidSegment(format!("{name} is not finite")));
            }
        }
        Ok(())
    }
}

/// Time-ordered pump segments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PulseSchedule {
    pub segments: Vec<PumpSegment>,
}

impl PulseSchedule {
    pub fn new(segments: Vec<PumpSegment>) -> Self {
        Self { segments }
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PumpSegment> {
        self.segments.iter()
    }
}

impl From<Vec<PumpSegment>> for PulseSchedule {
    fn from(segments: Vec<PumpSegment>) -> Self {
        Self { segments }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleWarning {
    StrongCoupling {
        segment: usize,
        rate: f64,
        limit: f64,
    },
    Envelope {
        segment: usize,
        duration: f64,
        sigma: f64,
    },
}

impl fmt::Display for ScheduleWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleWarning::StrongCoupling { segment, rate, limit } => write!(
                f,
                "segment {segment}: pump rate {:.4e} Hz is not below kappa/10 = {:.4e} Hz (strong coupling, adiabatic elimination invalid)",
                rate / TAU,
                limit / TAU
            ),
            ScheduleWarning::Envelope { segment, duration, sigma } => write!(
                f,
                "segment {segment}: duration {duration:.3e} s is not longer than 4 envelope widths (sigma = {sigma:.3e} s)"
            ),
        }
    }
}

/// Physics warnings for a schedule; an empty list means every segment is in
/// the weak-coupling regime and long enough to contain its edges.
pub fn validate(schedule: &PulseSchedule, dev: &DeviceParams) -> Vec<ScheduleWarning> {
    let limit = dev.kappa / STRONG_COUPLING_FRACTION;
    let mut warnings = Vec::new();
    for (i, seg) in schedule.iter().enumerate() {
        let rate = seg.gamma_plus.max(seg.gamma_minus);
        if !(rate < limit) {
            warnings.push(ScheduleWarning::StrongCoupling {
                segment: i,
                rate,
                limit,
            });
        }
        if !(seg.duration > 4.0 * seg.envelope_sigma) {
            warnings.push(ScheduleWarning::Envelope {
                segment: i,
                duration: seg.duration,
                sigma: seg.envelope_sigma,
            });
        }
    }
    warnings
}

/// Mean and covariance of the two mechanical quadratures (X₁ = X₋, X₂ = X₊).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawState", into = "RawState")]
pub struct GaussianState {
    mean: Vector2<f64>,
    cov: Matrix2<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawState {
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
}

impl TryFrom<RawState> for GaussianState {
    type Error = ModelError;
    fn try_from(raw: RawState) -> Result<Self, ModelError> {
        GaussianState::new(
            Vector2::from(raw.mean),
            Matrix2::new(raw.cov[0][0], raw.cov[0][1], raw.cov[1][0], raw.cov[1][1]),
        )
    }
}

impl From<GaussianState> for RawState {
    fn from(s: GaussianState) -> Self {
        RawState {
            mean: [s.mean[0], s.mean[1]],
            cov: [
                [s.cov[(0, 0)], s.cov[(0, 1)]],
                [s.cov[(1, 0)], s.cov[(1, 1)]],
            ],
        }
    }
}

impl GaussianState {
    /// Rejects asymmetric, non-positive or sub-Heisenberg covariances.
    pub fn new(mean: Vector2<f64>, cov: Matrix2<f64>) -> Result<Self, ModelError> {
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("mean"));
        }
        check_physical_covariance(&cov)?;
        Ok(Self { mean, cov })
    }

    pub fn vacuum() -> Self {
        Self::thermal(0.0)
    }

    /// Thermal state with occupancy `n` (variance n + ½).
    pub fn thermal(n: f64) -> Self {
        Self {
            mean: Vector2::zeros(),
            cov: Matrix2::identity() * (n + ZERO_POINT_VARIANCE),
        }
    }

    pub fn squeezed_thermal(params: &SqueezeParams) -> Result<Self, ModelError> {
        Self::new(Vector2::zeros(), params.covariance())
    }

    pub fn mean(&self) -> &Vector2<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix2<f64> {
        &self.cov
    }

    pub fn with_mean(mut self, mean: Vector2<f64>) -> Self {
        self.mean = mean;
        self
    }

    pub fn det(&self) -> f64 {
        self.cov.determinant()
    }

    /// Apply the linear map `m` to the quadratures: mean → m·mean, cov → m·cov·mᵀ.
    pub fn transformed(&self, m: &Matrix2<f64>) -> Self {
        Self {
            mean: m * self.mean,
            cov: m * self.cov * m.transpose(),
        }
    }
}

pub fn check_physical_covariance(cov: &Matrix2<f64>) -> Result<(), ModelError> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("covariance"));
    }
    let (a, b) = (cov[(0, 1)], cov[(1, 0)]);
    let scale = cov[(0, 0)].abs().max(cov[(1, 1)].abs()).max(1.0);
    if (a - b).abs() > 1e-12 * scale {
        return Err(ModelError::Asymmetric(a, b));
    }
    let (l1, l2) = crate::linalg::sym_eigenvalues(cov);
    if l1 <= 0.0 || l2 <= 0.0 {
        return Err(ModelError::NotPositive(l1, l2));
    }
    let det = cov.determinant();
    if det < 0.25 * (1.0 - HEISENBERG_TOLERANCE) {
        return Err(ModelError::Unphysical { det });
    }
    Ok(())
}

/// Heterodyne receiver chain settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverParams {
    /// Intermediate (heterodyne) angular frequency.
    pub omega_het: f64,
    /// Samples per second.
    pub sample_rate: f64,
    /// Total power gain, V²/quanta.
    pub g_tot: f64,
    /// Receiver-added noise referred to the cavity output, quanta.
    pub n_hemt: f64,
    /// Linear drift of the measurement axis, rad/s.
    pub phase_drift_rate: f64,
}

impl Default for ReceiverParams {
    fn default() -> Self {
        Self {
            omega_het: hz(1.8e6),
            sample_rate: 50e6,
            g_tot: 1.0,
            n_hemt: 20.0,
            phase_drift_rate: 0.0,
        }
    }
}

impl ReceiverParams {
    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if !(self.sample_rate > self.omega_het / PI) {
            return Err(ModelError::InvalidReceiver(format!(
                "sample rate {} S/s is below the Nyquist rate {} S/s",
                self.sample_rate,
                self.omega_het / PI
            )));
        }
        if !(self.g_tot > 0.0) || !self.g_tot.is_finite() {
            return Err(ModelError::InvalidReceiver(format!(
                "g_tot must be > 0, got {}",
                self.g_tot
            )));
        }
        if !(self.n_hemt >= 0.0) || !self.n_hemt.is_finite() {
            return Err(ModelError::InvalidReceiver(format!(
                "n_hemt must be >= 0, got {}",
                self.n_hemt
            )));
        }
        if !self.phase_drift_rate.is_finite() || !self.omega_het.is_finite() {
            return Err(ModelError::InvalidReceiver("non-finite frequency".into()));
        }
        Ok(())
    }
}

/// Squeezed thermal state parameters.
///
/// The covariance is
/// `(n_sq + ½) [[cosh 2r + sinh 2r cos φ, −sinh 2r sin φ], [−sinh 2r sin φ, cosh 2r − sinh 2r cos φ]]`,
/// so φ is 2π-periodic and its principal range is [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeParams {
    pub r: f64,
    pub n_sq: f64,
    pub phi: f64,
}

impl SqueezeParams {
    pub fn new(r: f64, n_sq: f64, phi: f64) -> Result<Self, ModelError> {
        if !(r.is_finite() && n_sq.is_finite() && phi.is_finite()) {
            return Err(ModelError::InvalidSqueeze("non-finite parameter".into()));
        }
        if r < 0.0 {
            return Err(ModelError::InvalidSqueeze(format!(
                "r must be >= 0, got {r}"
            )));
        }
        if n_sq < 0.0 {
            return Err(ModelError::InvalidSqueeze(format!(
                "n_sq must be >= 0, got {n_sq}"
            )));
        }
        Ok(Self {
            r,
            n_sq,
            phi: principal_angle(phi),
        })
    }

    pub fn covariance(&self) -> Matrix2<f64> {
        let scale = self.n_sq + ZERO_POINT_VARIANCE;
        let (c, s) = ((2.0 * self.r).cosh(), (2.0 * self.r).sinh());
        let (cp, sp) = (self.phi.cos(), self.phi.sin());
        Matrix2::new(c + s * cp, -s * sp, -s * sp, c - s * cp) * scale
    }

    /// Angle of the measurement axis u = (cos θ, sin θ) with the smallest
    /// marginal variance, in [0, π).
    pub fn squeezed_axis(&self) -> f64 {
        // uᵀGu ∝ cosh 2r + sinh 2r·cos(φ + 2θ)
        (0.5 * (PI - self.phi)).rem_euclid(PI)
    }
}

/// Map an angle into [0, 2π).
pub fn principal_angle(phi: f64) -> f64 {
    let p = phi.rem_euclid(TAU);
    if p >= TAU {
        0.0
    } else {
        p
    }
}

/// Squeezed state reconstructed in the reference experiment.
pub fn reference_squeezed_state() -> SqueezeParams {
    SqueezeParams {
        r: 0.661,
        n_sq: 0.44,
        phi: 1.481,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_device_matches_table() {
        let dev = default_device();
        assert_relative_eq!(dev.gamma_m, TAU * 21.0);
        assert_eq!(dev.n_m, 36.0);
        assert_eq!(dev.n_c, 0.0);
        assert_relative_eq!(dev.kappa_0(), TAU * 0.3e6, max_relative = 1e-12);
        assert!(dev.is_resolved_sideband());
        dev.check().unwrap();
    }

    #[test]
    fn default_device_roundtrips_through_json() {
        let dev = default_device();
        let text = serde_json::to_string(&dev).unwrap();
        let back: DeviceParams = serde_json::from_str(&text).unwrap();
        assert_eq!(dev, back);
        for (a, b) in [
            (dev.omega_c, back.omega_c),
            (dev.g0, back.g0),
            (dev.kappa, back.kappa),
        ] {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn photon_rate_conversion_inverts() {
        let dev = default_device();
        let rate = dev.rate_from_photons(1.0e5);
        assert_relative_eq!(rate, 4.0 * dev.g0.powi(2) * 1.0e5 / dev.kappa);
        assert_relative_eq!(dev.photons_from_rate(rate), 1.0e5, max_relative = 1e-12);
    }

    #[test]
    fn validate_flags_strong_coupling_and_short_pulses() {
        let dev = default_device();
        let ok = PulseSchedule::new(vec![
            PumpSegment::new(30e-6, hz(73e3), 0.0).with_sigma(200e-9)
        ]);
        assert!(validate(&ok, &dev).is_empty());

        let strong = PulseSchedule::new(vec![PumpSegment::new(30e-6, dev.kappa, 0.0)]);
        let w = validate(&strong, &dev);
        assert!(matches!(
            w.as_slice(),
            [ScheduleWarning::StrongCoupling { segment: 0, .. }]
        ));

        let empty = PulseSchedule::new(vec![PumpSegment::new(0.0, 0.0, 0.0).with_sigma(200e-9)]);
        let w = validate(&empty, &dev);
        assert!(matches!(
            w.as_slice(),
            [ScheduleWarning::Envelope { segment: 0, .. }]
        ));
    }

    #[test]
    fn sub_heisenberg_state_is_rejected() {
        let cov = Matrix2::new(0.4, 0.0, 0.0, 0.4);
        assert!(matches!(
            GaussianState::new(Vector2::zeros(), cov),
            Err(ModelError::Unphysical { .. })
        ));
        // rounding-level violations pass
        let cov = Matrix2::new(0.5 * (1.0 - 1e-12), 0.0, 0.0, 0.5);
        GaussianState::new(Vector2::zeros(), cov).unwrap();
        let asym = Matrix2::new(1.0, 0.1, 0.2, 1.0);
        assert!(matches!(
            GaussianState::new(Vector2::zeros(), asym),
            Err(ModelError::Asymmetric(..))
        ));
    }

    #[test]
    fn state_deserialization_enforces_physicality() {
        let bad = r#"{"mean":[0.0,0.0],"cov":[[0.1,0.0],[0.0,0.1]]}"#;
        assert!(serde_json::from_str::<GaussianState>(bad).is_err());
        let good = r#"{"mean":[0.0,1.0],"cov":[[0.5,0.0],[0.0,0.5]]}"#;
        let s: GaussianState = serde_json::from_str(good).unwrap();
        assert_eq!(s.mean()[1], 1.0);
    }

    #[test]
    fn envelope_is_flat_top_with_gaussian_edges() {
        let seg = PumpSegment::new(10e-6, hz(100e3), 0.0).with_sigma(200e-9);
        assert_relative_eq!(seg.envelope(5e-6), 1.0);
        assert_relative_eq!(seg.envelope(0.4e-6), 1.0);
        assert_relative_eq!(seg.envelope(0.0), (-2.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(seg.envelope(10e-6), (-2.0f64).exp(), max_relative = 1e-12);
        let (gp, gm) = seg.rates_at(0.2e-6);
        assert_relative_eq!(gp, hz(100e3) * (-1.0f64).exp(), max_relative = 1e-12);
        assert_eq!(gm, 0.0);
    }

    #[test]
    fn squeeze_covariance_has_expected_eigenvalues() {
        let p = reference_squeezed_state();
        let cov = p.covariance();
        let (lo, hi) = crate::linalg::sym_eigenvalues(&cov);
        assert_relative_eq!(lo, 0.94 * (-2.0 * 0.661f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(hi, 0.94 * (2.0 * 0.661f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(cov.determinant(), 0.94f64.powi(2), max_relative = 1e-12);
    }

    #[test]
    fn squeezed_axis_minimizes_marginal_variance() {
        for phi in [0.0, 1.481, 3.0, 5.5] {
            let p = SqueezeParams::new(0.661, 0.44, phi).unwrap();
            let cov = p.covariance();
            let marginal = |t: f64| {
                let u = Vector2::new(t.cos(), t.sin());
                (u.transpose() * cov * u)[0]
            };
            let best = (0..100_000)
                .map(|k| k as f64 * PI / 100_000.0)
                .min_by(|a, b| marginal(*a).total_cmp(&marginal(*b)))
                .unwrap();
            let axis = p.squeezed_axis();
            let d = (axis - best).rem_euclid(PI);
            assert!(d.min(PI - d) < 1e-4, "phi {phi}: {axis} vs {best}");
        }
        assert_relative_eq!(
            reference_squeezed_state().squeezed_axis(),
            0.8303,
            epsilon = 1e-4
        );
    }
}
