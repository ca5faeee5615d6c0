//! JSON run configuration. Files carry ordinary frequencies in Hz (and
//! seconds); everything is converted to angular units on load.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::Theory;
use crate::model::{hz, DeviceParams, PumpSegment, ReceiverParams};
use crate::protocol::{
    BootstrapSettings, CooledOccupancy, Experiment, ExperimentKind, Preparation, ProtocolError,
    ReadoutMode, Sequence,
};
use crate::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Syntax or shape error; `line`/`column` point into the file.
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema_version {found} (this build reads {SCHEMA_VERSION})")]
    SchemaVersion { found: u32 },
    #[error("missing field `experiment`")]
    MissingExperiment,
    #[error("output: {0}")]
    Output(String),
    #[error(transparent)]
    Invalid(#[from] ProtocolError),
}

fn one() -> u32 {
    SCHEMA_VERSION
}

/// Device table; rates in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub omega_c: f64,
    pub kappa: f64,
    pub kappa_ext: f64,
    pub omega_m: f64,
    pub gamma_m: f64,
    pub g0: f64,
    #[serde(default = "default_n_m")]
    pub n_m: f64,
    #[serde(default)]
    pub n_c: f64,
}

fn default_n_m() -> f64 {
    36.0
}

impl DeviceConfig {
    pub fn to_device(&self) -> DeviceParams {
        DeviceParams {
            omega_c: hz(self.omega_c),
            kappa: hz(self.kappa),
            kappa_ext: hz(self.kappa_ext),
            omega_m: hz(self.omega_m),
            gamma_m: hz(self.gamma_m),
            g0: hz(self.g0),
            n_m: self.n_m,
            n_c: self.n_c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverConfig {
    pub omega_het: f64,
    /// Samples per second.
    pub sample_rate: f64,
    pub g_tot: f64,
    pub n_hemt: f64,
    pub phase_drift_rate: f64,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self {
            omega_het: 1.8e6,
            sample_rate: 50e6,
            g_tot: 1.0,
            n_hemt: 20.0,
            phase_drift_rate: 0.0,
        }
    }
}

impl ReceiverConfig {
    pub fn to_receiver(&self) -> ReceiverParams {
        ReceiverParams {
            omega_het: hz(self.omega_het),
            sample_rate: self.sample_rate,
            g_tot: self.g_tot,
            n_hemt: self.n_hemt,
            phase_drift_rate: hz(self.phase_drift_rate),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceConfig {
    pub cool_gamma_minus: f64,
    pub cool_duration: f64,
    pub probe_gamma_minus: f64,
    pub target_gain: f64,
    pub transfer_gamma_minus: f64,
    pub transfer_duration: f64,
    pub squeeze_gamma_minus: f64,
    pub squeeze_duration: f64,
    pub readout_gamma_plus: f64,
    pub readout_duration: f64,
    pub tea_ratio: f64,
    pub delta_0: f64,
    pub delta_m: f64,
    pub edge_sigma: f64,
    pub repetition_period: f64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        let s = Sequence::default();
        let f = |w: f64| w / hz(1.0);
        Self {
            cool_gamma_minus: f(s.cool_gamma_minus),
            cool_duration: s.cool_duration,
            probe_gamma_minus: f(s.probe_gamma_minus),
            target_gain: s.target_gain,
            transfer_gamma_minus: f(s.transfer_gamma_minus),
            transfer_duration: s.transfer_duration,
            squeeze_gamma_minus: f(s.squeeze_gamma_minus),
            squeeze_duration: s.squeeze_duration,
            readout_gamma_plus: f(s.readout_gamma_plus),
            readout_duration: s.readout_duration,
            tea_ratio: s.tea_ratio,
            delta_0: f(s.delta_0),
            delta_m: f(s.delta_m),
            edge_sigma: s.edge_sigma,
            repetition_period: s.repetition_period,
        }
    }
}

impl SequenceConfig {
    pub fn to_sequence(&self) -> Sequence {
        Sequence {
            cool_gamma_minus: hz(self.cool_gamma_minus),
            cool_duration: self.cool_duration,
            probe_gamma_minus: hz(self.probe_gamma_minus),
            target_gain: self.target_gain,
            transfer_gamma_minus: hz(self.transfer_gamma_minus),
            transfer_duration: self.transfer_duration,
            squeeze_gamma_minus: hz(self.squeeze_gamma_minus),
            squeeze_duration: self.squeeze_duration,
            readout_gamma_plus: hz(self.readout_gamma_plus),
            readout_duration: self.readout_duration,
            tea_ratio: self.tea_ratio,
            delta_0: hz(self.delta_0),
            delta_m: hz(self.delta_m),
            edge_sigma: self.edge_sigma,
            repetition_period: self.repetition_period,
        }
    }
}

/// One pulse of the explicit schedule; rates in Hz, times in s, phase in rad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub duration: f64,
    #[serde(default)]
    pub gamma_plus: f64,
    #[serde(default)]
    pub gamma_minus: f64,
    #[serde(default)]
    pub delta_0: f64,
    #[serde(default)]
    pub delta_m: f64,
    #[serde(default)]
    pub phi_avg: f64,
    #[serde(default)]
    pub envelope_sigma: f64,
}

impl SegmentConfig {
    pub fn to_segment(&self) -> PumpSegment {
        PumpSegment::new(self.duration, hz(self.gamma_plus), hz(self.gamma_minus))
            .with_detuning(hz(self.delta_0), hz(self.delta_m))
            .with_phase(self.phi_avg)
            .with_sigma(self.envelope_sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<OutputFormat>,
    /// Adds `svg` to `formats`.
    pub plot: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
            plot: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default = "one")]
    pub schema_version: u32,
    /// Optional for `validate`, required for `run` and `theory`.
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    pub device: DeviceConfig,
    #[serde(default)]
    pub receiver: ReceiverConfig,
    #[serde(default)]
    pub sequence: SequenceConfig,
    #[serde(default)]
    pub schedule: Vec<SegmentConfig>,
    /// Ratios, angles (rad) or bath occupancies depending on the experiment.
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
    #[serde(default)]
    pub shots: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub readout: ReadoutMode,
    #[serde(default)]
    pub simulation_theory: Theory,
    #[serde(default = "full")]
    pub overlay_theory: Theory,
    #[serde(default)]
    pub preparation: Option<Preparation>,
    #[serde(default)]
    pub cooled_occupancy: CooledOccupancy,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub eta_q: Option<f64>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn full() -> Theory {
    Theory::Full
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        let b = BootstrapSettings::default();
        Self {
            resamples: b.resamples,
            level: b.level,
        }
    }
}

impl ConfigFile {
    /// Parses and schema-checks a configuration document.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            let mut message = e.to_string();
            if let Some(i) = message.rfind(" at line ") {
                message.truncate(i);
            }
            ConfigError::Parse {
                line: e.line(),
                column: e.column(),
                message,
            }
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                found: cfg.schema_version,
            });
        }
        Ok(cfg)
    }

    pub fn schedule(&self) -> Vec<PumpSegment> {
        self.schedule
            .iter()
            .map(SegmentConfig::to_segment)
            .collect()
    }

    /// The experiment in internal units, checked.
    pub fn experiment(&self) -> Result<Experiment, ConfigError> {
        let kind = self.experiment.ok_or(ConfigError::MissingExperiment)?;
        let mut exp = Experiment::new(kind);
        exp.device = self.device.to_device();
        exp.receiver = self.receiver.to_receiver();
        exp.sequence = self.sequence.to_sequence();
        if let Some(s) = &self.sweep {
            exp.sweep = s.clone();
        }
        if let Some(n) = self.shots {
            exp.shots = n;
        }
        exp.seed = self.seed;
        exp.readout = self.readout;
        exp.simulation_theory = self.simulation_theory;
        exp.overlay_theory = self.overlay_theory;
        exp.schedule = self.schedule();
        if let Some(p) = self.preparation {
            exp.preparation = p;
        }
        exp.cooled_occupancy = self.cooled_occupancy;
        exp.bootstrap = BootstrapSettings {
            resamples: self.bootstrap.resamples,
            level: self.bootstrap.level,
        };
        exp.eta_q = self.eta_q;
        exp.check()?;
        Ok(exp)
    }

    /// Formats to write, honouring `plot`; never empty.
    pub fn formats(&self) -> Result<Vec<OutputFormat>, ConfigError> {
        let mut f = self.output.formats.clone();
        if self.output.plot {
            f.push(OutputFormat::Svg);
        }
        f.sort();
        f.dedup();
        if f.is_empty() {
            return Err(ConfigError::Output(
                "at least one output format is required".into(),
            ));
        }
        Ok(f)
    }
}
