use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    occupancy, Chain, CooledOccupancy, Experiment, ExperimentKind, Format, Preparation,
    ProtocolError, Table,
};
use crate::calibrate::{
    direct_total_variance, fit_thermal_sweep, infer_added_noise, infer_squeezing, sideband_limits,
    to_db, ThermalSweepFit,
};
use crate::dynamics::{
    added_noise_full, added_noise_ideal, squeezed_variance_ideal, squeezed_variances_full,
    Quadrature,
};
use crate::linalg::sym_eigenvalues;
use crate::model::{DeviceParams, GaussianState, SqueezeParams};
use crate::rng::{derive_seed, stream};
use crate::stats::{covariance, variance, Interval};
use crate::tomography::{
    analyze, covariance_to_squeeze, fock_populations, AnalysisOptions, MarginalDataset,
    ReconstructOptions, ReconstructionResult,
};

const QUADRATURES: [Quadrature; 2] = [Quadrature::Minus, Quadrature::Plus];

fn db(v: f64) -> Option<f64> {
    to_db(v).ok()
}

fn db_interval(iv: Option<Interval>) -> (Option<f64>, Option<f64>) {
    match iv {
        Some(iv) => (db(iv.low), db(iv.high)),
        None => (None, None),
    }
}

/// Seed for sweep point `point`, preparation `tag`.
fn point_seed(exp: &Experiment, point: usize, tag: u64) -> u64 {
    derive_seed(exp.seed, point as u64 * 16 + tag)
}

/// Bootstrap over independently resampled shot sets. `f` maps the
/// resampled covariances to statistics; each component gets a percentile
/// interval unless more than 5% of resamples fail.
fn bootstrap_covariances<F>(
    exp: &Experiment,
    sets: &[&[Vector2<f64>]],
    seed: u64,
    dim: usize,
    f: F,
) -> Vec<Option<Interval>>
where
    F: Fn(&[Matrix2<f64>]) -> Option<Vec<f64>> + Sync,
{
    let b = exp.bootstrap.resamples;
    if b == 0 {
        return vec![None; dim];
    }
    let draws: Vec<Option<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, k as u64);
            let covs: Vec<Matrix2<f64>> = sets
                .iter()
                .map(|s| {
                    let n = s.len();
                    let (mut sum, mut outer) = (Vector2::zeros(), Matrix2::zeros());
                    for _ in 0..n {
                        let x = s[rng.random_range(0..n)];
                        sum += x;
                        outer += x * x.transpose();
                    }
                    let m = sum / n as f64;
                    (outer - m * m.transpose() * n as f64) / (n as f64 - 1.0)
                })
                .collect();
            f(&covs)
        })
        .collect();
    let ok: Vec<&Vec<f64>> = draws.iter().flatten().collect();
    if (b - ok.len()) * 20 > b || ok.is_empty() {
        return vec![None; dim];
    }
    (0..dim)
        .map(|i| {
            let col: Vec<f64> = ok.iter().map(|v| v[i]).filter(|v| v.is_finite()).collect();
            (col.len() * 20 >= b * 19).then(|| Interval::from_samples(&col, exp.bootstrap.level))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddedNoisePoint {
    pub ratio: f64,
    pub gamma_plus: f64,
    /// Inferred added noise (X₋, X₊), quanta.
    pub added: [Option<f64>; 2],
    pub ci: [Option<Interval>; 2],
    pub n_sb_assumed: [f64; 2],
    /// Exact expectation of the simulated chain.
    pub model: [Option<f64>; 2],
    pub ideal: [Option<f64>; 2],
    pub full: [Option<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddedNoiseSweep {
    pub points: Vec<AddedNoisePoint>,
}

impl AddedNoiseSweep {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            ("ratio", Format::Full),
            ("add_noise_minus_db", Format::Db),
            ("add_noise_plus_db", Format::Db),
            ("ci_low", Format::Db),
            ("ci_high", Format::Db),
            ("model_minus_db", Format::Db),
            ("model_plus_db", Format::Db),
            ("ideal_minus_db", Format::Db),
            ("ideal_plus_db", Format::Db),
            ("full_minus_db", Format::Db),
            ("full_plus_db", Format::Db),
        ]);
        for p in &self.points {
            let (lo, hi) = db_interval(p.ci[0]);
            let d = |v: Option<f64>| v.and_then(db);
            t.push(vec![
                Some(p.ratio),
                d(p.added[0]),
                d(p.added[1]),
                lo,
                hi,
                d(p.model[0]),
                d(p.model[1]),
                d(p.ideal[0]),
                d(p.ideal[1]),
                d(p.full[0]),
                d(p.full[1]),
            ]);
        }
        t
    }

    /// Lowest inferred X₋ added noise and its ratio.
    pub fn minimum(&self) -> Option<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| p.added[0].and_then(db).map(|v| (p.ratio, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Y-factor added-noise measurement of the two-tone amplifier over Γ₊/Γ₋.
pub fn run_added_noise_sweep(exp: &Experiment) -> Result<AddedNoiseSweep, ProtocolError> {
    exp.check()?;
    let dev = exp.device;
    let thermal = *GaussianState::thermal(dev.n_m).cov();
    let cool = exp.cooling_pulse();
    let points = exp
        .sweep
        .par_iter()
        .enumerate()
        .map(|(i, &ratio)| -> Result<AddedNoisePoint, ProtocolError> {
            let amp = exp.tea_pulse(ratio)?;
            let hot = Chain::new(exp, &dev, thermal, &[], amp)?;
            let cold = Chain::new(exp, &dev, thermal, &[cool], amp)?;
            let n_sb = match exp.cooled_occupancy {
                CooledOccupancy::Model => {
                    let c = cold.prepared(0.0);
                    [occupancy(c[(0, 0)]), occupancy(c[(1, 1)])]
                }
                CooledOccupancy::SidebandLimit => {
                    let n = sideband_limits(&cool, &amp, &dev)?.0;
                    [n, n]
                }
            };
            let infer = |vt: &Matrix2<f64>, vc: &Matrix2<f64>, k: usize| {
                infer_added_noise(vt[(k, k)], vc[(k, k)], dev.n_m, n_sb[k], QUADRATURES[k]).ok()
            };

            let xt = hot.run(exp, 0.0, point_seed(exp, i, 0))?;
            let xc = cold.run(exp, 0.0, point_seed(exp, i, 1))?;
            let (ct, cc) = (covariance(&xt), covariance(&xc));
            let ci = bootstrap_covariances(exp, &[&xt, &xc], point_seed(exp, i, 2), 2, |c| {
                Some(vec![infer(&c[0], &c[1], 0)?, infer(&c[0], &c[1], 1)?])
            });
            let (et, ec) = (hot.expected(0.0), cold.expected(0.0));
            let full_seg = amp.with_detuning(exp.sequence.delta_0, exp.sequence.delta_m);
            let full = added_noise_full(&full_seg, &dev, exp.overlay_theory).ok();
            Ok(AddedNoisePoint {
                ratio,
                gamma_plus: amp.gamma_plus,
                added: [infer(&ct, &cc, 0), infer(&ct, &cc, 1)],
                ci: [ci[0], ci[1]],
                n_sb_assumed: n_sb,
                model: [infer(&et, &ec, 0), infer(&et, &ec, 1)],
                ideal: QUADRATURES
                    .map(|q| added_noise_ideal(q, amp.gamma_plus, amp.gamma_minus, &dev).ok()),
                full: [full.map(|f| f[0]), full.map(|f| f[1])],
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AddedNoiseSweep { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezePoint {
    pub ratio: f64,
    /// Inferred (squeezed, anti-squeezed) variances, quanta.
    pub variance: [f64; 2],
    pub ci: [Option<Interval>; 2],
    pub unphysical: bool,
    /// Principal variances of the prepared state.
    pub state: [f64; 2],
    pub model: [f64; 2],
    pub ideal: [Option<f64>; 2],
    pub full: [Option<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezeSweep {
    pub n_add_assumed: f64,
    pub points: Vec<SqueezePoint>,
}

impl SqueezeSweep {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            ("ratio", Format::Full),
            ("sq_minus_db", Format::Db),
            ("sq_plus_db", Format::Db),
            ("ci_low", Format::Db),
            ("ci_high", Format::Db),
            ("state_minus_db", Format::Db),
            ("state_plus_db", Format::Db),
            ("model_minus_db", Format::Db),
            ("model_plus_db", Format::Db),
            ("ideal_minus_db", Format::Db),
            ("ideal_plus_db", Format::Db),
            ("full_minus_db", Format::Db),
            ("full_plus_db", Format::Db),
        ]);
        for p in &self.points {
            let (lo, hi) = db_interval(p.ci[0]);
            let d = |v: Option<f64>| v.and_then(db);
            t.push(vec![
                Some(p.ratio),
                db(p.variance[0]),
                db(p.variance[1]),
                lo,
                hi,
                db(p.state[0]),
                db(p.state[1]),
                db(p.model[0]),
                db(p.model[1]),
                d(p.ideal[0]),
                d(p.ideal[1]),
                d(p.full[0]),
                d(p.full[1]),
            ]);
        }
        t
    }

    pub fn minimum(&self) -> Option<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| db(p.variance[0]).map(|v| (p.ratio, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Dissipative squeezing over Γ₊/Γ₋, read out with a phase-insensitive
/// amplifier against a thermal reference.
pub fn run_squeeze_sweep(exp: &Experiment) -> Result<SqueezeSweep, ProtocolError> {
    exp.check()?;
    let dev = exp.device;
    let thermal = *GaussianState::thermal(dev.n_m).cov();
    let amp = exp.readout_pulse();
    let hot = Chain::new(exp, &dev, thermal, &[], amp)?;
    let xt = hot.run(exp, 0.0, derive_seed(exp.seed, u64::MAX))?;
    let infer = |vt: &Matrix2<f64>, vs: &Matrix2<f64>| {
        let (lo, hi) = sym_eigenvalues(vs);
        infer_squeezing(0.5 * vt.trace(), hi, lo, dev.n_m, &amp, &dev)
    };
    let ct = covariance(&xt);
    let et = hot.expected(0.0);
    let n_add_assumed = infer(&et, &et)?.n_add;

    let points = exp
        .sweep
        .par_iter()
        .enumerate()
        .map(|(i, &ratio)| -> Result<SqueezePoint, ProtocolError> {
            let sq = exp.squeezing_pulse(ratio);
            let chain = Chain::new(exp, &dev, thermal, &[sq], amp)?;
            let xs = chain.run(exp, 0.0, point_seed(exp, i, 0))?;
            let inf = infer(&ct, &covariance(&xs))?;
            let ci = bootstrap_covariances(exp, &[&xt, &xs], point_seed(exp, i, 1), 2, |c| {
                infer(&c[0], &c[1]).ok().map(|s| vec![s.minus, s.plus])
            });
            let model = infer(&et, &chain.expected(0.0))?;
            let (slo, shi) = sym_eigenvalues(&chain.prepared(0.0));
            let full = squeezed_variances_full(
                &sq.with_detuning(exp.sequence.delta_0, exp.sequence.delta_m),
                &dev,
                exp.overlay_theory,
            )
            .ok();
            Ok(SqueezePoint {
                ratio,
                variance: [inf.minus, inf.plus],
                ci: [ci[0], ci[1]],
                unphysical: inf.unphysical,
                state: [slo, shi],
                model: [model.minus, model.plus],
                ideal: QUADRATURES
                    .map(|q| squeezed_variance_ideal(q, sq.gamma_plus, sq.gamma_minus, &dev).ok()),
                full: [full.map(|f| f[0]), full.map(|f| f[1])],
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SqueezeSweep {
        n_add_assumed,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectVariancePoint {
    pub phi: f64,
    /// Total variance (state + added noise), quanta.
    pub total: f64,
    pub ci: Option<Interval>,
    pub model: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectVarianceSweep {
    pub preparation: Preparation,
    pub tea_ratio: f64,
    pub points: Vec<DirectVariancePoint>,
}

impl DirectVarianceSweep {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            ("phi_rad", Format::Full),
            ("total_variance_db", Format::Db),
            ("ci_low", Format::Db),
            ("ci_high", Format::Db),
            ("model_db", Format::Db),
        ]);
        for p in &self.points {
            let (lo, hi) = db_interval(p.ci);
            t.push(vec![Some(p.phi), db(p.total), lo, hi, db(p.model)]);
        }
        t
    }

    /// Smallest total variance (angle, dB).
    pub fn minimum(&self) -> Option<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| db(p.total).map(|v| (p.phi, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Single-quadrature readout of one state along every angle of the grid,
/// normalized to a thermal reference with nothing subtracted.
pub fn run_direct_variance_vs_angle(
    exp: &Experiment,
) -> Result<DirectVarianceSweep, ProtocolError> {
    exp.check()?;
    let dev = exp.device;
    let amp = exp.tea_pulse(exp.sequence.tea_ratio)?;
    let hot = Chain::new(exp, &dev, *GaussianState::thermal(dev.n_m).cov(), &[], amp)?;
    let xt: Vec<f64> = hot
        .run(exp, 0.0, derive_seed(exp.seed, u64::MAX))?
        .iter()
        .map(|x| x[0])
        .collect();
    let var_therm = variance(&xt);
    let model_therm = hot.expected(0.0)[(0, 0)];
    let chain = Chain::new(
        exp,
        &dev,
        exp.initial_covariance(exp.preparation)?,
        &exp.preparation_pulses(exp.preparation),
        amp,
    )?;
    let xt_vec: Vec<Vector2<f64>> = xt.iter().map(|&v| Vector2::new(v, 0.0)).collect();

    let points = exp
        .sweep
        .par_iter()
        .enumerate()
        .map(|(i, &phi)| -> Result<DirectVariancePoint, ProtocolError> {
            let xs = chain.run(exp, phi, point_seed(exp, i, 0))?;
            let ys: Vec<f64> = xs.iter().map(|x| x[0]).collect();
            let total = direct_total_variance(var_therm, variance(&ys), dev.n_m)?;
            let ys_vec: Vec<Vector2<f64>> = ys.iter().map(|&v| Vector2::new(v, 0.0)).collect();
            let ci =
                bootstrap_covariances(exp, &[&xt_vec, &ys_vec], point_seed(exp, i, 1), 1, |c| {
                    direct_total_variance(c[0][(0, 0)], c[1][(0, 0)], dev.n_m)
                        .ok()
                        .map(|v| vec![v])
                });
            let model = direct_total_variance(model_therm, chain.expected(phi)[(0, 0)], dev.n_m)?;
            Ok(DirectVariancePoint {
                phi,
                total,
                ci: ci[0],
                model,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DirectVarianceSweep {
        preparation: exp.preparation,
        tea_ratio: exp.sequence.tea_ratio,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyRun {
    pub preparation: Preparation,
    pub eta_q: f64,
    pub samples: usize,
    /// Squeeze parameters of the prepared state.
    pub truth: SqueezeParams,
    pub truth_cov: Matrix2<f64>,
    pub result: ReconstructionResult,
}

impl TomographyRun {
    /// Fock populations with bootstrap intervals and the prepared state's.
    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            ("n", Format::Integer),
            ("P_n", Format::Full),
            ("ci_low", Format::Full),
            ("ci_high", Format::Full),
            ("model_P_n", Format::Full),
        ]);
        let truth = fock_populations(&self.truth, self.result.fock_diag.len()).ok();
        for (n, p) in self.result.fock_diag.iter().enumerate() {
            let ci = self.result.fock_ci.as_ref().and_then(|c| c.get(n));
            t.push(vec![
                Some(n as f64),
                Some(*p),
                ci.map(|c| c.low),
                ci.map(|c| c.high),
                truth.as_ref().map(|v| v[n]),
            ]);
        }
        t
    }

    /// Reconstructed minimum quadrature variance (n_sq + ½)e^{−2r}, dB.
    pub fn squeezed_db(&self) -> Option<f64> {
        let p = self.result.squeeze.params;
        db((p.n_sq + 0.5) * (-2.0 * p.r).exp())
    }
}

/// Angle-resolved single-quadrature marginals → Gaussian tomography.
pub fn run_tomography(exp: &Experiment) -> Result<TomographyRun, ProtocolError> {
    exp.check()?;
    let dev = exp.device;
    let amp = exp.tea_pulse(exp.sequence.tea_ratio)?;
    let eta_q = match exp.eta_q {
        Some(eta) => eta,
        None => {
            // vacuum through the same chain: everything above ½ is added noise
            let vac = Chain::new(exp, &dev, *GaussianState::vacuum().cov(), &[], amp)?;
            1.0 / (1.0 + 2.0 * occupancy(vac.expected(0.0)[(0, 0)]))
        }
    };
    let chain = Chain::new(
        exp,
        &dev,
        exp.initial_covariance(exp.preparation)?,
        &exp.preparation_pulses(exp.preparation),
        amp,
    )?;
    let per_angle = exp
        .sweep
        .par_iter()
        .enumerate()
        .map(|(i, &phi)| {
            Ok(chain
                .run(exp, phi, point_seed(exp, i, 0))?
                .into_iter()
                .map(move |x| (phi, x[0]))
                .collect())
        })
        .collect::<Result<Vec<Vec<(f64, f64)>>, ProtocolError>>()?;
    let data = MarginalDataset::new(per_angle.concat(), eta_q)?;
    let opts = AnalysisOptions {
        reconstruct: ReconstructOptions::default(),
        resamples: exp.bootstrap.resamples,
        level: exp.bootstrap.level,
        seed: derive_seed(exp.seed, u64::MAX - 1),
    };
    let result = analyze(&data, &opts)?;
    let truth_cov = chain.prepared(0.0);
    Ok(TomographyRun {
        preparation: exp.preparation,
        eta_q,
        samples: data.len(),
        truth: covariance_to_squeeze(&truth_cov)?.params,
        truth_cov,
        result,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalPoint {
    pub n_m: f64,
    /// Mean quadrature variance, input-referred quanta.
    pub variance: f64,
    pub ci: Option<Interval>,
    pub model: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalSweep {
    pub points: Vec<ThermalPoint>,
    pub fit: ThermalSweepFit,
    pub model_fit: ThermalSweepFit,
}

impl ThermalSweep {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            ("n_m", Format::Full),
            ("variance", Format::Full),
            ("ci_low", Format::Full),
            ("ci_high", Format::Full),
            ("model_variance", Format::Full),
        ]);
        for p in &self.points {
            t.push(vec![
                Some(p.n_m),
                Some(p.variance),
                p.ci.map(|c| c.low),
                p.ci.map(|c| c.high),
                Some(p.model),
            ]);
        }
        t
    }
}

/// Phase-insensitive readout of thermal states at several bath
/// occupancies; the straight-line fit yields the added noise.
pub fn run_thermal_sweep(exp: &Experiment) -> Result<ThermalSweep, ProtocolError> {
    exp.check()?;
    let amp = exp.readout_pulse();
    let points = exp
        .sweep
        .par_iter()
        .enumerate()
        .map(|(i, &n)| -> Result<ThermalPoint, ProtocolError> {
            let dev = DeviceParams {
                n_m: n,
                ..exp.device
            };
            let chain = Chain::new(exp, &dev, *GaussianState::thermal(n).cov(), &[], amp)?;
            let xs = chain.run(exp, 0.0, point_seed(exp, i, 0))?;
            let ci = bootstrap_covariances(exp, &[&xs], point_seed(exp, i, 1), 1, |c| {
                Some(vec![0.5 * c[0].trace()])
            });
            Ok(ThermalPoint {
                n_m: n,
                variance: 0.5 * covariance(&xs).trace(),
                ci: ci[0],
                model: 0.5 * chain.expected(0.0).trace(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fit = fit_thermal_sweep(
        &points
            .iter()
            .map(|p| (p.n_m, p.variance))
            .collect::<Vec<_>>(),
    )?;
    let model_fit =
        fit_thermal_sweep(&points.iter().map(|p| (p.n_m, p.model)).collect::<Vec<_>>())?;
    Ok(ThermalSweep {
        points,
        fit,
        model_fit,
    })
}

/// Result of any experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", content = "result", rename_all = "snake_case")]
pub enum ExperimentOutput {
    AddedNoiseSweep(AddedNoiseSweep),
    SqueezeSweep(SqueezeSweep),
    TomographyRun(Box<TomographyRun>),
    DirectVarianceVsAngle(DirectVarianceSweep),
    ThermalSweep(ThermalSweep),
}

impl ExperimentOutput {
    pub fn table(&self) -> Table {
        match self {
            ExperimentOutput::AddedNoiseSweep(r) => r.table(),
            ExperimentOutput::SqueezeSweep(r) => r.table(),
            ExperimentOutput::TomographyRun(r) => r.table(),
            ExperimentOutput::DirectVarianceVsAngle(r) => r.table(),
            ExperimentOutput::ThermalSweep(r) => r.table(),
        }
    }

    /// One line with the headline figure of merit.
    pub fn summary(&self) -> String {
        let fmt_min = |m: Option<(f64, f64)>, what: &str, at: &str| match m {
            Some((x, v)) => format!("{what}: minimum {v:.3} dB at {at} = {x:.4}"),
            None => format!("{what}: no valid points"),
        };
        match self {
            ExperimentOutput::AddedNoiseSweep(r) => fmt_min(
                r.minimum(),
                "added_noise_sweep X- added noise",
                "gamma_plus/gamma_minus",
            ),
            ExperimentOutput::SqueezeSweep(r) => fmt_min(
                r.minimum(),
                "squeeze_sweep X- variance",
                "gamma_plus/gamma_minus",
            ),
            ExperimentOutput::DirectVarianceVsAngle(r) => fmt_min(
                r.minimum(),
                "direct_variance_vs_angle total variance",
                "phi_rad",
            ),
            ExperimentOutput::TomographyRun(r) => {
                let p = r.result.squeeze.params;
                format!(
                    "tomography_run: squeezed variance {} dB, r = {:.4}, n_sq = {:.4}, phi = {:.4}, purity = {:.4}",
                    r.squeezed_db().map_or("n/a".into(), |v| format!("{v:.3}")),
                    p.r,
                    p.n_sq,
                    p.phi,
                    r.result.purity
                )
            }
            ExperimentOutput::ThermalSweep(r) => format!(
                "thermal_sweep: n_add = {:.4} +/- {:.4} quanta ({} dB)",
                r.fit.n_add,
                r.fit.n_add_se,
                db(r.fit.n_add).map_or("n/a".into(), |v| format!("{v:.3}"))
            ),
        }
    }
}

/// Analytic curves only (no sampling): the ideal closed forms, the
/// detuned overlay and the exact expectation of the simulated chain.
pub fn theory_table(exp: &Experiment) -> Result<Table, ProtocolError> {
    exp.check()?;
    let dev = exp.device;
    let thermal = *GaussianState::thermal(dev.n_m).cov();
    let d = |v: Option<f64>| v.and_then(db);
    let s = &exp.sequence;
    Ok(match exp.kind {
        ExperimentKind::AddedNoiseSweep => {
            let mut t = Table::new(&[
                ("ratio", Format::Full),
                ("ideal_minus_db", Format::Db),
                ("ideal_plus_db", Format::Db),
                ("full_minus_db", Format::Db),
                ("full_plus_db", Format::Db),
            ]);
            for &ratio in &exp.sweep {
                let gm = s.probe_gamma_minus;
                let ideal = QUADRATURES.map(|q| added_noise_ideal(q, ratio * gm, gm, &dev).ok());
                let full = exp
                    .tea_pulse(ratio)
                    .ok()
                    .and_then(|seg| added_noise_full(&seg, &dev, exp.overlay_theory).ok());
                t.push(vec![
                    Some(ratio),
                    d(ideal[0]),
                    d(ideal[1]),
                    d(full.map(|f| f[0])),
                    d(full.map(|f| f[1])),
                ]);
            }
            t
        }
        ExperimentKind::SqueezeSweep => {
            let mut t = Table::new(&[
                ("ratio", Format::Full),
                ("ideal_minus_db", Format::Db),
                ("ideal_plus_db", Format::Db),
                ("full_minus_db", Format::Db),
                ("full_plus_db", Format::Db),
                ("state_minus_db", Format::Db),
                ("state_plus_db", Format::Db),
            ]);
            for &ratio in &exp.sweep {
                let sq = exp.squeezing_pulse(ratio);
                let ideal = QUADRATURES
                    .map(|q| squeezed_variance_ideal(q, sq.gamma_plus, sq.gamma_minus, &dev).ok());
                let full = squeezed_variances_full(&sq, &dev, exp.overlay_theory).ok();
                let prepared =
                    crate::dynamics::segment_transition(&sq, &dev, exp.simulation_theory)
                        .map(|tr| sym_eigenvalues(&tr.apply_cov(&thermal)))
                        .ok();
                t.push(vec![
                    Some(ratio),
                    d(ideal[0]),
                    d(ideal[1]),
                    d(full.map(|f| f[0])),
                    d(full.map(|f| f[1])),
                    d(prepared.map(|p| p.0)),
                    d(prepared.map(|p| p.1)),
                ]);
            }
            t
        }
        ExperimentKind::DirectVarianceVsAngle => {
            let amp = exp.tea_pulse(s.tea_ratio)?;
            let hot = Chain::new(exp, &dev, thermal, &[], amp)?;
            let chain = Chain::new(
                exp,
                &dev,
                exp.initial_covariance(exp.preparation)?,
                &exp.preparation_pulses(exp.preparation),
                amp,
            )?;
            let therm = hot.expected(0.0)[(0, 0)];
            let mut t = Table::new(&[
                ("phi_rad", Format::Full),
                ("model_db", Format::Db),
                ("state_db", Format::Db),
            ]);
            for &phi in &exp.sweep {
                let total = direct_total_variance(therm, chain.expected(phi)[(0, 0)], dev.n_m)?;
                t.push(vec![Some(phi), db(total), db(chain.prepared(phi)[(0, 0)])]);
            }
            t
        }
        ExperimentKind::TomographyRun => {
            let amp = exp.tea_pulse(s.tea_ratio)?;
            let chain = Chain::new(
                exp,
                &dev,
                exp.initial_covariance(exp.preparation)?,
                &exp.preparation_pulses(exp.preparation),
                amp,
            )?;
            let sp = covariance_to_squeeze(&chain.prepared(0.0))?.params;
            let pops = crate::tomography::fock_populations_auto(&sp)?;
            let mut t = Table::new(&[("n", Format::Integer), ("model_P_n", Format::Full)]);
            for (n, p) in pops.iter().enumerate() {
                t.push(vec![Some(n as f64), Some(*p)]);
            }
            t
        }
        ExperimentKind::ThermalSweep => {
            let amp = exp.readout_pulse();
            let mut t = Table::new(&[("n_m", Format::Full), ("model_variance", Format::Full)]);
            for &n in &exp.sweep {
                let dev = DeviceParams {
                    n_m: n,
                    ..exp.device
                };
                let chain = Chain::new(exp, &dev, *GaussianState::thermal(n).cov(), &[], amp)?;
                t.push(vec![Some(n), Some(0.5 * chain.expected(0.0).trace())]);
            }
            t
        }
    })
}

/// Dispatch on [`Experiment::kind`].
pub fn run(exp: &Experiment) -> Result<ExperimentOutput, ProtocolError> {
    Ok(match exp.kind {
        ExperimentKind::AddedNoiseSweep => {
            ExperimentOutput::AddedNoiseSweep(run_added_noise_sweep(exp)?)
        }
        ExperimentKind::SqueezeSweep => ExperimentOutput::SqueezeSweep(run_squeeze_sweep(exp)?),
        ExperimentKind::TomographyRun => {
            ExperimentOutput::TomographyRun(Box::new(run_tomography(exp)?))
        }
        ExperimentKind::DirectVarianceVsAngle => {
            ExperimentOutput::DirectVarianceVsAngle(run_direct_variance_vs_angle(exp)?)
        }
        ExperimentKind::ThermalSweep => ExperimentOutput::ThermalSweep(run_thermal_sweep(exp)?),
    })
}
