use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{MarginalDataset, TomographyError};
use crate::stats::Interval;
use crate::SCHEMA_VERSION;

/// JSON sidecar of a marginal CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub eta_q: f64,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

impl DatasetMetadata {
    pub fn new(eta_q: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            eta_q,
        }
    }
}

/// Writes `phi_rad,x_quanta_sqrt,schema_version` rows.
pub fn write_marginals_csv<W: Write>(
    data: &MarginalDataset,
    mut out: W,
) -> Result<(), TomographyError> {
    writeln!(out, "phi_rad,x_quanta_sqrt,schema_version")?;
    for (phi, x) in &data.points {
        writeln!(out, "{phi:e},{x:e},{SCHEMA_VERSION}")?;
    }
    Ok(())
}

/// Reads a marginal CSV; columns are located by header name and any
/// others are ignored.
pub fn read_marginals_csv<R: BufRead>(
    input: R,
    meta: &DatasetMetadata,
) -> Result<MarginalDataset, TomographyError> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| TomographyError::Csv("empty file".into()))??;
    let names: Vec<&str> = header
        .trim_start_matches('\u{feff}')
        .split(',')
        .map(|s| s.trim().trim_matches('"'))
        .collect();
    let col = |name: &str| {
        names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| TomographyError::Csv(format!("missing column {name}")))
    };
    let (ip, ix) = (col("phi_rad")?, col("x_quanta_sqrt")?);
    let mut points = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(',')
            .map(|s| s.trim().trim_matches('"'))
            .collect();
        let get = |i: usize| -> Result<f64, TomographyError> {
            fields.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| {
                TomographyError::Csv(format!("row {}: bad value in column {}", k + 2, names[i]))
            })
        };
        points.push((get(ip)?, get(ix)?));
    }
    MarginalDataset::new(points, meta.eta_q)
}

/// Writes `n,P_n,ci_low,ci_high,schema_version`; CI columns are empty
/// without a bootstrap.
pub fn write_fock_csv<W: Write>(
    pops: &[f64],
    ci: Option<&[Interval]>,
    mut out: W,
) -> Result<(), TomographyError> {
    writeln!(out, "n,P_n,ci_low,ci_high,schema_version")?;
    for (n, p) in pops.iter().enumerate() {
        match ci.and_then(|c| c.get(n)) {
            Some(iv) => writeln!(out, "{n},{p:e},{:e},{:e},{SCHEMA_VERSION}", iv.low, iv.high)?,
            None => writeln!(out, "{n},{p:e},,,{SCHEMA_VERSION}")?,
        }
    }
    Ok(())
}
