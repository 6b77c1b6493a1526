//! File formats: trajectory CSV with a JSON sidecar, and JSON documents.

use std::fs;
use std::path::{Path, PathBuf};

use hnko_core::systems::{SystemSpec, Trajectory};
use hnko_core::Matrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Metadata written next to every trajectory CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub dt: f64,
    pub t0: f64,
    pub samples: usize,
    pub dim: usize,
    #[serde(default)]
    pub system: Option<SystemSpec>,
    /// Free-form provenance, e.g. noise settings or the producing model.
    #[serde(default)]
    pub source: serde_json::Value,
}

/// `traj.csv` -> `traj.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trajectory(path: &Path, traj: &Trajectory, meta_system: Option<&SystemSpec>, source: serde_json::Value) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let mut header = vec!["t".to_string()];
    header.extend((0..traj.dim()).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    for k in 0..traj.len() {
        let mut row = vec![fmt_f64(traj.time(k))];
        row.extend(traj.state(k).iter().map(|x| fmt_f64(*x)));
        w.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    let meta = TrajectoryMeta {
        dt: traj.dt(),
        t0: traj.t0(),
        samples: traj.len(),
        dim: traj.dim(),
        system: meta_system.cloned(),
        source,
    };
    write_json(&sidecar_path(path), &meta)
}

/// Reads a trajectory CSV. The sidecar supplies `dt`; without one, `dt` is
/// taken from the first two time stamps.
pub fn read_trajectory(path: &Path) -> Result<(Trajectory, Option<TrajectoryMeta>), CliError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    let headers = r.headers().map_err(|e| CliError::csv(path, e))?.clone();
    if headers.get(0) != Some("t") || headers.len() < 2 {
        return Err(CliError::malformed(path, Some(1), None, "header must be t,x0,x1,..."));
    }
    let dim = headers.len() - 1;
    let mut times = Vec::new();
    let mut data = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::csv(path, e))?;
        let line = rec.position().map(|p| p.line());
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::malformed(path, line, Some(j + 1), &format!("not a number: '{field}'"))
            })?;
            if j == 0 {
                times.push(v);
            } else {
                data.push(v);
            }
        }
    }
    if times.is_empty() {
        return Err(CliError::malformed(path, None, None, "trajectory has no samples"));
    }
    let side = sidecar_path(path);
    let meta: Option<TrajectoryMeta> = if side.exists() { Some(read_json(&side)?) } else { None };
    let dt = match (&meta, times.len()) {
        (Some(m), _) => m.dt,
        (None, n) if n >= 2 => times[1] - times[0],
        _ => return Err(CliError::malformed(path, None, None, "single-sample trajectory needs a sidecar with dt")),
    };
    let states = Matrix::new(times.len(), dim, data).map_err(CliError::Core)?;
    let traj = Trajectory::new(dt, times[0], states).map_err(CliError::Core)?;
    Ok((traj, meta))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::malformed(path, Some(e.line() as u64), Some(e.column()), &e.to_string()))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Writes a CSV with a header and numeric rows.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|x| fmt_f64(*x))).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
