//! CSV results with JSON sidecars.
//!
//! | file | header |
//! |------|--------|
//! | `sweep.csv` | `method,param,M,fold,metric,std,epochs,diverged` |
//! | `boundary.csv` | `param,metric,is_plateau,is_boundary` |
//! | `bounds.csv` | `M,lambda_1,lambda_sea,gamma_1,gamma_sea,k_lo,k_hi` |
//! | `diversity.csv` | `method,M,param,std,predicted` |
//!
//! Floats are written in shortest round-trip form, so reloading gives back
//! bit-identical values and repeated runs give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::boundary::BoundaryEstimate;
use super::config::Fingerprint;
use super::diversity::DiversityProfile;
use super::run::{RowDetails, SweepResult, SweepRow};
use crate::dataio::Task;
use crate::error::{Error, Result};
use crate::theory::BoundReport;

pub const SWEEP_HEADER: [&str; 8] = [
    "method", "param", "M", "fold", "metric", "std", "epochs", "diverged",
];
pub const BOUNDARY_HEADER: [&str; 4] = ["param", "metric", "is_plateau", "is_boundary"];
pub const BOUNDS_HEADER: [&str; 7] = [
    "M",
    "lambda_1",
    "lambda_sea",
    "gamma_1",
    "gamma_sea",
    "k_lo",
    "k_hi",
];
pub const DIVERSITY_HEADER: [&str; 5] = ["method", "M", "param", "std", "predicted"];

fn write_csv(
    path: &Path,
    header: &[&str],
    records: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for r in records {
        w.write_record(&r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let found = r.headers().map_err(|e| Error::csv(path, e))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("{}: expected header `{}`", path.display(), header.join(",")),
        });
    }
    r.records()
        .map(|rec| rec.map_err(|e| Error::csv(path, e)))
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    line: usize,
    name: &str,
) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse {
            line,
            msg: format!("bad `{name}` value"),
        })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Serialize, Deserialize)]
struct SweepSidecar {
    fingerprint: Fingerprint,
    task: Task,
    rows: Vec<RowDetails>,
}

/// Writes `sweep.csv` and `sweep.json`, rows sorted. Returns the CSV path.
pub fn persist_sweep(result: &SweepResult, dir: &Path) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let mut sorted = result.clone();
    sorted.sort();
    let csv_path = dir.join("sweep.csv");
    write_csv(
        &csv_path,
        &SWEEP_HEADER,
        sorted.rows.iter().map(|r| {
            vec![
                r.method.name().to_string(),
                r.param.to_string(),
                r.m.to_string(),
                r.fold.to_string(),
                r.metric.to_string(),
                r.std.to_string(),
                r.epochs.to_string(),
                r.diverged.to_string(),
            ]
        }),
    )?;
    write_json(
        &dir.join("sweep.json"),
        &SweepSidecar {
            fingerprint: sorted.fingerprint.clone(),
            task: sorted.task,
            rows: sorted.rows.iter().map(|r| r.details.clone()).collect(),
        },
    )?;
    Ok(csv_path)
}

pub fn load_sweep(dir: &Path) -> Result<SweepResult> {
    let records = read_csv(&dir.join("sweep.csv"), &SWEEP_HEADER)?;
    let sidecar: SweepSidecar = read_json(&dir.join("sweep.json"))?;
    if sidecar.rows.len() != records.len() {
        return Err(Error::dim("sweep.csv and sweep.json disagree on row count"));
    }
    let rows = records
        .iter()
        .zip(sidecar.rows)
        .enumerate()
        .map(|(n, (rec, details))| {
            let line = n + 2;
            Ok(SweepRow {
                method: field(rec, 0, line, "method")?,
                param: field(rec, 1, line, "param")?,
                m: field(rec, 2, line, "M")?,
                fold: field(rec, 3, line, "fold")?,
                metric: field(rec, 4, line, "metric")?,
                std: field(rec, 5, line, "std")?,
                epochs: field(rec, 6, line, "epochs")?,
                diverged: field(rec, 7, line, "diverged")?,
                details,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        task: sidecar.task,
        fingerprint: sidecar.fingerprint,
        rows,
    })
}

#[derive(Serialize, Deserialize)]
struct BoundarySidecar {
    fingerprint: Fingerprint,
    estimate: BoundaryEstimate,
}

/// Writes `boundary.csv` and `boundary.json`.
pub fn persist_boundary(
    est: &BoundaryEstimate,
    fingerprint: &Fingerprint,
    dir: &Path,
) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join("boundary.csv");
    write_csv(
        &path,
        &BOUNDARY_HEADER,
        est.curve.iter().enumerate().map(|(i, (p, v))| {
            vec![
                p.to_string(),
                v.to_string(),
                est.is_plateau(i).to_string(),
                est.is_boundary(i).to_string(),
            ]
        }),
    )?;
    write_json(
        &dir.join("boundary.json"),
        &BoundarySidecar {
            fingerprint: fingerprint.clone(),
            estimate: est.clone(),
        },
    )?;
    Ok(path)
}

pub fn load_boundary(dir: &Path) -> Result<(BoundaryEstimate, Fingerprint)> {
    let sidecar: BoundarySidecar = read_json(&dir.join("boundary.json"))?;
    let records = read_csv(&dir.join("boundary.csv"), &BOUNDARY_HEADER)?;
    let curve = records
        .iter()
        .enumerate()
        .map(|(n, rec)| {
            Ok((
                field(rec, 0, n + 2, "param")?,
                field(rec, 1, n + 2, "metric")?,
            ))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    if curve != sidecar.estimate.curve {
        return Err(Error::invalid("boundary.csv and boundary.json disagree"));
    }
    Ok((sidecar.estimate, sidecar.fingerprint))
}

/// Writes `bounds.csv`, one row per ensemble size.
pub fn persist_bounds(reports: &[BoundReport], dir: &Path) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join("bounds.csv");
    write_csv(
        &path,
        &BOUNDS_HEADER,
        reports.iter().map(|r| {
            vec![
                r.m.to_string(),
                r.ncl_lambda_hessian.to_string(),
                r.ncl_lambda_sea.to_string(),
                r.nclstar_gamma_hessian.to_string(),
                r.nclstar_gamma_sea.to_string(),
                r.sea_k_interval.lo.to_string(),
                r.sea_k_interval.hi.to_string(),
            ]
        }),
    )?;
    Ok(path)
}

#[derive(Serialize, Deserialize)]
struct DiversitySidecar {
    fingerprint: Fingerprint,
    profiles: Vec<DiversityProfile>,
}

/// Writes `diversity.csv` and `diversity.json`.
pub fn persist_diversity(
    profiles: &[DiversityProfile],
    fingerprint: &Fingerprint,
    dir: &Path,
) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join("diversity.csv");
    write_csv(
        &path,
        &DIVERSITY_HEADER,
        profiles.iter().flat_map(|p| {
            (0..p.grid.len()).map(move |i| {
                vec![
                    p.method.name().to_string(),
                    p.m.to_string(),
                    p.grid[i].to_string(),
                    p.std[i].to_string(),
                    p.prediction.predicted[i].to_string(),
                ]
            })
        }),
    )?;
    write_json(
        &dir.join("diversity.json"),
        &DiversitySidecar {
            fingerprint: fingerprint.clone(),
            profiles: profiles.to_vec(),
        },
    )?;
    Ok(path)
}

pub fn load_diversity(dir: &Path) -> Result<(Vec<DiversityProfile>, Fingerprint)> {
    let sidecar: DiversitySidecar = read_json(&dir.join("diversity.json"))?;
    Ok((sidecar.profiles, sidecar.fingerprint))
}
