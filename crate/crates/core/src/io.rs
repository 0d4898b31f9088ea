//! Dataset directories and result files.
//!
//! A dataset directory holds `W.csv` (`2F x P`), `R.csv` (`2F x 3`), optional
//! `S_gt.csv` (`3F x P`) and `labels_gt.csv`, and `meta.json`. Matrices are
//! plain comma-separated rows without a header. Labels are stored one per
//! line, counting from 1.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::solver::{SolveResult, StopReason};
use crate::Matrix;

pub const W_FILE: &str = "W.csv";
pub const R_FILE: &str = "R.csv";
pub const S_GT_FILE: &str = "S_gt.csv";
pub const META_FILE: &str = "meta.json";
pub const LABELS_GT_FILE: &str = "labels_gt.csv";
pub const S_EST_FILE: &str = "S_est.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub frames: usize,
    pub points: usize,
    /// Suggested number of groups.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<usize>,
    /// Suggested subspace dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subspace_dim: Option<usize>,
}

fn require(path: PathBuf, what: &'static str) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingFile { what, path })
    }
}

fn parse_err(path: &Path, msg: impl ToString) -> Error {
    Error::Parse { path: path.to_path_buf(), msg: msg.to_string() }
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, e))?;
    let mut data = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(path, e))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        match ncols {
            None => ncols = Some(rec.len()),
            Some(n) if n != rec.len() => {
                return Err(parse_err(path, format!("row {} has {} fields, expected {n}", nrows + 1, rec.len())))
            }
            _ => {}
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| parse_err(path, format!("'{field}' is not a number")))?;
            data.push(v);
        }
        nrows += 1;
    }
    let ncols = ncols.ok_or_else(|| parse_err(path, "file is empty"))?;
    Ok(DMatrix::from_row_slice(nrows, ncols, &data))
}

/// Writes a matrix with 17 significant digits, enough to read back every
/// `f64` exactly.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::with_capacity(m.len() * 25);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format!("{:.16e}", m[(r, c)]));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| match s.parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v - 1),
            _ => Err(parse_err(path, format!("'{s}' is not a label (labels count from 1)"))),
        })
        .collect()
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let out: String = labels.iter().map(|l| format!("{}\n", l + 1)).collect();
    fs::write(path, out)?;
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<Meta> {
    let path = require(dir.join(META_FILE), "metadata")?;
    serde_json::from_str(&fs::read_to_string(&path)?).map_err(|e| parse_err(&path, e))
}

/// Loads a dataset directory, checking the matrices against `meta.json`.
pub fn load_dataset(dir: &Path) -> Result<(Dataset, Meta)> {
    let meta = read_meta(dir)?;
    let w = read_matrix_csv(&require(dir.join(W_FILE), "measurements")?)?;
    let r = read_matrix_csv(&require(dir.join(R_FILE), "rotations")?)?;
    let gt_path = dir.join(S_GT_FILE);
    let s_gt = if gt_path.is_file() { Some(read_matrix_csv(&gt_path)?) } else { None };
    if w.shape() != (2 * meta.frames, meta.points) {
        return Err(Error::dim(format!(
            "{W_FILE} is {}x{} but {META_FILE} declares {} frames and {} points",
            w.nrows(),
            w.ncols(),
            meta.frames,
            meta.points
        )));
    }
    if r.nrows() != 2 * meta.frames {
        return Err(Error::dim(format!("{R_FILE} has {} rows, expected {}", r.nrows(), 2 * meta.frames)));
    }
    Ok((Dataset::from_stack(w, &r, s_gt)?, meta))
}

/// Ground-truth labels of a dataset directory, if present.
pub fn load_gt_labels(dir: &Path) -> Result<Option<Vec<usize>>> {
    let path = dir.join(LABELS_GT_FILE);
    if path.is_file() {
        read_labels(&path).map(Some)
    } else {
        Ok(None)
    }
}

pub fn save_dataset(dir: &Path, ds: &Dataset, meta: &Meta, labels: Option<&[usize]>) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix_csv(&dir.join(W_FILE), &ds.w)?;
    write_matrix_csv(&dir.join(R_FILE), &ds.rotation_stack())?;
    if let Some(s) = &ds.s_gt {
        write_matrix_csv(&dir.join(S_GT_FILE), s)?;
    }
    if let Some(l) = labels {
        write_labels(&dir.join(LABELS_GT_FILE), l)?;
    }
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(meta)? + "\n")?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct DiagnosticRow {
    iter: usize,
    gap: f64,
    rho: f64,
    reproj: f64,
    #[serde(rename = "nn_Ssharp")]
    nn_s_sharp: f64,
    #[serde(rename = "nn_Z")]
    nn_z: f64,
    objective: f64,
    seconds: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    stop: StopReason,
    iterations: usize,
    beta2: f64,
    records: Vec<DiagnosticRow>,
}

/// Diagnostics as JSON. Wall-clock times are left out unless `timings` is
/// set, so that repeated runs produce identical files.
pub fn diagnostics_json(result: &SolveResult, timings: bool) -> Result<String> {
    let diag = Diagnostics {
        stop: result.stop,
        iterations: result.iterations(),
        beta2: result.beta2,
        records: result
            .records
            .iter()
            .map(|r| DiagnosticRow {
                iter: r.iter,
                gap: r.gap,
                rho: r.rho,
                reproj: r.reproj,
                nn_s_sharp: r.nn_s_sharp,
                nn_z: r.nn_z,
                objective: r.objective,
                seconds: timings.then_some(r.seconds),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&diag)? + "\n")
}

/// Writes `S_est.csv`, `labels.csv` and `diagnostics.json`.
pub fn save_result(dir: &Path, result: &SolveResult, timings: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix_csv(&dir.join(S_EST_FILE), &result.s_est)?;
    write_labels(&dir.join(LABELS_FILE), &result.labels)?;
    fs::write(dir.join(DIAGNOSTICS_FILE), diagnostics_json(result, timings)?)?;
    Ok(())
}
