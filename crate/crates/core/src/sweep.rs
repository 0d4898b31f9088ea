//! Reconstruction error as a function of measurement noise.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::e3d;
use crate::solver::{admm_solve, SolverConfig};
use crate::synth::noisy_dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub seed: u64,
    pub e3d: f64,
    pub iters: usize,
    pub seconds: f64,
}

/// Solves every `(lambda, seed)` pair, the seed driving the noise draw.
/// Rows come back sorted by noise level, then seed; runs execute in
/// parallel on the current rayon pool.
pub fn noise_sweep(ds: &Dataset, cfg: &SolverConfig, lambdas: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let gt = ds.s_gt.as_ref().ok_or_else(|| Error::InvalidInput("noise sweep needs a ground-truth shape".into()))?;
    if lambdas.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidInput("noise sweep needs at least one level and one seed".into()));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidInput(format!("noise level {l} is not a finite non-negative number")));
    }
    let mut levels = lambdas.to_vec();
    levels.sort_by(f64::total_cmp);
    let jobs: Vec<(f64, u64)> = levels.iter().flat_map(|&l| seeds.iter().map(move |&s| (l, s))).collect();
    // Without noise the seed changes nothing, so one solve serves every seed.
    let unique: Vec<(f64, u64)> = jobs.iter().copied().filter(|&(l, s)| l > 0.0 || s == seeds[0]).collect();
    let solved: Vec<SweepRow> = unique
        .par_iter()
        .map(|&(lambda, seed)| {
            let start = Instant::now();
            let noisy = noisy_dataset(ds, lambda, seed)?;
            let res = admm_solve(&noisy, cfg)?;
            let err = e3d(&res.s_est, gt, &[])?.e3d;
            Ok(SweepRow { lambda, seed, e3d: err, iters: res.iterations(), seconds: start.elapsed().as_secs_f64() })
        })
        .collect::<Result<_>>()?;
    Ok(jobs
        .iter()
        .map(|&(lambda, seed)| {
            let key = if lambda > 0.0 { seed } else { seeds[0] };
            let row = solved.iter().find(|r| r.lambda == lambda && r.seed == key).expect("solved above");
            SweepRow { seed, ..row.clone() }
        })
        .collect())
}

/// Mean error per noise level, in the order the levels appear in `rows`.
pub fn mean_by_lambda(rows: &[SweepRow]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(l, _, _)| *l == r.lambda) {
            Some(entry) => {
                entry.1 += r.e3d;
                entry.2 += 1;
            }
            None => out.push((r.lambda, r.e3d, 1)),
        }
    }
    out.into_iter().map(|(l, s, n)| (l, s / n as f64)).collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = String::from("lambda_g,seed,e3d,iters,seconds\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.16e},{},{:.3}\n", r.lambda, r.seed, r.e3d, r.iters, r.seconds));
    }
    fs::write(path, out)?;
    Ok(())
}
