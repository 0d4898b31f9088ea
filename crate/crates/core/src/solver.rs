//! Joint estimation of shape, grouping and self-representation by ADMM.
//!
//! One iteration:
//!
//! 1. shape update from the camera equations and the low-rank copy `S#`
//! 2. columns sorted by group, rank-`p` subspace of each group
//! 3. similarity graph, projection `Delta`, kernel `Gamma`
//! 4. coefficient update and regrouping
//! 5. shape replaced by its per-group low-rank reconstruction
//! 6. singular value thresholding of `S#` and `Z`, multiplier ascent
//! 7. penalty growth `rho <- min(rho_max, c rho)` and the stopping test

use std::time::Instant;

use nalgebra::{DMatrix, Matrix2x3, Matrix3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    kernel_matrix, kmeans_pp_init, spectral_cluster, subspace_reassign, svt_with_norm, update_coefficients,
    CouplingState, KernelMatrix,
};
use crate::data::{reshuffle, reshuffle_inv, restore_columns, Dataset, OrderingVector, ShapeState};
use crate::error::{Error, Result};
use crate::grassmann::{decompose_groups, reconstruct_groups, similarity_graph, GroupDecomposition};
use crate::linalg::{max_abs, nuclear_norm};
use crate::lowdim::{fit_projection, initial_projection, project_with, LowDimSet, ProjectionMap};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Weight of the self-representation term.
    pub beta1: f64,
    /// Nuclear-norm weight on `S#`; `None` selects [`default_beta2`].
    pub beta2: Option<f64>,
    /// Nuclear-norm weight on `Z`.
    pub beta3: f64,
    pub rho0: f64,
    pub rho_max: f64,
    /// Stopping tolerance on the primal gap.
    pub eps: f64,
    /// Penalty growth factor.
    pub growth: f64,
    /// Number of groups.
    pub k: usize,
    /// Dimension of each group subspace.
    pub p: usize,
    /// Projection dimension; `None` selects `max(2p, 12)`.
    pub d_tilde: Option<usize>,
    pub max_iter: usize,
    pub seed: u64,
    /// Refit `Delta` every this many iterations.
    pub projection_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            beta1: 1.0,
            beta2: None,
            beta3: 0.1,
            rho0: 1e-2,
            rho_max: 1e8,
            eps: 1e-10,
            growth: 1.1,
            k: 6,
            p: 3,
            d_tilde: None,
            max_iter: 300,
            seed: 0,
            projection_stride: 1,
        }
    }
}

/// Half the root-mean-square of the measurements. The nuclear-norm weight
/// has to follow the scale of the data for the shrinkage to mean the same
/// thing on every sequence.
pub fn default_beta2(w: &Matrix) -> f64 {
    let m = max_abs(w);
    if m == 0.0 || !m.is_finite() {
        return 0.0;
    }
    0.5 * m * ((w / m).norm_squared() / w.len() as f64).sqrt()
}

pub fn default_d_tilde(p: usize, frames: usize) -> usize {
    (2 * p).max(12).min(3 * frames)
}

impl SolverConfig {
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        let (f, n) = (ds.frames(), ds.points());
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.k == 0 || self.k > n {
            return bad(format!("K = {} must lie in 1..={n}", self.k));
        }
        if self.p == 0 || self.p > 3 * f {
            return bad(format!("p = {} must lie in 1..={}", self.p, 3 * f));
        }
        if let Some(d) = self.d_tilde {
            if d < self.p || d > 3 * f {
                return bad(format!("d_tilde = {d} must lie in {}..={}", self.p, 3 * f));
            }
        }
        if !(self.beta1 >= 0.0 && self.beta3 >= 0.0 && self.beta2.is_none_or(|b| b >= 0.0)) {
            return bad("regularisation weights must be non-negative".into());
        }
        if !(self.rho0 > 0.0 && self.rho_max >= self.rho0) {
            return bad(format!("need 0 < rho0 <= rho_max, got {} and {}", self.rho0, self.rho_max));
        }
        if !(self.growth >= 1.0) {
            return bad(format!("penalty growth must be >= 1, got {}", self.growth));
        }
        if !(self.eps > 0.0) || self.max_iter == 0 || self.projection_stride == 0 {
            return bad("eps, max_iter and projection_stride must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    RhoExceeded,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub gap: f64,
    /// Penalty used during this iteration.
    pub rho: f64,
    /// `||W - R S||_F`.
    pub reproj: f64,
    #[serde(rename = "nn_Ssharp")]
    pub nn_s_sharp: f64,
    #[serde(rename = "nn_Z")]
    pub nn_z: f64,
    pub objective: f64,
    /// Wall time since the solver started.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// `3F x P` shape in the original column order.
    pub s_est: Matrix,
    /// Final labels in the original column order.
    pub labels: Vec<usize>,
    /// k-means++ labels the solver started from, original order.
    pub init_labels: Vec<usize>,
    /// Final labels with the permutation history.
    pub order: OrderingVector,
    pub records: Vec<IterRecord>,
    pub stop: StopReason,
    pub beta2: f64,
}

impl SolveResult {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

/// Per-frame solve of `(R^T R + rho I) S = rho f^-1(S#) + f^-1(L1) + R^T W`.
pub fn update_shape(rot: &[Matrix2x3<f64>], w: &Matrix, s_sharp: &Matrix, l1: &Matrix, rho: f64) -> Result<Matrix> {
    let f = rot.len();
    let n = w.ncols();
    if w.nrows() != 2 * f || s_sharp.shape() != (3 * n, f) || l1.shape() != (3 * n, f) {
        return Err(Error::dim(format!(
            "W {}x{}, S# {}x{}, L1 {}x{} for {f} frames",
            w.nrows(),
            w.ncols(),
            s_sharp.nrows(),
            s_sharp.ncols(),
            l1.nrows(),
            l1.ncols()
        )));
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidInput("penalty must be positive".into()));
    }
    let prior = reshuffle_inv(&(s_sharp * rho + l1))?;
    let mut s = DMatrix::zeros(3 * f, n);
    for (fi, r) in rot.iter().enumerate() {
        let a = r.transpose() * r + Matrix3::identity() * rho;
        let inv = a
            .cholesky()
            .ok_or_else(|| Error::Numerical(format!("frame {fi} system is singular")))?
            .inverse();
        let rhs = prior.rows(3 * fi, 3) + r.transpose() * w.rows(2 * fi, 2);
        s.rows_mut(3 * fi, 3).copy_from(&(inv * rhs));
    }
    Ok(s)
}

/// `S = pinv(R) W`, frame by frame.
pub fn initial_shape(ds: &Dataset) -> Result<Matrix> {
    let mut s = DMatrix::zeros(3 * ds.frames(), ds.points());
    for (f, r) in ds.rotations.iter().enumerate() {
        let pinv = r
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Numerical(format!("pseudo-inverse of frame {f}: {e}")))?;
        s.rows_mut(3 * f, 3).copy_from(&(pinv * ds.w.rows(2 * f, 2)));
    }
    Ok(s)
}

/// Augmented Lagrangian at the given state.
#[allow(clippy::too_many_arguments)]
pub fn objective_value(
    rot: &[Matrix2x3<f64>],
    w: &Matrix,
    shape: &ShapeState,
    coupling: &CouplingState,
    gamma: &Matrix,
    beta1: f64,
    beta2: f64,
    beta3: f64,
) -> Result<f64> {
    let norms = (nuclear_norm(&shape.s_sharp), nuclear_norm(&coupling.z));
    lagrangian(rot, w, shape, coupling, gamma, (beta1, beta2, beta3), norms)
}

fn lagrangian(
    rot: &[Matrix2x3<f64>],
    w: &Matrix,
    shape: &ShapeState,
    coupling: &CouplingState,
    gamma: &Matrix,
    (beta1, beta2, beta3): (f64, f64, f64),
    (nn_s, nn_z): (f64, f64),
) -> Result<f64> {
    let rho = coupling.rho;
    let reproj = reprojection(rot, w, &shape.s);
    let k = coupling.c.nrows();
    let ic = DMatrix::identity(k, k) - &coupling.c;
    let selfrep = (ic.transpose() * gamma * &ic).trace();
    let r1 = &shape.s_sharp - reshuffle(&shape.s)?;
    let r2 = &coupling.c - &coupling.z;
    Ok(0.5 * reproj * reproj
        + beta1 * selfrep
        + beta2 * nn_s
        + beta3 * nn_z
        + shape.l1.dot(&r1)
        + 0.5 * rho * r1.norm_squared()
        + coupling.l2.dot(&r2)
        + 0.5 * rho * r2.norm_squared())
}

/// `||W - R S||_F`.
pub fn reprojection(rot: &[Matrix2x3<f64>], w: &Matrix, s: &Matrix) -> f64 {
    let mut acc = 0.0;
    for (f, r) in rot.iter().enumerate() {
        acc += (w.rows(2 * f, 2) - r * s.rows(3 * f, 3)).norm_squared();
    }
    acc.sqrt()
}

/// Iteration state of the solver; use [`Solver::step`] to advance it or
/// [`admm_solve`] to run it to the end.
pub struct Solver<'a> {
    ds: &'a Dataset,
    cfg: SolverConfig,
    beta2: f64,
    d_tilde: usize,
    w: Matrix,
    shape: ShapeState,
    coupling: CouplingState,
    order: OrderingVector,
    projection: ProjectionMap,
    lowdim: Option<LowDimSet>,
    kernel: Option<KernelMatrix>,
    groups: Option<GroupDecomposition>,
    init_labels: Vec<usize>,
    rng: ChaCha8Rng,
    records: Vec<IterRecord>,
    stop: Option<StopReason>,
    start: Instant,
}

impl<'a> Solver<'a> {
    pub fn new(ds: &'a Dataset, cfg: SolverConfig) -> Result<Self> {
        ds.validate()?;
        cfg.validate(ds)?;
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let s0 = initial_shape(ds)?;
        let order = kmeans_pp_init(&s0, cfg.k, &mut rng)?;
        let d_tilde = cfg.d_tilde.unwrap_or_else(|| default_d_tilde(cfg.p, ds.frames()));
        let projection = initial_projection(3 * ds.frames(), d_tilde, &mut rng)?;
        let beta2 = cfg.beta2.unwrap_or_else(|| default_beta2(&ds.w));
        Ok(Solver {
            ds,
            beta2,
            d_tilde,
            w: ds.w.clone(),
            shape: ShapeState::from_shape(s0)?,
            coupling: CouplingState::zeros(cfg.k, cfg.rho0),
            init_labels: order.labels.clone(),
            order,
            projection,
            lowdim: None,
            kernel: None,
            groups: None,
            rng,
            records: Vec::new(),
            stop: None,
            start,
            cfg,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn beta2(&self) -> f64 {
        self.beta2
    }

    /// Measurements in the current column order.
    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn shape(&self) -> &ShapeState {
        &self.shape
    }

    pub fn coupling(&self) -> &CouplingState {
        &self.coupling
    }

    pub fn order(&self) -> &OrderingVector {
        &self.order
    }

    pub fn projection(&self) -> &ProjectionMap {
        &self.projection
    }

    pub fn lowdim(&self) -> Option<&LowDimSet> {
        self.lowdim.as_ref()
    }

    pub fn kernel(&self) -> Option<&KernelMatrix> {
        self.kernel.as_ref()
    }

    pub fn groups(&self) -> Option<&GroupDecomposition> {
        self.groups.as_ref()
    }

    pub fn records(&self) -> &[IterRecord] {
        &self.records
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop
    }

    /// One full iteration. Returns the stop reason once the loop is over.
    pub fn step(&mut self) -> Result<Option<StopReason>> {
        if self.stop.is_some() {
            return Ok(self.stop);
        }
        let (f, n) = (self.ds.frames(), self.ds.points());
        let rho = self.coupling.rho;
        let it = self.records.len();
        let rot = &self.ds.rotations;

        self.shape.s = update_shape(rot, &self.w, &self.shape.s_sharp, &self.shape.l1, rho)?;

        let perm = self.order.arrange();
        if perm.0.iter().enumerate().any(|(i, &j)| i != j) {
            self.w = perm.apply_columns(&self.w);
            self.shape.permute(&perm);
        }
        let groups = decompose_groups(&self.shape.s, &self.order, self.cfg.p)?;
        let points = groups.points();
        let graph = similarity_graph(&points)?;

        if it % self.cfg.projection_stride == 0 {
            let prev = self.lowdim.as_ref().map(LowDimSet::omegas).filter(|om| {
                om.len() == points.len() && om.iter().zip(&points).all(|(o, p)| o.ncols() == p.dim())
            });
            self.projection = fit_projection(&points, &graph, self.d_tilde, prev.as_deref())?;
        }
        let lowdim = project_with(&points, &self.projection)?;
        let kernel = kernel_matrix(&lowdim)?;
        self.coupling.c = update_coefficients(&kernel, &self.coupling, self.cfg.beta1)?;

        let spectral =
            spectral_cluster(&lowdim, &self.coupling.c, &self.order, self.cfg.k, &self.shape.s, &mut self.rng)?;
        let regrouped = subspace_reassign(&self.shape.s, &spectral, self.cfg.p, &mut self.rng)?;

        self.shape.s = reconstruct_groups(&groups, 3 * f, n);
        self.order.labels = regrouped.labels;

        let fs = reshuffle(&self.shape.s)?;
        let (s_sharp, nn_s) = svt_with_norm(&(&fs - &self.shape.l1 / rho), self.beta2 / rho)?;
        let (z, nn_z) = svt_with_norm(&(&self.coupling.c + &self.coupling.l2 / rho), self.cfg.beta3 / rho)?;
        let r1 = &s_sharp - &fs;
        let r2 = &self.coupling.c - &z;
        self.shape.l1 += &r1 * rho;
        self.coupling.l2 += &r2 * rho;
        self.shape.s_sharp = s_sharp;
        self.coupling.z = z;
        let gap = max_abs(&r1).max(max_abs(&r2));
        let reproj = reprojection(rot, &self.w, &self.shape.s);
        if !gap.is_finite() || !reproj.is_finite() {
            return Err(Error::Numerical(format!("iterates overflowed at iteration {it}")));
        }
        let objective = lagrangian(
            rot,
            &self.w,
            &self.shape,
            &self.coupling,
            &kernel.gamma,
            (self.cfg.beta1, self.beta2, self.cfg.beta3),
            (nn_s, nn_z),
        )?;
        self.records.push(IterRecord {
            iter: it,
            gap,
            rho,
            reproj,
            nn_s_sharp: nn_s,
            nn_z,
            objective,
            seconds: self.start.elapsed().as_secs_f64(),
        });

        let next_rho = self.cfg.rho_max.min(self.cfg.growth * rho);
        self.coupling.rho = next_rho;
        self.groups = Some(groups);
        self.lowdim = Some(lowdim);
        self.kernel = Some(kernel);

        self.stop = if gap < self.cfg.eps {
            Some(StopReason::Converged)
        } else if next_rho > self.cfg.rho_max {
            Some(StopReason::RhoExceeded)
        } else if it + 1 >= self.cfg.max_iter {
            Some(StopReason::MaxIter)
        } else {
            None
        };
        Ok(self.stop)
    }

    pub fn run(mut self) -> Result<SolveResult> {
        while self.step()?.is_none() {}
        Ok(self.finish())
    }

    /// Result for the current state, whether or not the loop has ended.
    pub fn finish(self) -> SolveResult {
        let s_est = restore_columns(&self.shape.s, &self.order.history);
        SolveResult {
            s_est,
            labels: self.order.labels_original_order(),
            init_labels: self.init_labels,
            stop: self.stop.unwrap_or(StopReason::MaxIter),
            records: self.records,
            beta2: self.beta2,
            order: self.order,
        }
    }
}

pub fn admm_solve(ds: &Dataset, cfg: &SolverConfig) -> Result<SolveResult> {
    Solver::new(ds, cfg.clone())?.run()
}
