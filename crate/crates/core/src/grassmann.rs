//! Subspaces as points on a Grassmann manifold, the projection embedding and
//! the similarity graph built from it.

use nalgebra::{DMatrix, DVector};

use crate::data::OrderingVector;
use crate::error::{Error, Result};
use crate::linalg::{self, select_columns};
use crate::{Matrix, Vector};

const ORTHONORMAL_TOL: f64 = 1e-8;

/// Orthonormal `d x p` basis standing for its column span.
#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannPoint {
    basis: Matrix,
}

impl GrassmannPoint {
    pub fn new(basis: Matrix) -> Result<Self> {
        if basis.ncols() == 0 || basis.ncols() > basis.nrows() {
            return Err(Error::dim(format!(
                "a Grassmann basis must satisfy 0 < p <= d, got {}x{}",
                basis.nrows(),
                basis.ncols()
            )));
        }
        let err = linalg::orthonormality_error(&basis);
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidInput(format!("basis is not orthonormal (error {err:.3e})")));
        }
        Ok(GrassmannPoint { basis })
    }

    pub(crate) fn new_unchecked(basis: Matrix) -> Self {
        GrassmannPoint { basis }
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Rank-`p` factors of one group of trajectories: `X ~ Phi diag(sigma) V^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFactors {
    pub point: GrassmannPoint,
    pub sigma: Vector,
    pub right: Matrix,
}

impl BlockFactors {
    pub fn reconstruct(&self) -> Matrix {
        self.point.basis() * DMatrix::from_diagonal(&self.sigma) * self.right.transpose()
    }
}

pub fn grassmann_from_block(block: &Matrix, p: usize) -> Result<BlockFactors> {
    let (d, n) = block.shape();
    if p == 0 || p > d.min(n) {
        return Err(Error::InvalidInput(format!(
            "subspace dimension {p} not in 1..={} for a {d}x{n} block",
            d.min(n)
        )));
    }
    let dec = linalg::svd(block)?;
    Ok(BlockFactors {
        point: GrassmannPoint::new_unchecked(dec.u.columns(0, p).into_owned()),
        sigma: dec.sigma.rows(0, p).into_owned(),
        right: dec.v.columns(0, p).into_owned(),
    })
}

/// `Pi(Phi) = Phi Phi^T`.
pub fn embed(point: &GrassmannPoint) -> Matrix {
    point.basis() * point.basis().transpose()
}

/// Squared projection distance `0.5 ||Pi_1 - Pi_2||_F^2`.
pub fn proj_distance_sq(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<f64> {
    if a.ambient_dim() != b.ambient_dim() || a.dim() != b.dim() {
        return Err(Error::dim(format!(
            "points on different Grassmannians ({}x{} vs {}x{})",
            a.ambient_dim(),
            a.dim(),
            b.ambient_dim(),
            b.dim()
        )));
    }
    Ok(0.5 * (embed(a) - embed(b)).norm_squared())
}

/// Same quantity through the overlap `0.5 (p1 + p2) - ||Phi_1^T Phi_2||_F^2`,
/// which also covers bases of different dimension.
pub fn overlap_distance_sq(a: &GrassmannPoint, b: &GrassmannPoint) -> f64 {
    let overlap = (a.basis().transpose() * b.basis()).norm_squared();
    (0.5 * (a.dim() + b.dim()) as f64 - overlap).max(0.0)
}

/// Principal angles in radians, ascending.
pub fn principal_angles(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<Vec<f64>> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::dim("principal angles need a common ambient space"));
    }
    let m = a.basis().transpose() * b.basis();
    let mut ang: Vec<f64> = linalg::svd(&m)?.sigma.iter().map(|c| c.clamp(-1.0, 1.0).acos()).collect();
    ang.sort_by(f64::total_cmp);
    Ok(ang)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    /// `w_ij = exp(-d_g^2)`, symmetric with unit diagonal.
    pub weights: Matrix,
    /// `lambda_ii = sum_j w_ij`.
    pub degrees: Vector,
}

pub fn similarity_graph(points: &[GrassmannPoint]) -> Result<SimilarityGraph> {
    let k = points.len();
    if k == 0 {
        return Err(Error::InvalidInput("similarity graph of no subspaces".into()));
    }
    let d = points[0].ambient_dim();
    if points.iter().any(|pt| pt.ambient_dim() != d) {
        return Err(Error::dim("subspaces live in different ambient spaces"));
    }
    let mut weights = DMatrix::identity(k, k);
    for i in 0..k {
        for j in i + 1..k {
            let w = (-overlap_distance_sq(&points[i], &points[j])).exp();
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
    }
    let degrees = DVector::from_fn(k, |i, _| weights.row(i).sum());
    Ok(SimilarityGraph { weights, degrees })
}

/// Per-group subspaces of the current shape.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupDecomposition {
    pub factors: Vec<BlockFactors>,
    /// Column indices (current order) of each group.
    pub members: Vec<Vec<usize>>,
}

impl GroupDecomposition {
    pub fn points(&self) -> Vec<GrassmannPoint> {
        self.factors.iter().map(|f| f.point.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }
}

/// Top-`p` subspace of every group. Groups with fewer than `p` members get
/// one dimension per member.
pub fn decompose_groups(s: &Matrix, order: &OrderingVector, p: usize) -> Result<GroupDecomposition> {
    if order.len() != s.ncols() {
        return Err(Error::dim(format!("{} labels for {} trajectories", order.len(), s.ncols())));
    }
    let members = order.members();
    let mut factors = Vec::with_capacity(members.len());
    for (g, cols) in members.iter().enumerate() {
        if cols.is_empty() {
            return Err(Error::InvalidInput(format!("group {g} is empty")));
        }
        let block = select_columns(s, cols);
        let p_eff = p.min(cols.len()).min(s.nrows());
        factors.push(grassmann_from_block(&block, p_eff)?);
    }
    Ok(GroupDecomposition { factors, members })
}

/// Writes each group's low-rank reconstruction into a `nrows x ncols` matrix.
pub fn reconstruct_groups(groups: &GroupDecomposition, nrows: usize, ncols: usize) -> Matrix {
    let mut s = DMatrix::zeros(nrows, ncols);
    for (f, cols) in groups.factors.iter().zip(&groups.members) {
        let block = f.reconstruct();
        for (k, &j) in cols.iter().enumerate() {
            s.set_column(j, &block.column(k));
        }
    }
    s
}
