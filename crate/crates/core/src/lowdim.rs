//! Learned linear map `Delta` taking the `3F`-dimensional subspaces to a
//! `d~`-dimensional space where their similarity structure is preserved.
//!
//! `Delta` comes from the generalised eigenproblem `A v = mu B v` with
//!
//! ```text
//! A = sum_{i<j} w_ij M_ij M_ij^T,   M_ij = Omega_i Omega_i^T - Omega_j Omega_j^T
//! B = sum_i lambda_ii Omega_i Omega_i^T
//! ```
//!
//! `B` has rank at most `sum_i p_i`, usually far below `3F`. Directions in its
//! null space carry no information about the subspaces but would win the
//! smallest-eigenvalue race, so the problem is solved on `range(B)` only and
//! `d~` is capped at that rank.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grassmann::{GrassmannPoint, SimilarityGraph};
use crate::linalg;
use crate::{Matrix, Vector};

/// Relative jitter added to `B`, scaled by `trace(B) / d`.
pub const B_JITTER: f64 = 1e-8;
/// Eigenvalues of `B` below this fraction of the largest count as null.
const RANGE_TOL: f64 = 1e-10;
/// Relative pivot size below which a QR factor counts as rank deficient.
const COLLAPSE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMap {
    /// `d x d~` projection.
    pub delta: Matrix,
    /// Generalised eigenvalues of the retained directions, ascending.
    pub eigenvalues: Vector,
    /// Jitter that was added to `B`.
    pub jitter: f64,
}

impl ProjectionMap {
    pub fn ambient_dim(&self) -> usize {
        self.delta.nrows()
    }

    pub fn dim(&self) -> usize {
        self.delta.ncols()
    }
}

/// `[I; 0.01 N(0,1)]`.
pub fn initial_projection<R: Rng + ?Sized>(d: usize, d_tilde: usize, rng: &mut R) -> Result<ProjectionMap> {
    if d_tilde == 0 || d_tilde > d {
        return Err(Error::InvalidInput(format!("projection dimension {d_tilde} not in 1..={d}")));
    }
    let mut delta = DMatrix::zeros(d, d_tilde);
    for r in 0..d {
        for c in 0..d_tilde {
            delta[(r, c)] = if r < d_tilde {
                if r == c { 1.0 } else { 0.0 }
            } else {
                let z: f64 = StandardNormal.sample(rng);
                1e-2 * z
            };
        }
    }
    Ok(ProjectionMap { delta, eigenvalues: Vector::zeros(d_tilde), jitter: 0.0 })
}

/// Image of one subspace: `Delta^T Phi = Theta U` with `Omega = Phi U^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowDimPoint {
    pub theta: GrassmannPoint,
    /// Upper triangular with positive diagonal.
    pub u: Matrix,
    pub omega: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowDimSet {
    pub points: Vec<LowDimPoint>,
    /// Groups whose image lost rank and were shrunk.
    pub collapsed: Vec<usize>,
}

impl LowDimSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn thetas(&self) -> Vec<&Matrix> {
        self.points.iter().map(|p| p.theta.basis()).collect()
    }

    pub fn omegas(&self) -> Vec<Matrix> {
        self.points.iter().map(|p| p.omega.clone()).collect()
    }
}

fn qr_positive(m: Matrix) -> (Matrix, Matrix) {
    let qr = m.qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for k in 0..r.nrows() {
        if r[(k, k)] < 0.0 {
            r.row_mut(k).neg_mut();
            q.column_mut(k).neg_mut();
        }
    }
    (q, r)
}

/// Solves `Omega U = Phi` for upper triangular `U`.
fn right_divide_upper(phi: &Matrix, u: &Matrix) -> Result<Matrix> {
    u.transpose()
        .solve_lower_triangular(&phi.transpose())
        .map(|t| t.transpose())
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))
}

pub fn project_point(phi: &GrassmannPoint, map: &ProjectionMap) -> Result<LowDimPoint> {
    if phi.ambient_dim() != map.ambient_dim() {
        return Err(Error::dim(format!(
            "subspace in R^{} but projection from R^{}",
            phi.ambient_dim(),
            map.ambient_dim()
        )));
    }
    let p = phi.dim();
    if p > map.dim() {
        return Err(Error::dim(format!("{p}-dimensional subspace cannot fit in R^{}", map.dim())));
    }
    let (q, r) = qr_positive(map.delta.transpose() * phi.basis());
    let diag_max = (0..p).map(|k| r[(k, k)]).fold(0.0, f64::max);
    let rank = (0..p).filter(|&k| r[(k, k)] > COLLAPSE_TOL * diag_max).count();
    if rank < p || diag_max == 0.0 {
        return Err(Error::ProjectionCollapse { group: 0, rank, dim: p });
    }
    let omega = right_divide_upper(phi.basis(), &r)?;
    Ok(LowDimPoint { theta: GrassmannPoint::new_unchecked(q), u: r, omega })
}

/// Keeps the `r` well-conditioned directions of a collapsed image.
fn project_point_shrunk(phi: &GrassmannPoint, map: &ProjectionMap) -> Result<LowDimPoint> {
    let img = map.delta.transpose() * phi.basis();
    let dec = linalg::svd(&img)?;
    let smax = dec.sigma[0];
    let rank = dec.sigma.iter().filter(|&&s| s > COLLAPSE_TOL * smax).count();
    if rank == 0 {
        return Err(Error::Numerical("projection annihilates a subspace".into()));
    }
    let vr = dec.v.columns(0, rank).into_owned();
    let (q, r) = qr_positive(&img * &vr);
    let omega = right_divide_upper(&(phi.basis() * &vr), &r)?;
    Ok(LowDimPoint { theta: GrassmannPoint::new_unchecked(q), u: r, omega })
}

/// The pencil `(A, B)` before jitter.
pub fn pencil(omegas: &[Matrix], graph: &SimilarityGraph) -> Result<(Matrix, Matrix)> {
    let k = omegas.len();
    if k == 0 || graph.weights.nrows() != k {
        return Err(Error::dim(format!(
            "{k} subspaces but a graph on {} vertices",
            graph.weights.nrows()
        )));
    }
    let d = omegas[0].nrows();
    if omegas.iter().any(|o| o.nrows() != d) {
        return Err(Error::dim("subspaces live in different ambient spaces"));
    }
    let proj: Vec<Matrix> = omegas.iter().map(|o| o * o.transpose()).collect();
    let mut a = DMatrix::zeros(d, d);
    let mut b = DMatrix::zeros(d, d);
    for i in 0..k {
        b += &proj[i] * graph.degrees[i];
        for j in i + 1..k {
            let m = &proj[i] - &proj[j];
            a += (&m * &m) * graph.weights[(i, j)];
        }
    }
    Ok((a, b))
}

/// Generalised eigenvectors of the `d~` smallest eigenvalues, restricted to
/// `range(B)` and normalised so that `Delta^T (B + eps I) Delta = I`.
///
/// `omegas` defaults to the subspace bases themselves.
pub fn fit_projection(
    points: &[GrassmannPoint],
    graph: &SimilarityGraph,
    d_tilde: usize,
    omegas: Option<&[Matrix]>,
) -> Result<ProjectionMap> {
    let owned: Vec<Matrix>;
    let omegas = match omegas {
        Some(o) => o,
        None => {
            owned = points.iter().map(|p| p.basis().clone()).collect();
            &owned
        }
    };
    let (a, b) = pencil(omegas, graph)?;
    let d = a.nrows();
    if d_tilde == 0 || d_tilde > d {
        return Err(Error::InvalidInput(format!("projection dimension {d_tilde} not in 1..={d}")));
    }
    let base = B_JITTER * b.trace() / d as f64;
    if !(base > 0.0) || !base.is_finite() {
        return Err(Error::Numerical("B is singular (zero trace)".into()));
    }
    solve_restricted(&a, &b, base, d_tilde).or_else(|_| solve_restricted(&a, &b, 10.0 * base, d_tilde))
}

fn solve_restricted(a: &Matrix, b: &Matrix, eps: f64, d_tilde: usize) -> Result<ProjectionMap> {
    let d = a.nrows();
    let bj = b + DMatrix::identity(d, d) * eps;
    let (lam, v) = linalg::eigh(&bj)?;
    let lmax = lam[d - 1];
    let keep: Vec<usize> = (0..d).filter(|&i| lam[i] - eps > RANGE_TOL * lmax).collect();
    if keep.is_empty() {
        return Err(Error::Numerical("B is singular after jitter".into()));
    }
    let whiten = DMatrix::from_fn(d, keep.len(), |r, c| v[(r, keep[c])] / lam[keep[c]].sqrt());
    let reduced = whiten.transpose() * a * &whiten;
    let (mu, y) = linalg::eigh(&reduced)?;
    let n = d_tilde.min(keep.len());
    let delta = &whiten * y.columns(0, n);
    if delta.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite projection".into()));
    }
    Ok(ProjectionMap { delta, eigenvalues: mu.rows(0, n).into_owned(), jitter: eps })
}

/// Fits `Delta` and maps every subspace through it. Subspaces whose image
/// loses rank are shrunk to the surviving directions and listed in
/// [`LowDimSet::collapsed`].
pub fn project_all(
    points: &[GrassmannPoint],
    graph: &SimilarityGraph,
    d_tilde: usize,
    omegas: Option<&[Matrix]>,
) -> Result<(ProjectionMap, LowDimSet)> {
    let map = fit_projection(points, graph, d_tilde, omegas)?;
    let set = project_with(points, &map)?;
    Ok((map, set))
}

/// Maps every subspace through an existing projection.
pub fn project_with(points: &[GrassmannPoint], map: &ProjectionMap) -> Result<LowDimSet> {
    let mut out = Vec::with_capacity(points.len());
    let mut collapsed = Vec::new();
    for (i, phi) in points.iter().enumerate() {
        let direct = if phi.dim() <= map.dim() {
            project_point(phi, map)
        } else if phi.ambient_dim() == map.ambient_dim() {
            Err(Error::ProjectionCollapse { group: i, rank: map.dim(), dim: phi.dim() })
        } else {
            project_point(phi, map)
        };
        match direct {
            Ok(pt) => out.push(pt),
            Err(Error::ProjectionCollapse { .. }) => {
                collapsed.push(i);
                out.push(project_point_shrunk(phi, map)?);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(LowDimSet { points: out, collapsed })
}
