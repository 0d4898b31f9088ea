//! Self-representation of the projected subspaces and the grouping of
//! trajectories derived from it.

use nalgebra::{Cholesky, DMatrix, DVector};
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix as CostMatrix;
use rand::{Rng, RngExt};

use crate::data::OrderingVector;
use crate::error::{Error, Result};
use crate::linalg::{self, select_columns};
use crate::lowdim::LowDimSet;
use crate::Matrix;

/// Relative jitter on the kernel diagonal, scaled by `trace(Gamma) / K`.
pub const KERNEL_JITTER: f64 = 1e-10;
const LLOYD_ITERS: usize = 100;
const KSUB_PASSES: usize = 20;
const REPAIR_MOVES: usize = 3;

/// Singular value thresholding `U max(S - tau, 0) V^T`.
pub fn svt(m: &Matrix, tau: f64) -> Result<Matrix> {
    svt_with_norm(m, tau).map(|(out, _)| out)
}

/// [`svt`] together with the nuclear norm of its result.
pub fn svt_with_norm(m: &Matrix, tau: f64) -> Result<(Matrix, f64)> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidInput(format!("threshold must be non-negative, got {tau}")));
    }
    if m.is_empty() {
        return Ok((m.clone(), 0.0));
    }
    let dec = linalg::svd(m)?;
    let shrunk = dec.sigma.map(|s| (s - tau).max(0.0));
    let keep = shrunk.iter().take_while(|&&s| s > 0.0).count();
    if keep == 0 {
        return Ok((DMatrix::zeros(m.nrows(), m.ncols()), 0.0));
    }
    let us = dec.u.columns(0, keep) * DMatrix::from_diagonal(&shrunk.rows(0, keep));
    Ok((us * dec.v.columns(0, keep).transpose(), shrunk.sum()))
}

/// `Gamma_ij = ||Theta_i^T Theta_j||_F^2` and the Cholesky factor of its
/// jittered copy.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub gamma: Matrix,
    /// Lower triangular `L` with `L L^T = Gamma + delta I`.
    pub chol: Matrix,
    pub jitter: f64,
}

pub fn kernel_matrix(set: &LowDimSet) -> Result<KernelMatrix> {
    let thetas = set.thetas();
    let k = thetas.len();
    if k == 0 {
        return Err(Error::InvalidInput("kernel of no subspaces".into()));
    }
    let d = thetas[0].nrows();
    if thetas.iter().any(|t| t.nrows() != d) {
        return Err(Error::dim("projected subspaces have different ambient dimension"));
    }
    let mut gamma = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = (thetas[i].transpose() * thetas[j]).norm_squared();
            gamma[(i, j)] = v;
            gamma[(j, i)] = v;
        }
    }
    let mut jitter = KERNEL_JITTER * gamma.trace() / k as f64;
    for _ in 0..6 {
        let shifted = &gamma + DMatrix::identity(k, k) * jitter;
        if let Some(ch) = Cholesky::new(shifted) {
            return Ok(KernelMatrix { chol: ch.l(), gamma, jitter });
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical("kernel matrix is not positive definite".into()))
}

/// Coefficient matrix, its low-rank copy and their multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingState {
    pub c: Matrix,
    pub z: Matrix,
    pub l2: Matrix,
    pub rho: f64,
}

impl CouplingState {
    pub fn zeros(k: usize, rho: f64) -> Self {
        CouplingState { c: DMatrix::zeros(k, k), z: DMatrix::zeros(k, k), l2: DMatrix::zeros(k, k), rho }
    }
}

/// `C = (2 b1 L L^T + rho Z - L2) (2 b1 L L^T + rho I)^-1`.
pub fn update_coefficients(kernel: &KernelMatrix, state: &CouplingState, beta1: f64) -> Result<Matrix> {
    let k = kernel.chol.nrows();
    if state.z.shape() != (k, k) || state.l2.shape() != (k, k) {
        return Err(Error::dim(format!("coupling state does not match a {k}x{k} kernel")));
    }
    if !(state.rho > 0.0) {
        return Err(Error::InvalidInput("penalty must be positive".into()));
    }
    let g = (&kernel.chol * kernel.chol.transpose()) * (2.0 * beta1);
    let rhs = &g + &state.z * state.rho - &state.l2;
    let lhs = g + DMatrix::identity(k, k) * state.rho;
    // lhs is symmetric, so C lhs = rhs is lhs C^T = rhs^T.
    let ch = Cholesky::new(lhs).ok_or_else(|| Error::Numerical("coefficient system is singular".into()))?;
    Ok(ch.solve(&rhs.transpose()).transpose())
}

fn sq_dist_col(m: &Matrix, j: usize, c: &DVector<f64>) -> f64 {
    m.column(j).iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// k-means++ seeding followed by Lloyd iterations on the columns of `x`.
pub fn kmeans<R: Rng + ?Sized>(x: &Matrix, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = x.ncols();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("cannot form {k} clusters from {n} points")));
    }
    let mut centers: Vec<DVector<f64>> = vec![x.column(rng.random_range(0..n)).into_owned()];
    let mut dist: Vec<f64> = (0..n).map(|j| sq_dist_col(x, j, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (j, &d) in dist.iter().enumerate() {
                if d > 0.0 && t < d {
                    pick = j;
                    break;
                }
                t -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = x.column(pick).into_owned();
        for (j, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist_col(x, j, &c));
        }
        centers.push(c);
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..LLOYD_ITERS {
        let mut changed = false;
        for (j, l) in labels.iter_mut().enumerate() {
            let best = (0..k)
                .map(|c| (c, sq_dist_col(x, j, &centers[c])))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(c, _)| c)
                .unwrap_or(0);
            if *l != best {
                *l = best;
                changed = true;
            }
        }
        fill_empty_clusters(x, &mut labels, &centers, k);
        if !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let cols: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            *center = select_columns(x, &cols).column_mean();
        }
    }
    Ok(labels)
}

/// Moves the point farthest from its centre into each empty cluster.
fn fill_empty_clusters(x: &Matrix, labels: &mut [usize], centers: &[DVector<f64>], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { return };
        let far = (0..labels.len())
            .filter(|&j| sizes[labels[j]] > 1)
            .max_by(|&a, &b| {
                sq_dist_col(x, a, &centers[labels[a]]).total_cmp(&sq_dist_col(x, b, &centers[labels[b]]))
            });
        match far {
            Some(j) => labels[j] = empty,
            None => return,
        }
    }
}

/// Initial grouping from k-means++ on the trajectories.
pub fn kmeans_pp_init<R: Rng + ?Sized>(s: &Matrix, k: usize, rng: &mut R) -> Result<OrderingVector> {
    let labels = kmeans(s, k, rng)?;
    OrderingVector::new(labels, k)
}

/// Relabels `new` to agree as much as possible with `reference`.
pub fn align_labels(new: &[usize], reference: &[usize], k: usize) -> Vec<usize> {
    let counts = confusion(new, reference, k, k);
    let (_, map) = kuhn_munkres(&counts);
    new.iter().map(|&l| map[l]).collect()
}

/// `counts[a][b]` = number of items with label `a` in `x` and `b` in `y`.
pub(crate) fn confusion(x: &[usize], y: &[usize], kx: usize, ky: usize) -> CostMatrix<i64> {
    let n = kx.max(ky);
    let mut counts = CostMatrix::new(n, n, 0i64);
    for (&a, &b) in x.iter().zip(y) {
        counts[(a, b)] += 1;
    }
    counts
}

/// Spectral clustering of the subspaces with affinity `(|C| + |C^T|) / 2`.
pub fn spectral_labels<R: Rng + ?Sized>(c: &Matrix, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = c.nrows();
    if c.ncols() != n {
        return Err(Error::dim("coefficient matrix must be square"));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("cannot form {k} clusters from {n} subspaces")));
    }
    let aff = (c.abs() + c.transpose().abs()) * 0.5;
    let inv_sqrt = DVector::from_fn(n, |i, _| {
        let d = aff.row(i).sum();
        if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }
    });
    let lap = DMatrix::from_fn(n, n, |i, j| {
        let e = if i == j { 1.0 } else { 0.0 };
        e - inv_sqrt[i] * aff[(i, j)] * inv_sqrt[j]
    });
    let (_, vecs) = linalg::eigh(&lap)?;
    let mut emb = vecs.columns(0, k).transpose();
    for mut col in emb.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    kmeans(&emb, k, rng)
}

/// Trajectory grouping from the coefficient matrix.
///
/// Subspaces are clustered spectrally and every trajectory inherits the
/// cluster of its subspace. Empty clusters are refilled by splitting the
/// largest one, and labels are matched to `current` to limit churn.
pub fn spectral_cluster<R: Rng + ?Sized>(
    set: &LowDimSet,
    c: &Matrix,
    current: &OrderingVector,
    k: usize,
    s: &Matrix,
    rng: &mut R,
) -> Result<OrderingVector> {
    if set.len() != c.nrows() || current.k != c.nrows() {
        return Err(Error::dim(format!(
            "{} projected subspaces, {} groups, {}x{} coefficients",
            set.len(),
            current.k,
            c.nrows(),
            c.ncols()
        )));
    }
    if s.ncols() != current.len() {
        return Err(Error::dim("trajectory count differs from label count"));
    }
    let group_labels = spectral_labels(c, k.min(c.nrows()), rng)?;
    let mut labels: Vec<usize> = current.labels.iter().map(|&g| group_labels[g]).collect();
    split_into_empty(s, &mut labels, k, rng)?;
    let labels = align_labels(&labels, &current.labels, k.max(current.k));
    let mut out = current.clone();
    out.labels = labels;
    out.k = k;
    Ok(out)
}

fn split_into_empty<R: Rng + ?Sized>(s: &Matrix, labels: &mut [usize], k: usize, rng: &mut R) -> Result<()> {
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&n| n == 0) else { return Ok(()) };
        let largest = (0..k).max_by_key(|&g| (sizes[g], usize::MAX - g)).unwrap_or(0);
        if sizes[largest] < 2 {
            return Err(Error::InvalidInput(format!("cannot form {k} non-empty groups")));
        }
        let idx: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] == largest).collect();
        let halves = kmeans(&select_columns(s, &idx), 2, rng)?;
        for (&j, &h) in idx.iter().zip(&halves) {
            if h == 1 {
                labels[j] = empty;
            }
        }
    }
}

/// Rank-`p` bases of each group and their residual energy.
fn fit_subspaces(s: &Matrix, labels: &[usize], k: usize, p: usize) -> Result<(Vec<Matrix>, Vec<f64>)> {
    let mut bases = Vec::with_capacity(k);
    let mut costs = Vec::with_capacity(k);
    for g in 0..k {
        let idx: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] == g).collect();
        if idx.is_empty() {
            return Err(Error::InvalidInput(format!("group {g} is empty")));
        }
        let x = select_columns(s, &idx);
        let dec = linalg::svd(&x)?;
        let u = dec.u.columns(0, p.min(dec.u.ncols())).into_owned();
        let cost = x.norm_squared() - (u.transpose() * &x).norm_squared();
        bases.push(u);
        costs.push(cost.max(0.0));
    }
    Ok((bases, costs))
}

/// Residual of every trajectory against every basis, `k x n`.
fn residuals(s: &Matrix, bases: &[Matrix]) -> Matrix {
    let norms: Vec<f64> = s.column_iter().map(|c| c.norm_squared()).collect();
    let mut res = DMatrix::zeros(bases.len(), s.ncols());
    for (g, u) in bases.iter().enumerate() {
        let proj = u.transpose() * s;
        for j in 0..s.ncols() {
            res[(g, j)] = norms[j] - proj.column(j).norm_squared();
        }
    }
    res
}

fn argmin_among(res: &Matrix, j: usize, allowed: &[usize]) -> usize {
    let mut best = allowed[0];
    for &g in &allowed[1..] {
        if res[(g, j)] < res[(best, j)] {
            best = g;
        }
    }
    best
}

fn all_large_enough(labels: &[usize], k: usize, min: usize) -> bool {
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes.iter().all(|&n| n >= min)
}

/// Alternates subspace fitting and nearest-subspace assignment until the
/// labels settle or a group would drop below `p` members. Returns the labels
/// with their fitted bases and costs.
fn k_subspaces(s: &Matrix, mut labels: Vec<usize>, k: usize, p: usize) -> Result<(Vec<usize>, Vec<Matrix>, Vec<f64>)> {
    let all: Vec<usize> = (0..k).collect();
    for _ in 0..KSUB_PASSES {
        let (bases, costs) = fit_subspaces(s, &labels, k, p)?;
        let res = residuals(s, &bases);
        let new: Vec<usize> = (0..s.ncols()).map(|j| argmin_among(&res, j, &all)).collect();
        if new == labels || !all_large_enough(&new, k, p) {
            return Ok((labels, bases, costs));
        }
        labels = new;
    }
    let (bases, costs) = fit_subspaces(s, &labels, k, p)?;
    Ok((labels, bases, costs))
}

/// Reassigns trajectories to their nearest rank-`p` group subspace.
///
/// After the nearest-subspace passes, a few dissolve/split moves are tried:
/// the group that is cheapest to dissolve hands its members to the others and
/// the worst-fitting group is split in two. A move is kept only when the
/// total residual drops.
pub fn subspace_reassign<R: Rng + ?Sized>(
    s: &Matrix,
    order: &OrderingVector,
    p: usize,
    rng: &mut R,
) -> Result<OrderingVector> {
    let k = order.k;
    if s.ncols() != order.len() {
        return Err(Error::dim("trajectory count differs from label count"));
    }
    if p == 0 || s.ncols() < k * p {
        return Ok(order.clone());
    }
    let (mut labels, mut bases, mut costs) = k_subspaces(s, order.labels.clone(), k, p)?;
    let mut best: f64 = costs.iter().sum();

    for _ in 0..REPAIR_MOVES {
        if k < 2 {
            break;
        }
        let worst = (0..k).max_by(|&a, &b| costs[a].total_cmp(&costs[b])).unwrap_or(0);
        let res = residuals(s, &bases);
        let mut dissolve_cost: Vec<(f64, usize)> = (0..k)
            .map(|g| {
                let others: Vec<usize> = (0..k).filter(|&h| h != g).collect();
                let moved: f64 = (0..s.ncols())
                    .filter(|&j| labels[j] == g)
                    .map(|j| res[(argmin_among(&res, j, &others), j)])
                    .sum();
                (moved - costs[g], g)
            })
            .collect();
        dissolve_cost.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut improved = false;
        for &(_, gone) in &dissolve_cost {
            if gone == worst {
                continue;
            }
            let others: Vec<usize> = (0..k).filter(|&h| h != gone).collect();
            let mut new = labels.clone();
            for j in 0..new.len() {
                if new[j] == gone {
                    new[j] = argmin_among(&res, j, &others);
                }
            }
            let idx: Vec<usize> = (0..new.len()).filter(|&j| new[j] == worst).collect();
            if idx.len() < 2 {
                continue;
            }
            let halves = kmeans(&select_columns(s, &idx), 2, rng)?;
            for (&j, &h) in idx.iter().zip(&halves) {
                if h == 1 {
                    new[j] = gone;
                }
            }
            if !all_large_enough(&new, k, p) {
                continue;
            }
            let (new, b2, c2) = k_subspaces(s, new, k, p)?;
            let total: f64 = c2.iter().sum();
            if total < best * (1.0 - 1e-9) {
                labels = new;
                bases = b2;
                costs = c2;
                best = total;
                improved = true;
            }
            break;
        }
        if !improved {
            break;
        }
    }
    let mut out = order.clone();
    out.labels = labels;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn svt_diagonal_examples() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let out = svt(&m, 2.0).unwrap();
        assert!((out - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]))).amax() < 1e-15);
        assert_eq!(svt(&m, 0.0).unwrap(), m);
        assert_eq!(svt(&m, 5.0).unwrap(), DMatrix::zeros(2, 2));
        assert!(svt(&m, -1.0).is_err());
    }

    #[test]
    fn coefficients_limit_to_identity() {
        // With Z = I, L2 = 0 the update is exactly the identity.
        let gamma = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let chol = Cholesky::new(gamma.clone()).unwrap().l();
        let kernel = KernelMatrix { gamma, chol, jitter: 0.0 };
        let mut st = CouplingState::zeros(2, 0.3);
        st.z = DMatrix::identity(2, 2);
        let c = update_coefficients(&kernel, &st, 1.0).unwrap();
        assert!((c - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn kmeans_separates_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(2, 40, |r, c| if c < 20 { r as f64 * 0.01 + c as f64 * 1e-3 } else { 10.0 + c as f64 * 1e-3 });
        let l = kmeans(&x, 2, &mut rng).unwrap();
        assert!(l[..20].iter().all(|&v| v == l[0]));
        assert!(l[20..].iter().all(|&v| v == l[20]));
        assert_ne!(l[0], l[20]);
        assert!(kmeans(&x, 41, &mut rng).is_err());
    }

    #[test]
    fn alignment_undoes_relabelling() {
        let reference = vec![0, 0, 1, 1, 2, 2];
        let swapped = vec![2, 2, 0, 0, 1, 1];
        assert_eq!(align_labels(&swapped, &reference, 3), reference);
    }

    #[test]
    fn spectral_on_block_diagonal() {
        let mut c = DMatrix::zeros(4, 4);
        c[(0, 1)] = 1.0;
        c[(1, 0)] = 1.0;
        c[(2, 3)] = 1.0;
        c[(3, 2)] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = spectral_labels(&c, 2, &mut rng).unwrap();
        assert_eq!(l[0], l[1]);
        assert_eq!(l[2], l[3]);
        assert_ne!(l[0], l[2]);
    }
}
