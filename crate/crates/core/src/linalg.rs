//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Thin SVD with descending singular values. Each left singular vector is
/// signed so that its largest-magnitude entry is positive; the matching right
/// vector is flipped with it.
pub struct ThinSvd {
    pub u: Matrix,
    pub sigma: Vector,
    pub v: Matrix,
}

pub fn svd(m: &Matrix) -> Result<ThinSvd> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::dim("SVD of an empty matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("SVD input contains non-finite values".into()));
    }
    if let Some(dec) = diagonal_svd(m) {
        return Ok(dec);
    }
    // nalgebra's SVD returns inaccurate vectors for some exactly
    // rank-deficient inputs, which is the normal case for group blocks.
    let a = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let dec = a.thin_svd().map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let (fu, fv, fs) = (dec.U(), dec.V(), dec.S().column_vector());
    let mut u = DMatrix::from_fn(fu.nrows(), fu.ncols(), |i, j| fu[(i, j)]);
    let mut v = DMatrix::from_fn(fv.nrows(), fv.ncols(), |i, j| fv[(i, j)]);
    let sigma = DVector::from_fn(fs.nrows(), |i, _| fs[i]);
    for k in 0..u.ncols() {
        let col = u.column(k);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            u.column_mut(k).neg_mut();
            v.column_mut(k).neg_mut();
        }
    }
    Ok(ThinSvd { u, sigma, v })
}

/// Exact decomposition of a matrix with no off-diagonal entries.
fn diagonal_svd(m: &Matrix) -> Option<ThinSvd> {
    let (rows, cols) = m.shape();
    if m.iter().enumerate().any(|(k, &x)| x != 0.0 && k % rows != k / rows) {
        return None;
    }
    let r = rows.min(cols);
    let mut idx: Vec<usize> = (0..r).collect();
    idx.sort_by(|&a, &b| m[(b, b)].abs().total_cmp(&m[(a, a)].abs()));
    let mut u = DMatrix::zeros(rows, r);
    let mut v = DMatrix::zeros(cols, r);
    let sigma = DVector::from_fn(r, |k, _| m[(idx[k], idx[k])].abs());
    for (k, &i) in idx.iter().enumerate() {
        u[(i, k)] = 1.0;
        v[(i, k)] = if m[(i, i)] < 0.0 { -1.0 } else { 1.0 };
    }
    Some(ThinSvd { u, sigma, v })
}

/// Symmetric eigendecomposition with eigenvalues in ascending order.
pub fn eigh(m: &Matrix) -> Result<(Vector, Matrix)> {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let dec = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| dec.eigenvalues[a].total_cmp(&dec.eigenvalues[b]));
    let values = DVector::from_fn(n, |i, _| dec.eigenvalues[idx[i]]);
    let vectors = DMatrix::from_fn(n, n, |r, c| dec.eigenvectors[(r, idx[c])]);
    Ok((values, vectors))
}

/// Largest absolute entry, zero for empty matrices.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn nuclear_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    svd(m).map_or(f64::NAN, |d| d.sigma.sum())
}

/// `max |A^T A - I|` for a matrix expected to have orthonormal columns.
pub fn orthonormality_error(a: &Matrix) -> f64 {
    let g = a.transpose() * a;
    max_abs(&(g - DMatrix::identity(a.ncols(), a.ncols())))
}

/// Selects the listed columns in order.
pub fn select_columns(m: &Matrix, cols: &[usize]) -> Matrix {
    DMatrix::from_fn(m.nrows(), cols.len(), |r, c| m[(r, cols[c])])
}
