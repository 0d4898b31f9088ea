//! Measurement containers, the `S <-> S#` reshuffle and column bookkeeping.

use nalgebra::{DMatrix, Matrix2x3};

use crate::error::{Error, Result};
use crate::Matrix;

/// Maximum deviation of `R_f R_f^T` from the identity accepted on load.
pub const ROTATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `2F x P` centred measurements.
    pub w: Matrix,
    /// One orthographic `2 x 3` camera block per frame.
    pub rotations: Vec<Matrix2x3<f64>>,
    /// Optional `3F x P` ground-truth shape.
    pub s_gt: Option<Matrix>,
    /// Original column identifiers, `0..P` unless loaded otherwise.
    pub column_ids: Vec<usize>,
}

impl Dataset {
    pub fn new(w: Matrix, rotations: Vec<Matrix2x3<f64>>, s_gt: Option<Matrix>) -> Result<Self> {
        let column_ids = (0..w.ncols()).collect();
        let ds = Dataset { w, rotations, s_gt, column_ids };
        ds.validate()?;
        Ok(ds)
    }

    /// Builds a dataset from a `2F x 3` stack of rotation blocks.
    pub fn from_stack(w: Matrix, r: &Matrix, s_gt: Option<Matrix>) -> Result<Self> {
        Dataset::new(w, split_rotations(r)?, s_gt)
    }

    pub fn frames(&self) -> usize {
        self.rotations.len()
    }

    pub fn points(&self) -> usize {
        self.w.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.frames();
        let p = self.points();
        if f == 0 || p == 0 {
            return Err(Error::InvalidInput(format!("empty dataset ({f} frames, {p} points)")));
        }
        if self.w.nrows() != 2 * f {
            return Err(Error::dim(format!(
                "W has {} rows but there are {f} rotation blocks",
                self.w.nrows()
            )));
        }
        if self.w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("W contains non-finite values".into()));
        }
        for (frame, r) in self.rotations.iter().enumerate() {
            let dev = (r * r.transpose() - nalgebra::Matrix2::identity()).amax();
            if !(dev <= ROTATION_TOL) {
                return Err(Error::RotationNotOrthonormal { frame, deviation: dev });
            }
        }
        if let Some(s) = &self.s_gt {
            if s.nrows() != 3 * f || s.ncols() != p {
                return Err(Error::dim(format!(
                    "S_gt is {}x{}, expected {}x{p}",
                    s.nrows(),
                    s.ncols(),
                    3 * f
                )));
            }
        }
        if self.column_ids.len() != p {
            return Err(Error::dim("column id count differs from point count"));
        }
        Ok(())
    }

    /// Rotations stacked into a `2F x 3` matrix.
    pub fn rotation_stack(&self) -> Matrix {
        let mut r = DMatrix::zeros(2 * self.frames(), 3);
        for (f, block) in self.rotations.iter().enumerate() {
            r.fixed_view_mut::<2, 3>(2 * f, 0).copy_from(block);
        }
        r
    }

    /// Applies the block-diagonal camera to a `3F x P` shape.
    pub fn project(&self, s: &Matrix) -> Matrix {
        let p = s.ncols();
        let mut out = DMatrix::zeros(2 * self.frames(), p);
        for (f, r) in self.rotations.iter().enumerate() {
            let block = r * s.rows(3 * f, 3);
            out.rows_mut(2 * f, 2).copy_from(&block);
        }
        out
    }
}

pub fn split_rotations(r: &Matrix) -> Result<Vec<Matrix2x3<f64>>> {
    if r.ncols() != 3 || r.nrows() % 2 != 0 {
        return Err(Error::dim(format!("rotation stack must be 2F x 3, got {}x{}", r.nrows(), r.ncols())));
    }
    Ok((0..r.nrows() / 2)
        .map(|f| r.fixed_view::<2, 3>(2 * f, 0).into_owned())
        .collect())
}

/// `S (3F x P) -> S# (3P x F)`: column `f` stacks `X_f`, `Y_f`, `Z_f`.
pub fn reshuffle(s: &Matrix) -> Result<Matrix> {
    if s.nrows() % 3 != 0 {
        return Err(Error::dim(format!("shape has {} rows, not a multiple of 3", s.nrows())));
    }
    let f = s.nrows() / 3;
    let p = s.ncols();
    Ok(DMatrix::from_fn(3 * p, f, |row, frame| s[(3 * frame + row / p, row % p)]))
}

/// Inverse of [`reshuffle`].
pub fn reshuffle_inv(s_sharp: &Matrix) -> Result<Matrix> {
    if s_sharp.nrows() % 3 != 0 {
        return Err(Error::dim(format!(
            "reshuffled shape has {} rows, not a multiple of 3",
            s_sharp.nrows()
        )));
    }
    let p = s_sharp.nrows() / 3;
    let f = s_sharp.ncols();
    Ok(DMatrix::from_fn(3 * f, p, |row, j| s_sharp[((row % 3) * p + j, row / 3)]))
}

/// Column permutation: position `i` of the result takes old column `self.0[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(pub Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        let mut seen = vec![false; self.0.len()];
        self.0.iter().all(|&i| i < seen.len() && !std::mem::replace(&mut seen[i], true))
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &j) in self.0.iter().enumerate() {
            inv[j] = i;
        }
        Permutation(inv)
    }

    /// Permutation equivalent to applying `self` and then `next`.
    pub fn then(&self, next: &Permutation) -> Self {
        Permutation(next.0.iter().map(|&i| self.0[i]).collect())
    }

    pub fn apply_columns(&self, m: &Matrix) -> Matrix {
        DMatrix::from_fn(m.nrows(), self.0.len(), |r, c| m[(r, self.0[c])])
    }

    pub fn apply<T: Clone>(&self, v: &[T]) -> Vec<T> {
        self.0.iter().map(|&i| v[i].clone()).collect()
    }

    /// Permutes the point index inside each of the three coordinate blocks
    /// of a reshuffled `3P x F` matrix.
    pub fn apply_sharp_rows(&self, m: &Matrix) -> Matrix {
        let p = self.0.len();
        DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[((r / p) * p + self.0[r % p], c)])
    }
}

/// Composition of a permutation history, identity when empty.
pub fn compose_history(history: &[Permutation], n: usize) -> Permutation {
    history.iter().fold(Permutation::identity(n), |acc, p| acc.then(p))
}

/// Brings columns of a matrix in the current order back to the original order.
pub fn restore_columns(m: &Matrix, history: &[Permutation]) -> Matrix {
    compose_history(history, m.ncols()).inverse().apply_columns(m)
}

/// Group labels (`0..k`) of the columns in their current order, plus the
/// permutations applied so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderingVector {
    pub labels: Vec<usize>,
    pub k: usize,
    pub history: Vec<Permutation>,
}

impl OrderingVector {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("number of groups must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidInput(format!("label {bad} out of range for {k} groups")));
        }
        Ok(OrderingVector { labels, k, history: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Column indices (current order) belonging to each group.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.k];
        for (j, &l) in self.labels.iter().enumerate() {
            groups[l].push(j);
        }
        groups
    }

    /// Stable sort of the columns by label. The permutation is returned so
    /// the caller can move its matrices along; it is added to the history
    /// unless it is the identity.
    pub fn arrange(&mut self) -> Permutation {
        let mut idx: Vec<usize> = (0..self.labels.len()).collect();
        idx.sort_by_key(|&j| self.labels[j]);
        let perm = Permutation(idx);
        if perm != Permutation::identity(perm.len()) {
            self.labels = perm.apply(&self.labels);
            self.history.push(perm.clone());
        }
        perm
    }

    pub fn total_permutation(&self) -> Permutation {
        compose_history(&self.history, self.labels.len())
    }

    pub fn labels_original_order(&self) -> Vec<usize> {
        self.total_permutation().inverse().apply(&self.labels)
    }
}

/// Primal shape, its reshuffled copy and the associated multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeState {
    pub s: Matrix,
    pub s_sharp: Matrix,
    pub l1: Matrix,
}

impl ShapeState {
    pub fn from_shape(s: Matrix) -> Result<Self> {
        let s_sharp = reshuffle(&s)?;
        let l1 = DMatrix::zeros(s_sharp.nrows(), s_sharp.ncols());
        Ok(ShapeState { s, s_sharp, l1 })
    }

    pub fn permute(&mut self, perm: &Permutation) {
        self.s = perm.apply_columns(&self.s);
        self.s_sharp = perm.apply_sharp_rows(&self.s_sharp);
        self.l1 = perm.apply_sharp_rows(&self.l1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reshuffle_small_example() {
        // F = 1, P = 2: columns (1,2,3) and (4,5,6).
        let s = DMatrix::from_row_slice(3, 2, &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let sharp = reshuffle(&s).unwrap();
        assert_eq!(sharp.shape(), (6, 1));
        assert_eq!(sharp.as_slice(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(reshuffle_inv(&sharp).unwrap(), s);
    }

    #[test]
    fn reshuffle_rejects_bad_rows() {
        assert!(reshuffle(&DMatrix::zeros(4, 2)).is_err());
        assert!(reshuffle_inv(&DMatrix::zeros(5, 2)).is_err());
    }

    #[test]
    fn permutation_algebra() {
        let a = Permutation(vec![2, 0, 1]);
        let b = Permutation(vec![1, 2, 0]);
        let m = DMatrix::from_row_slice(1, 3, &[10.0, 20.0, 30.0]);
        let step = b.apply_columns(&a.apply_columns(&m));
        assert_eq!(a.then(&b).apply_columns(&m), step);
        assert_eq!(a.then(&a.inverse()), Permutation::identity(3));
        assert!(!Permutation(vec![0, 0, 1]).is_valid());
    }

    #[test]
    fn arrange_sorts_stably_and_restores() {
        let mut order = OrderingVector::new(vec![1, 0, 1, 0, 2], 3).unwrap();
        let m = DMatrix::from_row_slice(1, 5, &[0.0, 1.0, 2.0, 3.0, 4.0]);
        let perm = order.arrange();
        assert_eq!(perm.0, vec![1, 3, 0, 2, 4]);
        assert_eq!(order.labels, vec![0, 0, 1, 1, 2]);
        let moved = perm.apply_columns(&m);
        assert_eq!(restore_columns(&moved, &order.history), m);
        assert_eq!(order.labels_original_order(), vec![1, 0, 1, 0, 2]);
    }

    #[test]
    fn sharp_rows_follow_columns() {
        let s = DMatrix::from_fn(6, 4, |r, c| (10 * r + c) as f64);
        let perm = Permutation(vec![3, 1, 0, 2]);
        let lhs = perm.apply_sharp_rows(&reshuffle(&s).unwrap());
        let rhs = reshuffle(&perm.apply_columns(&s)).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn dataset_validation() {
        let r = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let w = DMatrix::zeros(2, 4);
        assert!(Dataset::from_stack(w.clone(), &r, None).is_ok());
        let bad = DMatrix::from_row_slice(2, 3, &[1.0, 0.1, 0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(
            Dataset::from_stack(w.clone(), &bad, None),
            Err(Error::RotationNotOrthonormal { frame: 0, .. })
        ));
        assert!(Dataset::from_stack(DMatrix::zeros(4, 4), &r, None).is_err());
        assert!(Dataset::from_stack(w, &r, Some(DMatrix::zeros(3, 5))).is_err());
    }
}
