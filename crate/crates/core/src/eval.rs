//! Reconstruction and grouping metrics.

use pathfinding::kuhn_munkres::kuhn_munkres;
use serde::{Deserialize, Serialize};

use crate::clustering::confusion;
use crate::data::{restore_columns, Permutation};
use crate::error::{Error, Result};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean over frames of `||S_est^f - S_gt^f||_F / ||S_gt^f||_F`.
    pub e3d: f64,
    pub per_frame: Vec<f64>,
    /// True when the depth-reflected estimate scored better.
    pub depth_flipped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_accuracy: Option<f64>,
}

fn frame_errors(s_est: &Matrix, s_gt: &Matrix, flip: bool) -> Vec<f64> {
    (0..s_gt.nrows() / 3)
        .map(|f| {
            let gt = s_gt.rows(3 * f, 3);
            let mut est = s_est.rows(3 * f, 3).into_owned();
            if flip {
                est.row_mut(2).neg_mut();
            }
            (est - gt).norm() / gt.norm()
        })
        .collect()
}

/// Relative 3D error. `s_est` is given in the column order reached after
/// `history`; it is brought back to the original order first. Orthographic
/// cameras cannot tell a shape from its mirror image in depth, so the better
/// of the two is reported.
pub fn e3d(s_est: &Matrix, s_gt: &Matrix, history: &[Permutation]) -> Result<EvalReport> {
    if s_est.shape() != s_gt.shape() || s_gt.nrows() % 3 != 0 {
        return Err(Error::dim(format!(
            "estimate is {}x{}, ground truth {}x{}",
            s_est.nrows(),
            s_est.ncols(),
            s_gt.nrows(),
            s_gt.ncols()
        )));
    }
    if let Some(p) = history.iter().find(|p| p.len() != s_est.ncols() || !p.is_valid()) {
        return Err(Error::InvalidInput(format!("invalid column permutation of length {}", p.len())));
    }
    if let Some(f) = (0..s_gt.nrows() / 3).find(|&f| s_gt.rows(3 * f, 3).norm() == 0.0) {
        return Err(Error::InvalidInput(format!("ground truth frame {f} is all zeros")));
    }
    let est = restore_columns(s_est, history);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let plain = frame_errors(&est, s_gt, false);
    let flipped = frame_errors(&est, s_gt, true);
    let (per_frame, depth_flipped) = if mean(&flipped) < mean(&plain) { (flipped, true) } else { (plain, false) };
    Ok(EvalReport { e3d: mean(&per_frame), per_frame, depth_flipped, label_accuracy: None })
}

/// Fraction of points whose label agrees with the ground truth under the best
/// one-to-one matching of label names.
pub fn label_accuracy(est: &[usize], gt: &[usize]) -> Result<f64> {
    if est.len() != gt.len() || est.is_empty() {
        return Err(Error::dim(format!("{} estimated labels for {} true ones", est.len(), gt.len())));
    }
    let kx = est.iter().max().map_or(0, |m| m + 1);
    let ky = gt.iter().max().map_or(0, |m| m + 1);
    let counts = confusion(est, gt, kx, ky);
    let (matched, _) = kuhn_munkres(&counts);
    Ok(matched as f64 / est.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn perfect_and_scaled() {
        let gt = DMatrix::from_fn(6, 4, |r, c| (r * 4 + c) as f64 + 1.0);
        assert_eq!(e3d(&gt, &gt, &[]).unwrap().e3d, 0.0);
        let r = e3d(&(&gt * 1.1), &gt, &[]).unwrap();
        assert!((r.e3d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn depth_reflection_is_free() {
        let gt = DMatrix::from_fn(3, 5, |r, c| (r + 2 * c) as f64 - 3.0);
        let mut est = gt.clone();
        est.row_mut(2).neg_mut();
        let r = e3d(&est, &gt, &[]).unwrap();
        assert!(r.e3d < 1e-15 && r.depth_flipped);
    }

    #[test]
    fn accuracy_ignores_label_names() {
        assert_eq!(label_accuracy(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(label_accuracy(&[0, 0, 0, 1], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert!(label_accuracy(&[0], &[0, 1]).is_err());
    }
}
