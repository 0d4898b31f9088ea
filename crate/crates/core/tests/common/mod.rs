#![allow(dead_code)]

use grassfm_core::grassmann::GrassmannPoint;
use grassfm_core::Matrix;
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Orthonormal basis of a random `p`-dimensional subspace of `R^d`.
pub fn random_basis(d: usize, p: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let q = uniform(d, p, rng).qr().q();
    q.columns(0, p).into_owned()
}

pub fn random_point(d: usize, p: usize, rng: &mut ChaCha8Rng) -> GrassmannPoint {
    GrassmannPoint::new(random_basis(d, p, rng)).unwrap()
}

pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    uniform(n, n, rng).qr().q()
}

/// Nuclear norm from the eigenvalues of `X^T X`, no SVD involved.
pub fn nuclear_norm_oracle(x: &Matrix) -> f64 {
    let g = x.transpose() * x;
    g.symmetric_eigenvalues().iter().map(|&l| l.max(0.0).sqrt()).sum()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
