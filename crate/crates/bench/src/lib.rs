//! Fixtures shared by the benchmarks in `benches/`.

use grassfm_core::synth::{generate_scene, SceneSpec};
use grassfm_core::{Dataset, Matrix};
use nalgebra::DMatrix;

/// Standard synthetic scene.
pub fn standard_dataset() -> Dataset {
    generate_scene(&SceneSpec::standard(7)).expect("standard scene").dataset
}

/// Deterministic dense matrix with entries in `[-1, 1]`.
pub fn test_matrix(rows: usize, cols: usize) -> Matrix {
    DMatrix::from_fn(rows, cols, |r, c| ((r * 31 + c * 17) as f64 * 0.37).sin())
}
