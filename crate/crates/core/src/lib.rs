//! Dense non-rigid structure from motion.
//!
//! Trajectories are grouped into low-rank shape subspaces, each subspace is
//! treated as a point on a Grassmann manifold, and the points are clustered by
//! low-rank self-representation in a learned low-dimensional embedding. Shape,
//! grouping and coefficients are estimated jointly with an ADMM loop.
//!
//! Layout conventions used throughout:
//!
//! * `W` is `2F x P`, rows `2f` and `2f+1` hold the x and y image coordinates
//!   of frame `f`.
//! * Rotations are stored per frame as `2 x 3` orthographic blocks.
//! * `S` is `3F x P`, rows `3f..3f+3` hold `X, Y, Z` of frame `f`.
//! * `S#` is `3P x F`, see [`data::reshuffle`].

pub mod clustering;
pub mod data;
pub mod error;
pub mod eval;
pub mod grassmann;
pub mod io;
pub mod linalg;
pub mod lowdim;
pub mod solver;
pub mod sweep;
pub mod synth;

pub use clustering::{CouplingState, KernelMatrix};
pub use data::{Dataset, OrderingVector, Permutation, ShapeState};
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use grassmann::{GrassmannPoint, GroupDecomposition, SimilarityGraph};
pub use lowdim::{LowDimSet, ProjectionMap};
pub use solver::{IterRecord, SolveResult, SolverConfig, StopReason};
pub use synth::{Scene, SceneSpec};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
