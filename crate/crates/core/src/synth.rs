//! Synthetic non-rigid scenes with known shape and patch labels.
//!
//! A smooth surface is cut into `K` patches. Every patch deforms with its own
//! linear map driven by two shared temporal modes, so the trajectories of a
//! patch span a `p`-dimensional subspace of `R^{3F}`. The camera follows a
//! circular cone path, which keeps depth recoverable from the rotations alone.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2x3, Matrix3};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::Matrix;

/// Cycles per sequence of the two deformation modes. Neither matches the
/// single cycle of the camera path.
const MODE_FREQS: [f64; 2] = [3.0, 5.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub frames: usize,
    pub points: usize,
    /// Number of patches.
    pub groups: usize,
    /// Rank of each patch's trajectory matrix.
    pub subspace_dim: usize,
    /// Deformation amplitude in units of the surface scale (RMS radius).
    pub deform_amp: f64,
    /// Half-angle of the camera cone, degrees.
    pub rot_range_deg: f64,
    /// Height of the surface bump relative to its half-width.
    pub depth: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// 30 frames, 600 points, 6 patches of rank 3.
    pub fn standard(seed: u64) -> Self {
        SceneSpec {
            frames: 30,
            points: 600,
            groups: 6,
            subspace_dim: 3,
            deform_amp: 0.5,
            rot_range_deg: 30.0,
            depth: 0.5,
            seed,
        }
    }

    /// The standard scene without deformation.
    pub fn rigid(seed: u64) -> Self {
        SceneSpec { deform_amp: 0.0, ..SceneSpec::standard(seed) }
    }

    fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.points == 0 || self.groups == 0 || self.subspace_dim == 0 {
            return Err(Error::InvalidInput("scene sizes must be positive".into()));
        }
        if self.groups > self.points {
            return Err(Error::InvalidInput(format!(
                "{} patches cannot be cut from {} points",
                self.groups, self.points
            )));
        }
        if !(self.deform_amp.is_finite() && self.rot_range_deg.is_finite() && self.depth.is_finite()) {
            return Err(Error::InvalidInput("scene parameters must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub dataset: Dataset,
    /// Patch label of every point, `0..K`.
    pub labels: Vec<usize>,
    /// RMS radius of the rest shape.
    pub surface_scale: f64,
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Haar-distributed `3 x q` map: orthonormal columns if `q <= 3`, orthonormal
/// rows otherwise.
fn random_orthogonal<R: Rng + ?Sized>(q: usize, rng: &mut R) -> Matrix {
    let n = q.max(3);
    let qr = gaussian(n, n, rng).qr();
    let mut qm = qr.q();
    let r = qr.r();
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            qm.column_mut(k).neg_mut();
        }
    }
    if q <= 3 {
        qm.view((0, 0), (3, q)).into_owned()
    } else {
        qm.view((0, 0), (q, 3)).transpose()
    }
}

/// Per-point coefficients: centred `x, y, z`, then smooth extra features when
/// the patch rank exceeds 3.
fn point_features(xy: &[(f64, f64)], z: &[f64], q: usize) -> Matrix {
    let n = xy.len();
    let mut feats = DMatrix::zeros(q, n);
    for (j, (&(x, y), &zj)) in xy.iter().zip(z).enumerate() {
        let all = [x, y, zj, x * x, x * y, y * y, (PI * x).cos(), (PI * y).cos()];
        for i in 0..q {
            feats[(i, j)] = if i < all.len() { all[i] } else { (PI * (i as f64) * (x + y)).sin() };
        }
    }
    for mut row in feats.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    feats
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (nf, np, k, q) = (spec.frames, spec.points, spec.groups, spec.subspace_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let xy: Vec<(f64, f64)> = (0..np)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let z: Vec<f64> = xy.iter().map(|&(x, y)| spec.depth * (PI * x).sin() * (0.5 * PI * y).cos()).collect();
    let mut coeffs = point_features(&xy, &z, q);
    let spatial = coeffs.rows(0, q.min(3)).into_owned();
    let scale = (spatial.norm_squared() / np as f64).sqrt();
    if scale > 0.0 {
        coeffs /= scale;
    }

    // Patches: farthest-point seeds in the plane, then nearest seed.
    let d2 = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    let mut seeds = vec![xy[rng.random_range(0..np)]];
    let mut nearest: Vec<f64> = xy.iter().map(|&p| d2(p, seeds[0])).collect();
    while seeds.len() < k {
        let far = (0..np).max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(b.cmp(&a))).unwrap_or(0);
        let s = xy[far];
        seeds.push(s);
        for (j, d) in nearest.iter_mut().enumerate() {
            *d = d.min(d2(xy[j], s));
        }
    }
    let labels: Vec<usize> = xy
        .iter()
        .map(|&p| {
            (0..k).min_by(|&a, &b| d2(p, seeds[a]).total_cmp(&d2(p, seeds[b])).then(a.cmp(&b))).unwrap_or(0)
        })
        .collect();

    // Temporal modes: zero mean, unit peak.
    let modes: Vec<Vec<f64>> = MODE_FREQS
        .iter()
        .map(|&freq| {
            let phase = rng.random_range(0.0..2.0 * PI);
            let mut a: Vec<f64> = (0..nf).map(|f| (2.0 * PI * freq * f as f64 / nf as f64 + phase).sin()).collect();
            let mean = a.iter().sum::<f64>() / nf as f64;
            a.iter_mut().for_each(|v| *v -= mean);
            let peak = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak > 0.0 {
                a.iter_mut().for_each(|v| *v /= peak);
            }
            a
        })
        .collect();
    let deformations: Vec<Vec<Matrix>> =
        (0..k).map(|_| MODE_FREQS.iter().map(|_| random_orthogonal(q, &mut rng)).collect()).collect();
    let rest = DMatrix::from_fn(3, q, |r, c| if r == c { 1.0 } else { 0.0 });

    let r = spec.rot_range_deg.to_radians();
    let phase = rng.random_range(0.0..2.0 * PI);
    let mut rotations = Vec::with_capacity(nf);
    let mut s = DMatrix::zeros(3 * nf, np);
    for f in 0..nf {
        let t = 2.0 * PI * f as f64 / nf as f64 + phase;
        let full = rot_y(r * t.cos()) * rot_x(r * t.sin());
        rotations.push(Matrix2x3::from_fn(|i, j| full[(i, j)]));
        for (g, maps) in deformations.iter().enumerate() {
            let mut a = rest.clone();
            for (m, dm) in maps.iter().enumerate() {
                a += dm * (spec.deform_amp * modes[m][f]);
            }
            for j in (0..np).filter(|&j| labels[j] == g) {
                let x = &a * coeffs.column(j);
                s.view_mut((3 * f, j), (3, 1)).copy_from(&x);
            }
        }
    }
    let mut w = DMatrix::zeros(2 * nf, np);
    for (f, rf) in rotations.iter().enumerate() {
        w.rows_mut(2 * f, 2).copy_from(&(rf * s.rows(3 * f, 3)));
    }
    let dataset = Dataset::new(w, rotations, Some(s))?;
    Ok(Scene { dataset, labels, surface_scale: 1.0 })
}

/// Adds `N(0, sigma^2)` noise with `sigma = lambda max|W|`.
pub fn add_noise<R: Rng + ?Sized>(w: &Matrix, lambda: f64, rng: &mut R) -> Result<Matrix> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("noise level must be a finite non-negative number, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(w.clone());
    }
    let sigma = lambda * w.amax();
    Ok(w.map(|v| {
        let z: f64 = StandardNormal.sample(rng);
        v + sigma * z
    }))
}

pub fn noisy_dataset(ds: &Dataset, lambda: f64, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    out.w = add_noise(&ds.w, lambda, &mut rng)?;
    Ok(out)
}
