//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any gating criterion fails.
//!
//! Criterion 9 runs only when `GRASSFM_BENCHMARK_DIR` names a dataset
//! directory (`W.csv`, `R.csv`, `S_gt.csv`, `meta.json`); its result is logged
//! and never gates. `GRASSFM_BENCHMARK_REFERENCE` may hold a published error
//! to log next to it.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use grassfm_core::clustering::{kernel_matrix, svt, update_coefficients, CouplingState};
use grassfm_core::data::{reshuffle, reshuffle_inv, restore_columns, Permutation};
use grassfm_core::eval::{e3d, label_accuracy};
use grassfm_core::grassmann::{embed, grassmann_from_block, principal_angles, proj_distance_sq, similarity_graph, GrassmannPoint};
use grassfm_core::linalg::select_columns;
use grassfm_core::lowdim::{fit_projection, pencil, project_with};
use grassfm_core::solver::{admm_solve, update_shape, SolveResult};
use grassfm_core::sweep::{mean_by_lambda, noise_sweep};
use grassfm_core::synth::{generate_scene, Scene, SceneSpec};
use grassfm_core::{SolverConfig, StopReason};
use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3};
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const SCENE_SEED: u64 = 7;
const TIME_LIMIT: Duration = Duration::from_secs(120);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn orthonormal(d: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    uniform(d, d.max(p), rng).qr().q().columns(0, p).into_owned()
}

fn point(d: usize, p: usize, rng: &mut ChaCha8Rng) -> GrassmannPoint {
    GrassmannPoint::new(orthonormal(d, p, rng)).unwrap()
}

fn nuclear_norm_oracle(x: &DMatrix<f64>) -> f64 {
    (x.transpose() * x).symmetric_eigenvalues().iter().map(|&l| l.max(0.0).sqrt()).sum()
}

fn geometry() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let d = 4 + i % 12;
        let p = 1 + i % (d - 1);
        let a = point(d, p, &mut rng);
        let b = point(d, p, &mut rng);
        let lhs = 0.5 * (a.basis() * a.basis().transpose() - b.basis() * b.basis().transpose()).norm_squared();
        let rhs = p as f64 - (a.basis().transpose() * b.basis()).norm_squared();
        let lib = proj_distance_sq(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((lhs - rhs).abs()).max((lib - rhs).abs());

        let q = uniform(p, p, &mut rng).qr().q();
        let rotated = GrassmannPoint::new(a.basis() * q).map_err(|e| e.to_string())?;
        worst = worst.max(proj_distance_sq(&a, &rotated).map_err(|e| e.to_string())?.abs());

        let pi = embed(&a);
        worst = worst.max((&pi * &pi - &pi).amax()).max((pi.trace() - p as f64).abs());
    }
    let elapsed = start.elapsed();
    ensure!(worst <= 1e-8, "largest deviation {worst:e}");
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("100 pairs, largest deviation {worst:.1e}, {:.3}s", elapsed.as_secs_f64()))
}

fn proximal() -> Outcome {
    let diag = |v: &[f64]| DMatrix::from_diagonal(&DVector::from_row_slice(v));
    let cases = [
        (diag(&[5.0, 3.0, 1.0]), 2.0, diag(&[3.0, 1.0, 0.0])),
        (diag(&[5.0, 3.0, 1.0]), 0.0, diag(&[5.0, 3.0, 1.0])),
        (diag(&[5.0, 3.0, 1.0]), 6.0, diag(&[0.0, 0.0, 0.0])),
        (diag(&[-2.0, 0.5]), 1.0, diag(&[-1.0, 0.0])),
    ];
    for (m, tau, expected) in &cases {
        let out = svt(m, *tau).map_err(|e| e.to_string())?;
        ensure!(&out == expected, "svt of {m} at {tau} gave {out}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut margin = f64::INFINITY;
    for trial in 0..20 {
        let m = uniform(5, 5, &mut rng) * 3.0;
        let tau = 0.25 + 0.1 * trial as f64;
        let f = |x: &DMatrix<f64>| 0.5 * (x - &m).norm_squared() + tau * nuclear_norm_oracle(x);
        let x = svt(&m, tau).map_err(|e| e.to_string())?;
        let best = f(&x);
        for k in 0..200 {
            let scale = [1e-1, 1e-2, 1e-3, 1e-4][k % 4];
            let gain = f(&(&x + uniform(5, 5, &mut rng) * scale)) - best;
            margin = margin.min(gain);
            ensure!(gain >= -1e-8, "trial {trial}: perturbation {k} lowers the objective by {:e}", -gain);
        }
    }
    Ok(format!("{} closed forms exact, 4000 perturbations, smallest gain {margin:.1e}", cases.len()))
}

fn linear_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let (f, p, rho) = (9, 17, 0.73);
    let rot: Vec<Matrix2x3<f64>> = (0..f)
        .map(|_| {
            let q = orthonormal(3, 3, &mut rng);
            Matrix2x3::from_fn(|i, j| q[(i, j)])
        })
        .collect();
    let w = uniform(2 * f, p, &mut rng);
    let sharp = uniform(3 * p, f, &mut rng);
    let l1 = uniform(3 * p, f, &mut rng);
    let s = update_shape(&rot, &w, &sharp, &l1, rho).map_err(|e| e.to_string())?;
    let mut shape_res = 0.0f64;
    for (fi, r) in rot.iter().enumerate() {
        let lhs = (r.transpose() * r + Matrix3::identity() * rho) * s.rows(3 * fi, 3);
        for c in 0..3 {
            for j in 0..p {
                let rhs = rho * sharp[(c * p + j, fi)]
                    + l1[(c * p + j, fi)]
                    + r[(0, c)] * w[(2 * fi, j)]
                    + r[(1, c)] * w[(2 * fi + 1, j)];
                shape_res = shape_res.max((lhs[(c, j)] - rhs).abs());
            }
        }
    }
    ensure!(shape_res <= 1e-8, "shape residual {shape_res:e}");

    let pts: Vec<GrassmannPoint> = (0..6).map(|_| point(30, 3, &mut rng)).collect();
    let graph = similarity_graph(&pts).map_err(|e| e.to_string())?;
    let map = fit_projection(&pts, &graph, 12, None).map_err(|e| e.to_string())?;
    let omegas: Vec<_> = pts.iter().map(|p| p.basis().clone()).collect();
    let (a, b) = pencil(&omegas, &graph).map_err(|e| e.to_string())?;
    let bj = &b + DMatrix::identity(30, 30) * map.jitter;
    let mut eig_res = 0.0f64;
    for (c, &mu) in map.eigenvalues.iter().enumerate() {
        let v = map.delta.column(c);
        let av = &a * v;
        eig_res = eig_res.max((&av - &bj * v * mu).norm() / av.norm().max(f64::MIN_POSITIVE));
    }
    ensure!(eig_res <= 1e-6, "generalised eigen residual {eig_res:e} relative to ||Av||");

    let kernel = kernel_matrix(&project_with(&pts, &map).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let state = CouplingState { c: DMatrix::zeros(6, 6), z: uniform(6, 6, &mut rng), l2: uniform(6, 6, &mut rng), rho: 0.4 };
    let c = update_coefficients(&kernel, &state, 1.0).map_err(|e| e.to_string())?;
    let g = (&kernel.gamma + DMatrix::identity(6, 6) * kernel.jitter) * 2.0;
    let coef_res = (&c * (&g + DMatrix::identity(6, 6) * state.rho) - (&g + &state.z * state.rho - &state.l2)).amax();
    ensure!(coef_res <= 1e-8, "coefficient residual {coef_res:e}");

    for n in [1, 7, 50] {
        let m = uniform(12, n, &mut rng);
        ensure!(reshuffle_inv(&reshuffle(&m).unwrap()).unwrap() == m, "reshuffle round trip, {n} columns");
        let mut v: Vec<usize> = (0..n).collect();
        v.shuffle(&mut rng);
        let perm = Permutation(v);
        ensure!(perm.inverse().apply_columns(&perm.apply_columns(&m)) == m, "permutation round trip");
        ensure!(restore_columns(&perm.apply_columns(&m), std::slice::from_ref(&perm)) == m, "history restore");
        ensure!(
            perm.apply_sharp_rows(&reshuffle(&m).unwrap()) == reshuffle(&perm.apply_columns(&m)).unwrap(),
            "reshuffled permutation"
        );
    }
    Ok(format!("shape {shape_res:.1e}, coefficients {coef_res:.1e}, eigen {eig_res:.1e}, round trips exact"))
}

struct Standard {
    scene: Scene,
    result: SolveResult,
    elapsed: Duration,
}

fn smallest_largest_angle(scene: &Scene) -> f64 {
    let gt = scene.dataset.s_gt.as_ref().unwrap();
    let k = scene.labels.iter().max().map_or(0, |m| m + 1);
    let bases: Vec<GrassmannPoint> = (0..k)
        .map(|g| {
            let idx: Vec<usize> = (0..gt.ncols()).filter(|&j| scene.labels[j] == g).collect();
            grassmann_from_block(&select_columns(gt, &idx), 3).unwrap().point
        })
        .collect();
    let mut smallest = f64::INFINITY;
    for i in 0..k {
        for j in i + 1..k {
            let ang = principal_angles(&bases[i], &bases[j]).unwrap();
            smallest = smallest.min(*ang.last().unwrap());
        }
    }
    smallest.to_degrees()
}

fn clustering(run: &Standard) -> Outcome {
    let angle = smallest_largest_angle(&run.scene);
    ensure!(angle >= 30.0, "scene subspaces only {angle:.1} degrees apart");
    let acc = label_accuracy(&run.result.labels, &run.scene.labels).map_err(|e| e.to_string())?;
    let init = label_accuracy(&run.result.init_labels, &run.scene.labels).map_err(|e| e.to_string())?;
    ensure!(acc >= 0.90, "accuracy {acc:.3} < 0.90");
    ensure!(acc > init, "accuracy {acc:.3} does not improve on the k-means++ start {init:.3}");
    Ok(format!("accuracy {acc:.3} (k-means++ start {init:.3}), subspaces >= {angle:.1} deg apart"))
}

fn reconstruction(run: &Standard) -> Outcome {
    let gt = run.scene.dataset.s_gt.as_ref().unwrap();
    let err = e3d(&run.result.s_est, gt, &[]).map_err(|e| e.to_string())?.e3d;
    ensure!(err <= 0.05, "standard scene e3d {err:.4} > 0.05");
    ensure!(run.elapsed <= TIME_LIMIT, "standard scene took {:?}", run.elapsed);

    let rigid = generate_scene(&SceneSpec::rigid(SCENE_SEED)).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let res = admm_solve(&rigid.dataset, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let rigid_time = start.elapsed();
    let rigid_err = e3d(&res.s_est, rigid.dataset.s_gt.as_ref().unwrap(), &[]).map_err(|e| e.to_string())?.e3d;
    ensure!(rigid_err <= 0.02, "rigid scene e3d {rigid_err:.4} > 0.02");
    ensure!(rigid_time <= TIME_LIMIT, "rigid scene took {rigid_time:?}");
    Ok(format!(
        "e3d {err:.4} in {:.1}s, rigid e3d {rigid_err:.4} in {:.1}s",
        run.elapsed.as_secs_f64(),
        rigid_time.as_secs_f64()
    ))
}

fn convergence(run: &Standard) -> Outcome {
    let res = &run.result;
    ensure!(
        matches!(res.stop, StopReason::Converged | StopReason::RhoExceeded),
        "stopped by {:?} after {} iterations",
        res.stop,
        res.iterations()
    );
    ensure!(res.iterations() <= 300, "{} iterations", res.iterations());
    ensure!(res.records.len() >= 50, "only {} iterations recorded, gap(50) undefined", res.records.len());
    let (g5, g50) = (res.records[4].gap, res.records[49].gap);
    ensure!(g50 < g5, "gap(50) {g50:e} >= gap(5) {g5:e}");
    Ok(format!("{:?} after {} iterations, gap(5) {g5:.2e}, gap(50) {g50:.2e}", res.stop, res.iterations()))
}

fn noise(scene: &Scene) -> Outcome {
    let lambdas = [0.0, 0.01, 0.03, 0.055];
    let rows = noise_sweep(&scene.dataset, &SolverConfig::default(), &lambdas, &[0, 1, 2]).map_err(|e| e.to_string())?;
    let means = mean_by_lambda(&rows);
    ensure!(means.iter().all(|(_, e)| e.is_finite()), "non-finite error in {means:?}");
    let e: Vec<f64> = means.iter().map(|m| m.1).collect();
    // Trend: least-squares slope over the levels and no level below the clean run.
    let lm = lambdas.iter().sum::<f64>() / 4.0;
    let em = e.iter().sum::<f64>() / 4.0;
    let slope = lambdas.iter().zip(&e).map(|(l, v)| (l - lm) * (v - em)).sum::<f64>()
        / lambdas.iter().map(|l| (l - lm).powi(2)).sum::<f64>();
    let table = means.iter().map(|(l, v)| format!("{l}: {v:.4}")).collect::<Vec<_>>().join(", ");
    ensure!(slope > 0.0, "error does not grow with noise ({table})");
    ensure!(e[1..].iter().all(|&v| v >= e[0]), "a noisy level beats the clean run ({table})");
    ensure!(e[2] <= 3.0 * e[0] + 0.02, "e3d(0.03) {:.4} > 3 e3d(0) + 0.02 = {:.4}", e[2], 3.0 * e[0] + 0.02);
    Ok(format!("mean e3d {table}"))
}

fn grassfm(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_grassfm")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("grassfm {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data");
    let path = |p: &Path| p.to_str().unwrap().to_owned();
    grassfm(&["synth", "--seed", &SCENE_SEED.to_string(), "--out", &path(&data)])?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        grassfm(&["reconstruct", &path(&data), "--out", &path(&out), "--threads", "1"])?;
        let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| format!("{f}: {e}"));
        outputs.push((read("S_est.csv")?, read("diagnostics.json")?));
    }
    ensure!(outputs[0].0 == outputs[1].0, "S_est.csv differs between runs");
    ensure!(outputs[0].1 == outputs[1].1, "diagnostics.json differs between runs");
    Ok(format!("S_est.csv ({} bytes) and diagnostics.json ({} bytes) identical", outputs[0].0.len(), outputs[0].1.len()))
}

fn benchmark() -> Option<Outcome> {
    let dir = std::env::var_os("GRASSFM_BENCHMARK_DIR")?;
    let dir = Path::new(&dir);
    let run = || -> Outcome {
        let out = tempfile::tempdir().map_err(|e| e.to_string())?;
        let d = dir.to_str().ok_or("non-UTF-8 path")?;
        let o = out.path().to_str().ok_or("non-UTF-8 path")?;
        grassfm(&["reconstruct", d, "--out", o])?;
        let est = out.path().join("S_est.csv");
        let output = Command::new(env!("CARGO_BIN_EXE_grassfm"))
            .args(["eval", "--estimate", est.to_str().unwrap(), "--data", d])
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(output.status.success(), "eval failed: {}", String::from_utf8_lossy(&output.stderr));
        let report: serde_json::Value = serde_json::from_slice(&output.stdout).map_err(|e| e.to_string())?;
        let err = report["e3d"].as_f64().ok_or("eval reported no e3d")?;
        let reference = std::env::var("GRASSFM_BENCHMARK_REFERENCE").ok();
        Ok(match reference {
            Some(r) => format!("{}: e3d {err:.4} (reference {r})", dir.display()),
            None => format!("{}: e3d {err:.4}", dir.display()),
        })
    };
    Some(run())
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, outcome: Outcome| {
        match &outcome {
            Ok(detail) => println!("criterion {id} {name}: PASS ({detail})"),
            Err(detail) => {
                println!("criterion {id} {name}: FAIL ({detail})");
                failed += 1;
            }
        }
    };

    report(1, "geometry", geometry());
    report(2, "proximal operator", proximal());
    report(3, "linear algebra", linear_algebra());

    let standard = generate_scene(&SceneSpec::standard(SCENE_SEED)).map_err(|e| e.to_string()).and_then(|scene| {
        let start = Instant::now();
        let result = admm_solve(&scene.dataset, &SolverConfig::default()).map_err(|e| e.to_string())?;
        Ok(Standard { scene, result, elapsed: start.elapsed() })
    });
    match &standard {
        Ok(run) => {
            report(4, "clustering recovery", clustering(run));
            report(5, "end-to-end reconstruction", reconstruction(run));
            report(6, "convergence", convergence(run));
            report(7, "noise robustness", noise(&run.scene));
        }
        Err(e) => {
            for (id, name) in [(4, "clustering recovery"), (5, "end-to-end reconstruction"), (6, "convergence"), (7, "noise robustness")] {
                report(id, name, Err(format!("standard scene solve failed: {e}")));
            }
        }
    }
    report(8, "determinism", determinism());

    match benchmark() {
        None => println!("criterion 9 benchmark evaluation: SKIP (non-gating; set GRASSFM_BENCHMARK_DIR to run)"),
        Some(Ok(detail)) => println!("criterion 9 benchmark evaluation: LOGGED (non-gating; {detail})"),
        Some(Err(detail)) => println!("criterion 9 benchmark evaluation: LOGGED FAILURE (non-gating; {detail})"),
    }

    if failed == 0 {
        println!("acceptance: all gating criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} gating criteria failed");
        ExitCode::FAILURE
    }
}
