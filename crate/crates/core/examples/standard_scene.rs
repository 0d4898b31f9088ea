//! Solves the standard synthetic scene and prints the headline numbers.
//!
//! `cargo run --release -p grassfm-core --example standard_scene -- [seed] [amp] [lambda]`

use std::time::Instant;

use grassfm_core::eval::{e3d, label_accuracy};
use grassfm_core::grassmann::{grassmann_from_block, principal_angles};
use grassfm_core::linalg::select_columns;
use grassfm_core::solver::admm_solve;
use grassfm_core::synth::{generate_scene, noisy_dataset, SceneSpec};
use grassfm_core::SolverConfig;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let amp: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let lambda: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.0);

    let scene = generate_scene(&SceneSpec { deform_amp: amp, ..SceneSpec::standard(seed) }).unwrap();
    let gt = scene.dataset.s_gt.clone().unwrap();

    let bases: Vec<_> = (0..6)
        .map(|g| {
            let idx: Vec<usize> = (0..gt.ncols()).filter(|&j| scene.labels[j] == g).collect();
            grassmann_from_block(&select_columns(&gt, &idx), 3).unwrap().point
        })
        .collect();
    let mut min_largest = f64::INFINITY;
    for i in 0..6 {
        for j in i + 1..6 {
            let ang = principal_angles(&bases[i], &bases[j]).unwrap();
            min_largest = min_largest.min(*ang.last().unwrap());
        }
    }
    println!("smallest pairwise largest principal angle: {:.1} deg", min_largest.to_degrees());

    let ds = noisy_dataset(&scene.dataset, lambda, 1000 + seed).unwrap();
    let start = Instant::now();
    let res = admm_solve(&ds, &SolverConfig::default()).unwrap();
    let err = e3d(&res.s_est, &gt, &[]).unwrap();
    let gap = |i: usize| res.records.get(i).map(|r| r.gap).unwrap_or(f64::NAN);
    println!(
        "e3d {:.4}  acc {:.3} (init {:.3})  iters {}  stop {:?}  gap5 {:.2e}  gap50 {:.2e}  beta2 {:.3}  {:.1}s",
        err.e3d,
        label_accuracy(&res.labels, &scene.labels).unwrap(),
        label_accuracy(&res.init_labels, &scene.labels).unwrap(),
        res.iterations(),
        res.stop,
        gap(4),
        gap(49),
        res.beta2,
        start.elapsed().as_secs_f64()
    );
}
