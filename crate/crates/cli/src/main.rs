use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use grassfm_core::eval::{e3d, label_accuracy};
use grassfm_core::io::{self, Meta};
use grassfm_core::solver::Solver;
use grassfm_core::sweep::{mean_by_lambda, noise_sweep, write_sweep_csv};
use grassfm_core::synth::{generate_scene, noisy_dataset, SceneSpec};
use grassfm_core::Error;
use serde_json::json;

mod config;

use config::{resolve, SolverArgs, CONFIG_KEYS};

#[derive(Debug, Parser)]
#[command(name = "grassfm", version, about = "Non-rigid structure from motion by Grassmannian subspace clustering")]
#[command(after_help = CONFIG_KEYS)]
struct Cli {
    /// Print progress to stderr
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory
    Synth(SynthArgs),
    /// Estimate the 3D shape of a dataset
    #[command(after_help = CONFIG_KEYS)]
    Reconstruct(ReconstructArgs),
    /// Compare an estimate with the ground truth
    Eval(EvalArgs),
    /// Reconstruction error over a range of noise levels
    #[command(name = "sweep-noise", after_help = CONFIG_KEYS)]
    SweepNoise(SweepArgs),
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    /// Number of frames
    #[arg(long = "F", default_value_t = 30)]
    frames: usize,
    /// Number of points
    #[arg(long = "P", default_value_t = 600)]
    points: usize,
    /// Number of patches
    #[arg(long = "K", default_value_t = 6)]
    groups: usize,
    /// Rank of each patch's trajectories
    #[arg(long = "p", default_value_t = 3)]
    subspace_dim: usize,
    /// Deformation amplitude relative to the surface scale
    #[arg(long = "deform-amp", default_value_t = 0.5)]
    deform_amp: f64,
    /// Camera cone half-angle in degrees
    #[arg(long = "rot-range", default_value_t = 30.0)]
    rot_range: f64,
    /// Measurement noise level lambda, sigma = lambda * max|W|
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct ReconstructArgs {
    /// Dataset directory
    data: PathBuf,
    /// Output directory [default: the dataset directory]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Record wall-clock seconds in diagnostics.json
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    /// Estimated shape, 3F x P
    #[arg(long, value_name = "PATH")]
    estimate: PathBuf,
    /// Dataset directory holding S_gt.csv
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Estimated labels [default: labels.csv next to the estimate, if present]
    #[arg(long, value_name = "PATH")]
    labels: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct SweepArgs {
    /// Dataset directory with ground truth
    data: PathBuf,
    /// Noise levels
    #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.03,0.055")]
    lambdas: Vec<f64>,
    /// Noise seeds
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// Output directory for sweep.csv [default: the dataset directory]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn set_threads(n: usize) -> CmdResult {
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot configure {n} threads: {e}")))?;
    }
    Ok(())
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serialisable"));
}

fn synth(args: &SynthArgs) -> CmdResult {
    let spec = SceneSpec {
        frames: args.frames,
        points: args.points,
        groups: args.groups,
        subspace_dim: args.subspace_dim,
        deform_amp: args.deform_amp,
        rot_range_deg: args.rot_range,
        seed: args.seed,
        ..SceneSpec::standard(args.seed)
    };
    let scene = generate_scene(&spec)?;
    let ds = noisy_dataset(&scene.dataset, args.noise, args.seed.wrapping_add(1))?;
    let meta = Meta {
        frames: args.frames,
        points: args.points,
        groups: Some(args.groups),
        subspace_dim: Some(args.subspace_dim),
    };
    io::save_dataset(&args.out, &ds, &meta, Some(&scene.labels))?;
    print_json(&json!({ "out": args.out, "frames": args.frames, "points": args.points, "groups": args.groups }));
    Ok(())
}

fn reconstruct(args: &ReconstructArgs, verbose: bool) -> CmdResult {
    let (ds, meta) = io::load_dataset(&args.data)?;
    let (cfg, threads) = resolve(&args.solver, Some(&meta)).map_err(Failure::Usage)?;
    set_threads(threads)?;
    let mut solver = Solver::new(&ds, cfg)?;
    while solver.step()?.is_none() {
        if verbose {
            if let Some(r) = solver.records().last() {
                eprintln!("iter {:4}  gap {:.3e}  rho {:.3e}  reproj {:.3e}", r.iter, r.gap, r.rho, r.reproj);
            }
        }
    }
    let result = solver.finish();
    let out = args.out.clone().unwrap_or_else(|| args.data.clone());
    io::save_result(&out, &result, args.timings)?;
    let last = result.records.last();
    print_json(&json!({
        "out": out,
        "iterations": result.iterations(),
        "stop": result.stop,
        "gap": last.map(|r| r.gap),
        "reproj": last.map(|r| r.reproj),
        "beta2": result.beta2,
    }));
    Ok(())
}

fn eval(args: &EvalArgs) -> CmdResult {
    let gt_path = args.data.join(io::S_GT_FILE);
    if !gt_path.is_file() {
        return Err(Error::MissingFile { what: "ground-truth shape", path: gt_path }.into());
    }
    if !args.estimate.is_file() {
        return Err(Error::MissingFile { what: "estimate", path: args.estimate.clone() }.into());
    }
    let gt = io::read_matrix_csv(&gt_path)?;
    let est = io::read_matrix_csv(&args.estimate)?;
    let mut report = e3d(&est, &gt, &[])?;
    let labels_path = match &args.labels {
        Some(p) => {
            if !p.is_file() {
                return Err(Error::MissingFile { what: "labels", path: p.clone() }.into());
            }
            Some(p.clone())
        }
        None => args
            .estimate
            .parent()
            .map(|d| d.join(io::LABELS_FILE))
            .filter(|p| p.is_file()),
    };
    if let (Some(lp), Some(gt_labels)) = (labels_path, io::load_gt_labels(&args.data)?) {
        report.label_accuracy = Some(label_accuracy(&io::read_labels(&lp)?, &gt_labels)?);
    }
    print_json(&serde_json::to_value(&report).expect("serialisable"));
    Ok(())
}

fn sweep(args: &SweepArgs, verbose: bool) -> CmdResult {
    let (ds, meta) = io::load_dataset(&args.data)?;
    if ds.s_gt.is_none() {
        return Err(Error::MissingFile { what: "ground-truth shape", path: args.data.join(io::S_GT_FILE) }.into());
    }
    let (cfg, threads) = resolve(&args.solver, Some(&meta)).map_err(Failure::Usage)?;
    set_threads(threads)?;
    let rows = noise_sweep(&ds, &cfg, &args.lambdas, &args.seeds)?;
    if verbose {
        for r in &rows {
            eprintln!("lambda {:<6} seed {:<3} e3d {:.4e} iters {}", r.lambda, r.seed, r.e3d, r.iters);
        }
    }
    let out = args.out.clone().unwrap_or_else(|| args.data.clone());
    std::fs::create_dir_all(&out).map_err(Error::from)?;
    let path = out.join("sweep.csv");
    write_sweep_csv(&path, &rows)?;
    let means: Vec<_> = mean_by_lambda(&rows).into_iter().map(|(l, e)| json!({ "lambda_g": l, "e3d": e })).collect();
    print_json(&json!({ "out": path, "mean_e3d": means }));
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Reconstruct(a) => reconstruct(a, cli.verbose),
        Command::Eval(a) => eval(a),
        Command::SweepNoise(a) => sweep(a, cli.verbose),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
