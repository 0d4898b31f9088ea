//! Flat TOML run configuration, overridden by command-line flags.

use std::path::Path;

use clap::Args;
use grassfm_core::io::Meta;
use grassfm_core::SolverConfig;
use serde::Deserialize;

pub const CONFIG_KEYS: &str = "\
Configuration keys (TOML file via --config, flags take precedence):
  beta1              self-representation weight            [default: 1]
  beta2              nuclear-norm weight on S#             [default: 0.5 * rms(W)]
  beta3              nuclear-norm weight on Z              [default: 0.1]
  rho0               initial penalty                       [default: 0.01]
  rho_max            penalty cap                           [default: 1e8]
  eps                stopping tolerance on the primal gap  [default: 1e-10]
  c                  penalty growth factor                 [default: 1.1]
  K                  number of groups                      [default: meta.json groups, else 6]
  p                  subspace dimension per group          [default: meta.json subspace_dim, else 3]
  d_tilde            projection dimension                  [default: max(2p, 12), at most 3F]
  max_iter           iteration cap                         [default: 300]
  seed               random seed                           [default: 0]
  threads            worker threads, 0 = all cores         [default: 0]
  projection_stride  refit the projection every n iters    [default: 1]";

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub beta3: Option<f64>,
    pub rho0: Option<f64>,
    pub rho_max: Option<f64>,
    pub eps: Option<f64>,
    pub c: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub p: Option<usize>,
    pub d_tilde: Option<usize>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub projection_stride: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    /// TOML file with any of the keys listed below
    #[arg(long, value_name = "PATH")]
    pub config: Option<std::path::PathBuf>,
    /// Random seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, 0 = all cores [default: 0]
    #[arg(long)]
    pub threads: Option<usize>,
    /// Iteration cap [default: 300]
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Self-representation weight [default: 1]
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Nuclear-norm weight on S# [default: 0.5 * rms(W)]
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Nuclear-norm weight on Z [default: 0.1]
    #[arg(long)]
    pub beta3: Option<f64>,
    /// Initial penalty [default: 0.01]
    #[arg(long)]
    pub rho0: Option<f64>,
    /// Penalty cap [default: 1e8]
    #[arg(long = "rho-max")]
    pub rho_max: Option<f64>,
    /// Stopping tolerance on the primal gap [default: 1e-10]
    #[arg(long)]
    pub eps: Option<f64>,
    /// Penalty growth factor [default: 1.1]
    #[arg(long = "c")]
    pub growth: Option<f64>,
    /// Number of groups [default: meta.json groups, else 6]
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Subspace dimension per group [default: meta.json subspace_dim, else 3]
    #[arg(long = "p")]
    pub p: Option<usize>,
    /// Projection dimension [default: max(2p, 12), at most 3F]
    #[arg(long = "d-tilde")]
    pub d_tilde: Option<usize>,
    /// Refit the projection every n iterations [default: 1]
    #[arg(long = "projection-stride")]
    pub projection_stride: Option<usize>,
}

/// Resolved settings: defaults, then `meta.json`, then the file, then flags.
pub fn resolve(args: &SolverArgs, meta: Option<&Meta>) -> Result<(SolverConfig, usize), String> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut cfg = SolverConfig::default();
    if let Some(m) = meta {
        cfg.k = m.groups.unwrap_or(cfg.k);
        cfg.p = m.subspace_dim.unwrap_or(cfg.p);
    }
    macro_rules! layer {
        ($field:ident, $file:ident, $flag:ident) => {
            if let Some(v) = args.$flag.or(file.$file) {
                cfg.$field = v;
            }
        };
    }
    layer!(beta1, beta1, beta1);
    layer!(beta3, beta3, beta3);
    layer!(rho0, rho0, rho0);
    layer!(rho_max, rho_max, rho_max);
    layer!(eps, eps, eps);
    layer!(growth, c, growth);
    layer!(k, k, k);
    layer!(p, p, p);
    layer!(max_iter, max_iter, max_iter);
    layer!(seed, seed, seed);
    layer!(projection_stride, projection_stride, projection_stride);
    if let Some(v) = args.beta2.or(file.beta2) {
        cfg.beta2 = Some(v);
    }
    if let Some(v) = args.d_tilde.or(file.d_tilde) {
        cfg.d_tilde = Some(v);
    }
    let threads = args.threads.or(file.threads).unwrap_or(0);
    Ok((cfg, threads))
}
