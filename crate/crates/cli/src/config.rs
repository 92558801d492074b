//! JSON run configurations. Every struct rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qsc_core::primal::SigmaMode;
use qsc_core::zoo::{MatrixKind, SyntheticSpec};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Synthetic {
        generator: SyntheticSpec,
    },
    /// CSV with one row `aᵢ, bᵢ` per line.
    Design {
        path: PathBuf,
        loss: DesignLoss,
        #[serde(default)]
        mu: Option<f64>,
    },
    /// Square nonnegative CSV matrix.
    Matrix {
        path: PathBuf,
        kind: MatrixKind,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignLoss {
    Logistic,
    Exponential,
    SoftMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompositeSpec {
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

fn grad_tol_default() -> f64 {
    1e-9
}
fn iters_default() -> usize {
    10_000
}
fn nu_default() -> f64 {
    1e-8
}
fn outer_default() -> usize {
    1000
}
fn inner_default() -> usize {
    50
}
fn one() -> f64 {
    1.0
}
fn epsilon_default() -> f64 {
    1e-6
}
fn warm_tol_default() -> f64 {
    1e-8
}
fn local_tol_default() -> f64 {
    1e-12
}
fn local_iters_default() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverSpec {
    Primal {
        /// Constant `σ = M` when absent.
        #[serde(default)]
        sigma: Option<SigmaMode>,
        #[serde(default = "grad_tol_default")]
        grad_tol: f64,
        #[serde(default = "iters_default")]
        max_iters: usize,
    },
    Dual {
        /// Declared constant when absent.
        #[serde(default)]
        m: Option<f64>,
        #[serde(default = "nu_default")]
        nu: f64,
        #[serde(default = "outer_default")]
        max_outer: usize,
        #[serde(default = "inner_default")]
        max_inner: usize,
    },
    Accelerated {
        /// Taken from the reference solve when absent.
        #[serde(default)]
        r: Option<f64>,
        #[serde(default = "one")]
        c: f64,
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default)]
        a0: Option<f64>,
        /// Overrides the reference optimal value.
        #[serde(default)]
        f_star: Option<f64>,
        #[serde(default = "epsilon_default")]
        epsilon: f64,
        #[serde(default = "iters_default")]
        max_iters: usize,
    },
    /// Steps with `σ = M` until `η ≤ 1/(18M)` (or `g ≤ warm_tol`), then steps with `σ = 0`.
    PureNewtonLocal {
        #[serde(default = "warm_tol_default")]
        warm_tol: f64,
        #[serde(default = "local_tol_default")]
        grad_tol: f64,
        #[serde(default = "local_iters_default")]
        max_iters: usize,
    },
}

impl SolverSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SolverSpec::Primal { .. } => "primal",
            SolverSpec::Dual { .. } => "dual",
            SolverSpec::Accelerated { .. } => "accelerated",
            SolverSpec::PureNewtonLocal { .. } => "pure_newton_local",
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyToggles {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Names of checks to leave out.
    #[serde(default)]
    pub skip: Vec<String>,
}

impl Default for VerifyToggles {
    fn default() -> Self {
        Self {
            enabled: true,
            skip: Vec::new(),
        }
    }
}

impl VerifyToggles {
    pub fn wants(&self, name: &str) -> bool {
        self.enabled && !self.skip.iter().any(|s| s == name)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

/// The instance part shared by every command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub problem: ProblemSpec,
    /// Adds `(s/2)‖x‖²` to the smooth part.
    #[serde(default)]
    pub ridge: Option<f64>,
    #[serde(default)]
    pub composite: Option<CompositeSpec>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Replaces the declared QSC constant.
    #[serde(default)]
    pub qsc_constant: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub instance: InstanceSpec,
    pub solver: SolverSpec,
    #[serde(default)]
    pub verify: VerifyToggles,
    #[serde(default)]
    pub output: OutputSpec,
}

fn samples_default() -> usize {
    10_000
}
fn pairs_default() -> usize {
    1000
}
fn fd_default() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub version: u32,
    pub instance: InstanceSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "samples_default")]
    pub samples: usize,
    #[serde(default = "pairs_default")]
    pub pairs: usize,
    #[serde(default = "fd_default")]
    pub fd_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedInstance {
    pub name: String,
    pub instance: InstanceSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub version: u32,
    pub instances: Vec<NamedInstance>,
    pub solvers: Vec<SolverSpec>,
    #[serde(default)]
    pub verify: VerifyToggles,
}

fn check_version(v: u32) -> Result<()> {
    if v == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(CliError::Config(format!("unsupported schema version {v}, expected {SCHEMA_VERSION}")))
    }
}

/// Reads a config and resolves relative data paths against the config's directory.
pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn resolve(instance: &mut InstanceSpec, base: Option<&Path>) {
    let Some(base) = base else { return };
    match &mut instance.problem {
        ProblemSpec::Design { path, .. } | ProblemSpec::Matrix { path, .. } if path.is_relative() => {
            *path = base.join(&*path);
        }
        _ => {}
    }
}

fn with_seed(instance: &mut InstanceSpec, seed: Option<u64>) {
    if let (Some(seed), ProblemSpec::Synthetic { generator }) = (seed, &mut instance.problem) {
        generator.seed = seed;
    }
}

pub fn load_run(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg: RunConfig = load(path)?;
    check_version(cfg.version)?;
    resolve(&mut cfg.instance, path.parent());
    with_seed(&mut cfg.instance, seed);
    Ok(cfg)
}

/// Path resolution and seed override for a bare instance read from `path`.
pub fn load_run_instance(path: &Path, mut instance: InstanceSpec, seed: Option<u64>) -> InstanceSpec {
    resolve(&mut instance, path.parent());
    with_seed(&mut instance, seed);
    instance
}

pub fn load_verify(path: &Path, seed: Option<u64>) -> Result<VerifyConfig> {
    let mut cfg: VerifyConfig = load(path)?;
    check_version(cfg.version)?;
    resolve(&mut cfg.instance, path.parent());
    if let Some(s) = seed {
        cfg.seed = s;
    }
    with_seed(&mut cfg.instance, seed);
    Ok(cfg)
}

pub fn load_benchmark(path: &Path, seed: Option<u64>) -> Result<BenchmarkConfig> {
    let mut cfg: BenchmarkConfig = load(path)?;
    check_version(cfg.version)?;
    if cfg.instances.is_empty() || cfg.solvers.is_empty() {
        return Err(CliError::Config("a benchmark needs at least one instance and one solver".into()));
    }
    for inst in &mut cfg.instances {
        resolve(&mut inst.instance, path.parent());
        with_seed(&mut inst.instance, seed);
    }
    Ok(cfg)
}
