//! Concrete oracles with analytic derivatives and certified QSC constants,
//! CSV ingestion and seeded synthetic instances.

mod io;
mod matrix;
mod quadratic;
mod separable;
mod softmax;

pub use io::{load_design_matrix, load_square_matrix, read_design_matrix, read_square_matrix, DesignData};
pub use matrix::{MatrixKind, MatrixProblem};
pub use quadratic::QuadraticProblem;
pub use separable::{sigmoid, LossKind, SeparableProblem, EXP_CLAMP};
pub use softmax::SoftMaxProblem;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{QscError, Result};
use crate::linalg::{DualVector, HessianOperator, MetricOperator, PrimalVector};
use crate::oracle::{Evaluation, SmoothOracle};

/// Relative ridge added to a singular Gram metric.
pub const GRAM_RIDGE: f64 = 1e-10;

/// `B = Σ aᵢaᵢᵀ`; when singular, `B + 1e-10·tr(B)/n·I`. Returns the ridge used.
pub(crate) fn gram_metric(rows: &DMatrix<f64>) -> Result<(MetricOperator, f64)> {
    let n = rows.ncols();
    if n == 0 {
        return Err(QscError::InvalidParameter("zero-dimensional design".into()));
    }
    let gram = rows.tr_mul(rows);
    if let Ok(b) = MetricOperator::new(gram.clone()) {
        return Ok((b, 0.0));
    }
    let ridge = GRAM_RIDGE * gram.trace().max(f64::MIN_POSITIVE) / n as f64;
    let b = MetricOperator::new(gram + DMatrix::identity(n, n) * ridge)?;
    Ok((b, ridge))
}

/// Any shipped problem, behind one type.
#[derive(Clone, Debug)]
pub enum ZooInstance {
    Quadratic(QuadraticProblem),
    SoftMax(SoftMaxProblem),
    Separable(SeparableProblem),
    Matrix(MatrixProblem),
}

impl ZooInstance {
    pub fn name(&self) -> &'static str {
        match self {
            ZooInstance::Quadratic(_) => "quadratic",
            ZooInstance::SoftMax(_) => "soft_max",
            ZooInstance::Separable(p) => match p.loss() {
                LossKind::Logistic => "logistic",
                LossKind::Exponential => "exponential",
            },
            ZooInstance::Matrix(p) => match p.kind() {
                MatrixKind::Scaling => "matrix_scaling",
                MatrixKind::Balancing => "matrix_balancing",
            },
        }
    }

    /// Ridge added to a singular default metric, zero otherwise.
    pub fn metric_ridge(&self) -> f64 {
        match self {
            ZooInstance::SoftMax(p) => p.metric_ridge(),
            ZooInstance::Separable(p) => p.metric_ridge(),
            _ => 0.0,
        }
    }

    fn oracle(&self) -> &dyn SmoothOracle {
        match self {
            ZooInstance::Quadratic(p) => p,
            ZooInstance::SoftMax(p) => p,
            ZooInstance::Separable(p) => p,
            ZooInstance::Matrix(p) => p,
        }
    }
}

impl SmoothOracle for ZooInstance {
    fn dim(&self) -> usize {
        self.oracle().dim()
    }
    fn value(&self, x: &PrimalVector) -> f64 {
        self.oracle().value(x)
    }
    fn gradient(&self, x: &PrimalVector) -> DualVector {
        self.oracle().gradient(x)
    }
    fn hessian(&self, x: &PrimalVector) -> HessianOperator {
        self.oracle().hessian(x)
    }
    fn qsc_constant(&self) -> f64 {
        self.oracle().qsc_constant()
    }
    fn metric(&self) -> &MetricOperator {
        self.oracle().metric()
    }
    fn evaluate(&self, x: &PrimalVector) -> Evaluation {
        self.oracle().evaluate(x)
    }
}

fn default_condition() -> f64 {
    10.0
}
fn default_one() -> f64 {
    1.0
}

/// Generator family and its conditioning knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticKind {
    /// Eigenvalues log-spaced in `[1/condition, 1]`.
    Quadratic {
        #[serde(default = "default_condition")]
        condition: f64,
    },
    /// Gaussian rows and offsets.
    SoftMax {
        #[serde(default = "default_one")]
        mu: f64,
    },
    /// Rows `−yᵢξᵢ` with Gaussian features; labels drawn from a logistic
    /// model (or its sign when `separable`). `signal` scales the planted weights.
    Logistic {
        #[serde(default)]
        separable: bool,
        #[serde(default = "default_one")]
        signal: f64,
    },
    Exponential {
        #[serde(default = "default_one")]
        signal: f64,
    },
    /// Log-normal positive entries with log-spread `spread`; uniform marginals.
    MatrixScaling {
        #[serde(default = "default_one")]
        spread: f64,
    },
    /// Log-normal positive off-diagonal entries, zero diagonal.
    MatrixBalancing {
        #[serde(default = "default_one")]
        spread: f64,
    },
}

impl SyntheticKind {
    /// Default knobs for a kind given by name.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "quadratic" => SyntheticKind::Quadratic {
                condition: default_condition(),
            },
            "soft_max" | "softmax" => SyntheticKind::SoftMax { mu: 1.0 },
            "logistic" => SyntheticKind::Logistic {
                separable: false,
                signal: 1.0,
            },
            "exponential" => SyntheticKind::Exponential { signal: 1.0 },
            "matrix_scaling" => SyntheticKind::MatrixScaling { spread: 1.0 },
            "matrix_balancing" => SyntheticKind::MatrixBalancing { spread: 1.0 },
            other => {
                return Err(QscError::InvalidParameter(format!(
                    "unknown problem kind {other:?}"
                )))
            }
        })
    }
}

/// Unknown keys are rejected by the flattened kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(flatten)]
    pub kind: SyntheticKind,
    pub n: usize,
    /// Number of rows; defaults to `10n`. Ignored by quadratic and matrix kinds.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, n: usize, m: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            m: Some(m),
            seed,
        }
    }

    pub fn rows(&self) -> usize {
        self.m.unwrap_or(10 * self.n)
    }
}

const MAX_REDRAWS: usize = 20;

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn gram_is_pd(rows: &DMatrix<f64>) -> bool {
    MetricOperator::new(rows.tr_mul(rows)).is_ok()
}

fn labelled_rows(rng: &mut ChaCha8Rng, m: usize, n: usize, separable: bool, signal: f64) -> DMatrix<f64> {
    let mut rows = DMatrix::zeros(m, n);
    for _ in 0..MAX_REDRAWS {
        let w: DVector<f64> = gaussian_matrix(rng, n, 1).column(0) * (signal / (n as f64).sqrt());
        let xi = gaussian_matrix(rng, m, n);
        for i in 0..m {
            let score = xi.row(i).dot(&w.transpose());
            let label = if separable {
                if score >= 0.0 { 1.0 } else { -1.0 }
            } else if rng.random::<f64>() < sigmoid(score) {
                1.0
            } else {
                -1.0
            };
            rows.set_row(i, &(xi.row(i) * -label));
        }
        if gram_is_pd(&rows) {
            break;
        }
    }
    rows
}

fn lognormal_matrix(rng: &mut ChaCha8Rng, n: usize, spread: f64, zero_diagonal: bool) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let z: f64 = StandardNormal.sample(rng);
        if zero_diagonal && i == j {
            0.0
        } else {
            (spread * z).exp()
        }
    })
}

/// Deterministic instance for a fixed spec.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<ZooInstance> {
    let n = spec.n;
    let m = spec.rows();
    if n == 0 || m == 0 {
        return Err(QscError::InvalidParameter("n and m must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(match spec.kind {
        SyntheticKind::Quadratic { condition } => {
            if !(condition >= 1.0) {
                return Err(QscError::InvalidParameter("condition must be ≥ 1".into()));
            }
            let q = gaussian_matrix(&mut rng, n, n).qr().q();
            let diag = DVector::from_fn(n, |i, _| {
                let s = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                condition.powf(-s)
            });
            let a = &q * DMatrix::from_diagonal(&diag) * q.transpose();
            let b = gaussian_matrix(&mut rng, n, 1).column(0).into_owned();
            ZooInstance::Quadratic(QuadraticProblem::new(a, b, MetricOperator::identity(n))?)
        }
        SyntheticKind::SoftMax { mu } => {
            let mut rows = gaussian_matrix(&mut rng, m, n);
            for _ in 0..MAX_REDRAWS {
                if gram_is_pd(&rows) {
                    break;
                }
                rows = gaussian_matrix(&mut rng, m, n);
            }
            let b = gaussian_matrix(&mut rng, m, 1).column(0).into_owned();
            ZooInstance::SoftMax(SoftMaxProblem::new(rows, b, mu)?)
        }
        SyntheticKind::Logistic { separable, signal } => {
            let rows = labelled_rows(&mut rng, m, n, separable, signal);
            ZooInstance::Separable(SeparableProblem::new(rows, DVector::zeros(m), LossKind::Logistic)?)
        }
        SyntheticKind::Exponential { signal } => {
            let rows = labelled_rows(&mut rng, m, n, false, signal);
            ZooInstance::Separable(SeparableProblem::new(rows, DVector::zeros(m), LossKind::Exponential)?)
        }
        SyntheticKind::MatrixScaling { spread } => {
            let a = lognormal_matrix(&mut rng, n, spread, false);
            let mass = DVector::from_element(n, a.sum() / n as f64);
            ZooInstance::Matrix(MatrixProblem::scaling(a)?.with_marginals(&mass, &mass)?)
        }
        SyntheticKind::MatrixBalancing { spread } => {
            let a = lognormal_matrix(&mut rng, n, spread, n > 1);
            ZooInstance::Matrix(MatrixProblem::balancing(a)?)
        }
    })
}
