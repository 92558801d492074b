use std::path::Path;

use sha2::{Digest, Sha256};

use qsc_core::oracle::{with_qsc_constant, with_ridge};
use qsc_core::zoo::{
    generate_synthetic, load_design_matrix, load_square_matrix, LossKind, MatrixProblem, SeparableProblem,
    SoftMaxProblem,
};
use qsc_core::{CompositeTerm, PrimalVector, SmoothOracle};

use crate::config::{CompositeSpec, DesignLoss, InstanceSpec, ProblemSpec};
use crate::error::{CliError, Result};

pub type DynOracle = Box<dyn SmoothOracle + Send + Sync>;

/// A ready-to-solve instance.
pub struct Problem {
    pub name: String,
    pub oracle: DynOracle,
    pub psi: CompositeTerm,
    pub x0: PrimalVector,
    /// SHA-256 of the data file, when the problem was loaded from disk.
    pub data_hash: Option<String>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dim", &self.oracle.dim())
            .field("m", &self.oracle.qsc_constant())
            .finish()
    }
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read data file {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn base_oracle(spec: &ProblemSpec) -> Result<(String, DynOracle, Option<String>)> {
    Ok(match spec {
        ProblemSpec::Synthetic { generator } => {
            let inst = generate_synthetic(generator)?;
            (inst.name().to_string(), Box::new(inst), None)
        }
        ProblemSpec::Design { path, loss, mu } => {
            let hash = file_hash(path)?;
            let data = load_design_matrix(path)?;
            let oracle: DynOracle = match loss {
                DesignLoss::Logistic => Box::new(SeparableProblem::new(data.rows, data.offsets, LossKind::Logistic)?),
                DesignLoss::Exponential => {
                    Box::new(SeparableProblem::new(data.rows, data.offsets, LossKind::Exponential)?)
                }
                DesignLoss::SoftMax => {
                    let mu = mu.ok_or_else(|| CliError::Config("soft_max needs mu".into()))?;
                    Box::new(SoftMaxProblem::new(data.rows, data.offsets, mu)?)
                }
            };
            let name = match loss {
                DesignLoss::Logistic => "logistic",
                DesignLoss::Exponential => "exponential",
                DesignLoss::SoftMax => "soft_max",
            };
            (name.to_string(), oracle, Some(hash))
        }
        ProblemSpec::Matrix { path, kind } => {
            let hash = file_hash(path)?;
            let a = load_square_matrix(path)?;
            let p = MatrixProblem::new(*kind, a)?;
            let name = match kind {
                qsc_core::zoo::MatrixKind::Scaling => "matrix_scaling",
                qsc_core::zoo::MatrixKind::Balancing => "matrix_balancing",
            };
            (name.to_string(), Box::new(p), Some(hash))
        }
    })
}

pub fn build(spec: &InstanceSpec) -> Result<Problem> {
    let (mut name, mut oracle, data_hash) = base_oracle(&spec.problem)?;
    if let Some(s) = spec.ridge {
        oracle = Box::new(with_ridge(oracle, s)?);
        name.push_str("+ridge");
    }
    if let Some(m) = spec.qsc_constant {
        oracle = Box::new(with_qsc_constant(oracle, m)?);
    }
    let n = oracle.dim();
    let psi = match &spec.composite {
        None => CompositeTerm::zero(),
        Some(CompositeSpec::Box { lower, upper }) => {
            if lower.len() != n || upper.len() != n {
                return Err(CliError::Config(format!("box bounds must have length {n}")));
            }
            CompositeTerm::boxed(PrimalVector::from_column_slice(lower), PrimalVector::from_column_slice(upper))?
        }
    };
    let x0 = match &spec.x0 {
        Some(v) if v.len() != n => return Err(CliError::Config(format!("x0 must have length {n}, got {}", v.len()))),
        Some(v) => PrimalVector::from_column_slice(v),
        None => psi.project(&PrimalVector::zeros(n)),
    };
    if !psi.contains(&x0) {
        return Err(CliError::Config("x0 lies outside the composite domain".into()));
    }
    Ok(Problem {
        name,
        oracle,
        psi,
        x0,
        data_hash,
    })
}
