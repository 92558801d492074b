use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_dim, QscError, Result};
use crate::linalg::{symmetrize, DualVector, HessianOperator, MetricOperator, PrimalVector};
use crate::oracle::{Evaluation, SmoothOracle};

/// `f(x) = ½⟨Ax, x⟩ − ⟨b, x⟩` with `A ⪰ 0`; `M = 0`.
#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    a: DMatrix<f64>,
    b: DualVector,
    metric: MetricOperator,
}

impl QuadraticProblem {
    pub fn new(a: DMatrix<f64>, b: DualVector, metric: MetricOperator) -> Result<Self> {
        check_dim(a.nrows(), a.ncols())?;
        check_dim(a.nrows(), b.len())?;
        check_dim(a.nrows(), metric.dim())?;
        let a = symmetrize(&a);
        let eig = SymmetricEigen::new(a.clone()).eigenvalues;
        let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().copied().fold(0.0f64, |m, v| m.max(v.abs()));
        if lo < -1e-10 * hi.max(1.0) {
            return Err(QscError::NotPositiveSemidefinite { eigenvalue: lo });
        }
        Ok(Self { a, b, metric })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn linear(&self) -> &DualVector {
        &self.b
    }

    /// `A⁻¹b` when `A` is positive definite.
    pub fn minimizer(&self) -> Option<PrimalVector> {
        self.a.clone().cholesky().map(|c| c.solve(&self.b))
    }
}

impl SmoothOracle for QuadraticProblem {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn value(&self, x: &PrimalVector) -> f64 {
        0.5 * x.dot(&(&self.a * x)) - self.b.dot(x)
    }
    fn gradient(&self, x: &PrimalVector) -> DualVector {
        &self.a * x - &self.b
    }
    fn hessian(&self, _x: &PrimalVector) -> HessianOperator {
        self.a.clone()
    }
    fn qsc_constant(&self) -> f64 {
        0.0
    }
    fn metric(&self) -> &MetricOperator {
        &self.metric
    }
    fn evaluate(&self, x: &PrimalVector) -> Evaluation {
        let ax = &self.a * x;
        Evaluation {
            value: 0.5 * x.dot(&ax) - self.b.dot(x),
            gradient: ax - &self.b,
            hessian: self.a.clone(),
            overflow: false,
        }
    }
}
