use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::separable::EXP_CLAMP;
use crate::error::{check_dim, QscError, Result};
use crate::linalg::{DualVector, HessianOperator, MetricOperator, PrimalVector};
use crate::oracle::{Evaluation, SmoothOracle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    /// Variables `(x, y) ∈ ℝ²ⁿ`, exponents `xᵢ − yⱼ`.
    Scaling,
    /// Variables `x ∈ ℝⁿ`, exponents `xᵢ − xⱼ`.
    Balancing,
}

#[derive(Clone, Copy, Debug)]
struct Term {
    weight: f64,
    plus: usize,
    minus: usize,
}

/// `f(z) = Σ A⁽ⁱʲ⁾ exp(⟨ℓᵢⱼ, z⟩) + ⟨c, z⟩` with `ℓ` a difference of two unit
/// vectors, so `M = √2` in the Euclidean norm.
#[derive(Clone, Debug)]
pub struct MatrixProblem {
    kind: MatrixKind,
    source: DMatrix<f64>,
    terms: Vec<Term>,
    constant: f64,
    linear: DualVector,
    metric: MetricOperator,
}

impl MatrixProblem {
    pub fn new(kind: MatrixKind, a: DMatrix<f64>) -> Result<Self> {
        check_dim(a.nrows(), a.ncols())?;
        let n = a.nrows();
        if n == 0 {
            return Err(QscError::InvalidParameter("empty matrix".into()));
        }
        if a.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(QscError::InvalidParameter(
                "matrix entries must be finite and nonnegative".into(),
            ));
        }
        let dim = match kind {
            MatrixKind::Scaling => 2 * n,
            MatrixKind::Balancing => n,
        };
        let mut terms = Vec::new();
        let mut constant = 0.0;
        for i in 0..n {
            for j in 0..n {
                let w = a[(i, j)];
                if w == 0.0 {
                    continue;
                }
                let (plus, minus) = match kind {
                    MatrixKind::Scaling => (i, n + j),
                    MatrixKind::Balancing => (i, j),
                };
                if plus == minus {
                    constant += w;
                } else {
                    terms.push(Term {
                        weight: w,
                        plus,
                        minus,
                    });
                }
            }
        }
        Ok(Self {
            kind,
            source: a,
            terms,
            constant,
            linear: DualVector::zeros(dim),
            metric: MetricOperator::identity(dim),
        })
    }

    pub fn scaling(a: DMatrix<f64>) -> Result<Self> {
        Self::new(MatrixKind::Scaling, a)
    }

    pub fn balancing(a: DMatrix<f64>) -> Result<Self> {
        Self::new(MatrixKind::Balancing, a)
    }

    /// Adds `−⟨r, x⟩ + ⟨c, y⟩` so that the minimizer scales `A` to row sums `r`
    /// and column sums `c`. Requires `Σr = Σc`.
    pub fn with_marginals(mut self, rows: &DualVector, cols: &DualVector) -> Result<Self> {
        if self.kind != MatrixKind::Scaling {
            return Err(QscError::InvalidParameter(
                "marginals only apply to matrix scaling".into(),
            ));
        }
        let n = self.source.nrows();
        check_dim(n, rows.len())?;
        check_dim(n, cols.len())?;
        let (sr, sc) = (rows.sum(), cols.sum());
        if (sr - sc).abs() > 1e-12 * sr.abs().max(1.0) {
            return Err(QscError::InvalidParameter(format!(
                "marginal sums differ: {sr} vs {sc}"
            )));
        }
        for i in 0..n {
            self.linear[i] = -rows[i];
            self.linear[n + i] = cols[i];
        }
        Ok(self)
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn source(&self) -> &DMatrix<f64> {
        &self.source
    }

    pub fn linear(&self) -> &DualVector {
        &self.linear
    }

    fn term_weights(&self, z: &PrimalVector) -> (Vec<f64>, bool) {
        let mut overflow = false;
        let w = self
            .terms
            .iter()
            .map(|t| {
                let e = z[t.plus] - z[t.minus];
                overflow |= e > EXP_CLAMP;
                t.weight * e.min(EXP_CLAMP).exp()
            })
            .collect();
        (w, overflow)
    }

    fn gradient_from(&self, w: &[f64]) -> DualVector {
        let mut g = self.linear.clone();
        for (t, &wt) in self.terms.iter().zip(w) {
            g[t.plus] += wt;
            g[t.minus] -= wt;
        }
        g
    }

    fn hessian_from(&self, w: &[f64]) -> HessianOperator {
        let n = self.linear.len();
        let mut h = DMatrix::zeros(n, n);
        for (t, &wt) in self.terms.iter().zip(w) {
            h[(t.plus, t.plus)] += wt;
            h[(t.minus, t.minus)] += wt;
            h[(t.plus, t.minus)] -= wt;
            h[(t.minus, t.plus)] -= wt;
        }
        h
    }
}

impl SmoothOracle for MatrixProblem {
    fn dim(&self) -> usize {
        self.linear.len()
    }
    fn value(&self, x: &PrimalVector) -> f64 {
        let (w, _) = self.term_weights(x);
        self.constant + w.iter().sum::<f64>() + self.linear.dot(x)
    }
    fn gradient(&self, x: &PrimalVector) -> DualVector {
        self.gradient_from(&self.term_weights(x).0)
    }
    fn hessian(&self, x: &PrimalVector) -> HessianOperator {
        self.hessian_from(&self.term_weights(x).0)
    }
    fn qsc_constant(&self) -> f64 {
        std::f64::consts::SQRT_2
    }
    fn metric(&self) -> &MetricOperator {
        &self.metric
    }
    fn evaluate(&self, x: &PrimalVector) -> Evaluation {
        let (w, overflow) = self.term_weights(x);
        Evaluation {
            value: self.constant + w.iter().sum::<f64>() + self.linear.dot(x),
            gradient: self.gradient_from(&w),
            hessian: self.hessian_from(&w),
            overflow,
        }
    }
}
