use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::gram_metric;
use crate::error::{check_dim, Result};
use crate::linalg::{DualVector, HessianOperator, MetricOperator, PrimalVector};
use crate::oracle::{Evaluation, SmoothOracle};

/// Exponents above this are clamped and the evaluation is flagged.
pub const EXP_CLAMP: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `ln(1 + eᵗ)`
    Logistic,
    /// `eᵗ`
    Exponential,
}

/// `1/(1 + e^{−t})` without overflow for either sign of `t`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

impl LossKind {
    /// `(φ(t), φ′(t), φ″(t), clamped)`
    fn derivatives(self, t: f64) -> (f64, f64, f64, bool) {
        match self {
            LossKind::Logistic => {
                let s = sigmoid(t);
                (softplus(t), s, s * sigmoid(-t), false)
            }
            LossKind::Exponential => {
                let clamped = t > EXP_CLAMP;
                let e = t.min(EXP_CLAMP).exp();
                (e, e, e, clamped)
            }
        }
    }
}

/// `f(x) = (1/m) Σᵢ φ(⟨aᵢ, x⟩ − bᵢ)` under `B = Σ aᵢaᵢᵀ`, `M = 1`.
#[derive(Clone, Debug)]
pub struct SeparableProblem {
    rows: DMatrix<f64>,
    offsets: DualVector,
    loss: LossKind,
    metric: MetricOperator,
    metric_ridge: f64,
}

impl SeparableProblem {
    pub fn new(rows: DMatrix<f64>, offsets: DualVector, loss: LossKind) -> Result<Self> {
        check_dim(rows.nrows(), offsets.len())?;
        let (metric, metric_ridge) = gram_metric(&rows)?;
        Ok(Self {
            rows,
            offsets,
            loss,
            metric,
            metric_ridge,
        })
    }

    pub fn with_metric(mut self, metric: MetricOperator) -> Result<Self> {
        check_dim(self.rows.ncols(), metric.dim())?;
        self.metric = metric;
        self.metric_ridge = 0.0;
        Ok(self)
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn offsets(&self) -> &DualVector {
        &self.offsets
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn metric_ridge(&self) -> f64 {
        self.metric_ridge
    }

    fn margins(&self, x: &PrimalVector) -> DualVector {
        &self.rows * x - &self.offsets
    }

    fn hessian_from(&self, curv: &DualVector) -> HessianOperator {
        let mut s = self.rows.clone();
        for (i, mut row) in s.row_iter_mut().enumerate() {
            row *= curv[i].sqrt();
        }
        s.tr_mul(&s)
    }
}

impl SmoothOracle for SeparableProblem {
    fn dim(&self) -> usize {
        self.rows.ncols()
    }
    fn value(&self, x: &PrimalVector) -> f64 {
        let m = self.rows.nrows() as f64;
        self.margins(x).iter().map(|&t| self.loss.derivatives(t).0).sum::<f64>() / m
    }
    fn gradient(&self, x: &PrimalVector) -> DualVector {
        let m = self.rows.nrows() as f64;
        let d = self.margins(x).map(|t| self.loss.derivatives(t).1 / m);
        self.rows.tr_mul(&d)
    }
    fn hessian(&self, x: &PrimalVector) -> HessianOperator {
        let m = self.rows.nrows() as f64;
        let c = self.margins(x).map(|t| self.loss.derivatives(t).2 / m);
        self.hessian_from(&c)
    }
    fn qsc_constant(&self) -> f64 {
        1.0
    }
    fn metric(&self) -> &MetricOperator {
        &self.metric
    }
    fn evaluate(&self, x: &PrimalVector) -> Evaluation {
        let m = self.rows.nrows() as f64;
        let t = self.margins(x);
        let mut value = 0.0;
        let mut overflow = false;
        let mut d1 = DualVector::zeros(t.len());
        let mut d2 = DualVector::zeros(t.len());
        for (i, &ti) in t.iter().enumerate() {
            let (v, g, h, c) = self.loss.derivatives(ti);
            value += v;
            d1[i] = g / m;
            d2[i] = h / m;
            overflow |= c;
        }
        Evaluation {
            value: value / m,
            gradient: self.rows.tr_mul(&d1),
            hessian: self.hessian_from(&d2),
            overflow,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_generalized_eigenvalue;
    use crate::oracle::{check_gradient, check_hessian};
    use approx::assert_relative_eq;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_rows(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn sigmoid_is_branch_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_relative_eq!(sigmoid(-30.0), (-30f64).exp() / (1.0 + (-30f64).exp()), max_relative = 1e-14);
        assert_relative_eq!(sigmoid(2.0) + sigmoid(-2.0), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn logistic_zero_margin_curvature() {
        let rows = random_rows(6, 3, 1);
        let p = SeparableProblem::new(rows.clone(), DualVector::zeros(6), LossKind::Logistic).unwrap();
        let h = p.hessian(&dvector![0.0, 0.0, 0.0]);
        let expected = rows.tr_mul(&rows) / (4.0 * 6.0);
        assert_relative_eq!(h, expected, max_relative = 1e-12);
    }

    #[test]
    fn exponential_at_origin() {
        let p = SeparableProblem::new(random_rows(5, 2, 2), DualVector::zeros(5), LossKind::Exponential).unwrap();
        assert_relative_eq!(p.value(&dvector![0.0, 0.0]), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn exponential_flags_overflow() {
        let p = SeparableProblem::new(DMatrix::from_element(1, 1, 1.0), dvector![0.0], LossKind::Exponential).unwrap();
        let e = p.evaluate(&dvector![800.0]);
        assert!(e.overflow);
        assert!(e.value.is_finite());
        assert!(!p.evaluate(&dvector![10.0]).overflow);
    }

    #[test]
    fn derivatives_match_differences() {
        let rows = random_rows(40, 4, 3);
        let p = SeparableProblem::new(rows, DualVector::from_element(40, 0.1), LossKind::Logistic).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let x = DualVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
            assert!(check_gradient(&p, &x, 1e-5).unwrap() <= 1e-6);
            assert!(check_hessian(&p, &x, 1e-5).unwrap() <= 1e-5);
        }
    }

    #[test]
    fn logistic_curvature_is_at_most_a_quarter() {
        let rows = random_rows(30, 4, 5);
        let m = rows.nrows() as f64;
        let p = SeparableProblem::new(rows.clone(), DualVector::zeros(30), LossKind::Logistic).unwrap();
        let avg = crate::linalg::MetricOperator::new(rows.tr_mul(&rows) / m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let x = DualVector::from_fn(4, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal));
            assert!(max_generalized_eigenvalue(&p.hessian(&x), &avg).unwrap() <= 0.25 + 1e-8);
        }
    }
}
