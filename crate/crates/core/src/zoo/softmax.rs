use nalgebra::DMatrix;

use super::gram_metric;
use crate::error::{check_dim, QscError, Result};
use crate::linalg::{DualVector, HessianOperator, MetricOperator, PrimalVector};
use crate::oracle::{Evaluation, SmoothOracle};

/// `f(x) = μ ln Σᵢ exp((⟨aᵢ, x⟩ − bᵢ)/μ)` under `B = Σ aᵢaᵢᵀ`, `M = 2/μ`.
#[derive(Clone, Debug)]
pub struct SoftMaxProblem {
    rows: DMatrix<f64>,
    offsets: DualVector,
    mu: f64,
    metric: MetricOperator,
    metric_ridge: f64,
}

impl SoftMaxProblem {
    pub fn new(rows: DMatrix<f64>, offsets: DualVector, mu: f64) -> Result<Self> {
        check_dim(rows.nrows(), offsets.len())?;
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(QscError::InvalidParameter(format!(
                "smoothing mu must be positive, got {mu}"
            )));
        }
        let (metric, metric_ridge) = gram_metric(&rows)?;
        Ok(Self {
            rows,
            offsets,
            mu,
            metric,
            metric_ridge,
        })
    }

    /// Replaces the default metric. The declared `M` is only certified for the
    /// default one.
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

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn metric_ridge(&self) -> f64 {
        self.metric_ridge
    }

    /// Max-shifted exponents: returns `(max z, weights πᵢ)`.
    fn weights(&self, x: &PrimalVector) -> (f64, f64, DualVector) {
        let z = (&self.rows * x - &self.offsets) / self.mu;
        let zmax = z.max();
        let w = z.map(|zi| (zi - zmax).exp());
        let sum = w.sum();
        (zmax, sum, w / sum)
    }

    pub fn probabilities(&self, x: &PrimalVector) -> DualVector {
        self.weights(x).2
    }

    fn hessian_from(&self, pi: &DualVector, grad: &DualVector) -> HessianOperator {
        // centered form Σ πᵢ (aᵢ − ḡ)(aᵢ − ḡ)ᵀ keeps the result PSD and accurate
        let mut s = self.rows.clone();
        for (i, mut row) in s.row_iter_mut().enumerate() {
            let w = pi[i].sqrt();
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - grad[j]) * w;
            }
        }
        s.tr_mul(&s) / self.mu
    }
}

impl SmoothOracle for SoftMaxProblem {
    fn dim(&self) -> usize {
        self.rows.ncols()
    }
    fn value(&self, x: &PrimalVector) -> f64 {
        let (zmax, sum, _) = self.weights(x);
        self.mu * (zmax + sum.ln())
    }
    fn gradient(&self, x: &PrimalVector) -> DualVector {
        self.rows.tr_mul(&self.weights(x).2)
    }
    fn hessian(&self, x: &PrimalVector) -> HessianOperator {
        let pi = self.weights(x).2;
        let g = self.rows.tr_mul(&pi);
        self.hessian_from(&pi, &g)
    }
    fn qsc_constant(&self) -> f64 {
        2.0 / self.mu
    }
    fn metric(&self) -> &MetricOperator {
        &self.metric
    }
    fn evaluate(&self, x: &PrimalVector) -> Evaluation {
        let (zmax, sum, pi) = self.weights(x);
        let gradient = self.rows.tr_mul(&pi);
        let hessian = self.hessian_from(&pi, &gradient);
        Evaluation {
            value: self.mu * (zmax + sum.ln()),
            gradient,
            hessian,
            overflow: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_generalized_eigenvalue;
    use crate::oracle::check_gradient;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_instance(m: usize, n: usize, mu: f64, seed: u64) -> SoftMaxProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
        let b = DualVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        SoftMaxProblem::new(rows, b, mu).unwrap()
    }

    #[test]
    fn symmetric_point() {
        let p = random_instance(7, 3, 0.5, 1);
        let p = SoftMaxProblem::new(p.rows().clone(), DualVector::zeros(7), 0.5).unwrap();
        let x = dvector![0.0, 0.0, 0.0];
        let e = p.evaluate(&x);
        assert_relative_eq!(e.value, 0.5 * 7f64.ln(), max_relative = 1e-14);
        let mean = p.rows().row_sum().transpose() / 7.0;
        assert_relative_eq!(e.gradient, mean, max_relative = 1e-12);
    }

    #[test]
    fn two_term_scalar_case() {
        let p = SoftMaxProblem::new(dmatrix![1.0; -1.0], dvector![0.0, 0.0], 1.0).unwrap();
        let e = p.evaluate(&dvector![0.0]);
        assert_relative_eq!(e.value, 2f64.ln(), max_relative = 1e-15);
        assert_eq!(e.gradient[0], 0.0);
        assert_relative_eq!(e.hessian[(0, 0)], 1.0, max_relative = 1e-15);
        assert_eq!(p.qsc_constant(), 2.0);
    }

    #[test]
    fn no_overflow_far_away() {
        let p = random_instance(20, 4, 0.01, 2);
        let x = DualVector::from_element(4, 1e4);
        let e = p.evaluate(&x);
        assert!(e.value.is_finite() && e.gradient.iter().all(|v| v.is_finite()));
        let pi = p.probabilities(&x);
        assert!(pi.iter().all(|&v| v >= 0.0));
        assert_relative_eq!(pi.sum(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn gradient_matches_differences() {
        let p = random_instance(30, 5, 0.7, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x = DualVector::from_fn(5, |_, _| StandardNormal.sample(&mut rng));
            assert!(check_gradient(&p, &x, 1e-5).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn hessian_dominated_by_metric_over_mu() {
        let mu = 0.3;
        let p = random_instance(25, 4, mu, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let x = DualVector::from_fn(4, |_, _| StandardNormal.sample(&mut rng));
            let top = max_generalized_eigenvalue(&p.hessian(&x), p.metric()).unwrap();
            assert!(top <= 1.0 / mu + 1e-8);
        }
    }
}
