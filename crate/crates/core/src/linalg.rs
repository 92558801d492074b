//! Metric operator, global and local norms, regularized Newton solves and the
//! smallest generalized eigenvalue of a Hessian relative to the metric.
//!
//! All storage is dense. The metric `B` is factorized once at construction;
//! dual norms go through triangular solves and never form `B⁻¹`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{check_dim, QscError, Result};

/// Element of the primal space (points, steps, directions).
pub type PrimalVector = DVector<f64>;
/// Element of the dual space (gradients, subgradients).
pub type DualVector = DVector<f64>;
/// Symmetric positive semidefinite Hessian matrix.
pub type HessianOperator = DMatrix<f64>;

/// First jitter added to a regularized system that fails to factorize.
pub const JITTER_START: f64 = 1e-12;
/// Number of jitter retries (each ×10) before giving up.
pub const JITTER_RETRIES: usize = 6;

const ASYMMETRY_LIMIT: f64 = 1e-8;

/// Self-adjoint positive definite operator defining `‖h‖ = ⟨Bh, h⟩^{1/2}` and
/// `‖s‖_* = ⟨s, B⁻¹s⟩^{1/2}`.
#[derive(Clone, Debug)]
pub struct MetricOperator {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    identity: bool,
}

impl MetricOperator {
    pub fn identity(n: usize) -> Self {
        let matrix = DMatrix::identity(n, n);
        let chol = Cholesky::new(matrix.clone()).expect("identity is positive definite");
        Self {
            matrix,
            chol,
            identity: true,
        }
    }

    /// Builds a metric from a symmetric matrix. Small floating-point asymmetry
    /// is removed by averaging with the transpose.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(QscError::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > ASYMMETRY_LIMIT * scale || !matrix.iter().all(|v| v.is_finite()) {
            return Err(QscError::InvalidParameter(format!(
                "metric is not symmetric (asymmetry {asym:e})"
            )));
        }
        let matrix = symmetrize(&matrix);
        let chol = Cholesky::new(matrix.clone()).ok_or(QscError::NotPositiveDefinite)?;
        let n = matrix.nrows();
        let identity = matrix == DMatrix::identity(n, n);
        Ok(Self {
            matrix,
            chol,
            identity,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// Lower-triangular Cholesky factor `L` with `B = L Lᵀ`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `B h`, mapping a primal vector to the dual space.
    pub fn apply(&self, h: &PrimalVector) -> DualVector {
        if self.identity {
            h.clone()
        } else {
            &self.matrix * h
        }
    }

    /// `B⁻¹ s`, via the cached factorization.
    pub fn solve(&self, s: &DualVector) -> PrimalVector {
        if self.identity {
            s.clone()
        } else {
            self.chol.solve(s)
        }
    }

    pub fn norm(&self, h: &PrimalVector) -> f64 {
        if self.identity {
            h.norm()
        } else {
            h.dot(&(&self.matrix * h)).max(0.0).sqrt()
        }
    }

    pub fn dual_norm(&self, s: &DualVector) -> f64 {
        if self.identity {
            return s.norm();
        }
        // ‖s‖_* = ‖L⁻¹ s‖₂
        let l = self.chol.l_dirty();
        let y = l
            .solve_lower_triangular(s)
            .expect("Cholesky factor has a positive diagonal");
        y.norm()
    }

    /// `B⁻¹ᐟ² A B⁻ᐟ²` in the Cholesky basis: `L⁻¹ A L⁻ᵀ`, symmetrized.
    pub fn congruence(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        if self.identity {
            return symmetrize(a);
        }
        let l = self.chol.l();
        let x = l
            .solve_lower_triangular(a)
            .expect("Cholesky factor has a positive diagonal");
        let c = l
            .solve_lower_triangular(&x.transpose())
            .expect("Cholesky factor has a positive diagonal");
        symmetrize(&c)
    }
}

/// `(A + Aᵀ)/2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Global primal norm `⟨Bh, h⟩^{1/2}`.
pub fn primal_norm(h: &PrimalVector, metric: &MetricOperator) -> Result<f64> {
    check_dim(metric.dim(), h.len())?;
    Ok(metric.norm(h))
}

/// Global dual norm `⟨s, B⁻¹s⟩^{1/2}`.
pub fn dual_norm(s: &DualVector, metric: &MetricOperator) -> Result<f64> {
    check_dim(metric.dim(), s.len())?;
    Ok(metric.dual_norm(s))
}

/// Local seminorm `⟨Hh, h⟩^{1/2}`; zero when `h` lies in the kernel of `H`.
pub fn local_norm(h: &PrimalVector, hessian: &HessianOperator) -> Result<f64> {
    check_dim(hessian.nrows(), h.len())?;
    check_dim(hessian.ncols(), h.len())?;
    Ok(quad_form(hessian, h).max(0.0).sqrt())
}

pub(crate) fn quad_form(a: &DMatrix<f64>, h: &DVector<f64>) -> f64 {
    h.dot(&(a * h))
}

/// Outcome of a regularized solve, including the jitter that was needed.
#[derive(Clone, Debug)]
pub struct RegularizedSolution {
    pub direction: PrimalVector,
    /// Total multiple of `B` added beyond `beta` to make the system factorize.
    pub jitter: f64,
    /// Euclidean residual `‖(H + βB)d − rhs‖₂` against the unjittered system.
    pub residual: f64,
}

/// Solves `(H + βB) d = rhs` with a symmetric factorization.
pub fn regularized_solve(
    hessian: &HessianOperator,
    metric: &MetricOperator,
    beta: f64,
    rhs: &DualVector,
) -> Result<PrimalVector> {
    regularized_solve_detailed(hessian, metric, beta, rhs).map(|s| s.direction)
}

/// [`regularized_solve`] returning the jitter and residual as well.
///
/// If `H + βB` fails to factorize, `δB` is added with `δ = 1e-12`, growing by
/// 10× per retry for at most six retries.
pub fn regularized_solve_detailed(
    hessian: &HessianOperator,
    metric: &MetricOperator,
    beta: f64,
    rhs: &DualVector,
) -> Result<RegularizedSolution> {
    let n = metric.dim();
    check_dim(n, hessian.nrows())?;
    check_dim(n, hessian.ncols())?;
    check_dim(n, rhs.len())?;
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(QscError::InvalidParameter(format!(
            "regularization must be finite and nonnegative, got {beta}"
        )));
    }

    let mut system = symmetrize(hessian);
    if beta > 0.0 {
        system += metric.matrix() * beta;
    }

    let mut jitter = 0.0;
    let mut chol = Cholesky::new(system.clone());
    let mut retries = 0;
    while chol.is_none() {
        if retries == JITTER_RETRIES {
            return Err(QscError::SingularSystem { retries });
        }
        jitter = JITTER_START * 10f64.powi(retries as i32);
        chol = Cholesky::new(&system + metric.matrix() * jitter);
        retries += 1;
    }
    let chol = chol.expect("loop exits with a factorization");

    let mut direction = chol.solve(rhs);
    // One step of iterative refinement against the unjittered system.
    let r = rhs - &system * &direction;
    direction += chol.solve(&r);
    let residual = (&system * &direction - rhs).norm();

    debug_assert!(
        jitter > 0.0
            || residual
                <= 1e-10 * (rhs.norm() + 1.0) + 1e-13 * system.amax() * direction.amax() * n as f64,
        "regularized solve residual {residual:e} too large"
    );

    Ok(RegularizedSolution {
        direction,
        jitter,
        residual,
    })
}

/// All eigenvalues of the pencil `(A, B)` in ascending order.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, metric: &MetricOperator) -> Result<DVector<f64>> {
    check_dim(metric.dim(), a.nrows())?;
    check_dim(metric.dim(), a.ncols())?;
    let c = metric.congruence(a);
    let mut values: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    values.sort_by(|x, y| x.total_cmp(y));
    Ok(DVector::from_vec(values))
}

/// `λ(x) = max{λ ≥ 0 : H − λB ⪰ 0}`, the smallest eigenvalue of `H` relative to `B`.
///
/// Small negative values from rounding are clamped to zero; a clearly
/// negative eigenvalue means `H` is not PSD and is reported as an error.
pub fn min_generalized_eigenvalue(hessian: &HessianOperator, metric: &MetricOperator) -> Result<f64> {
    let values = generalized_eigenvalues(hessian, metric)?;
    let (lo, hi) = match values.len() {
        0 => return Ok(0.0),
        n => (values[0], values[n - 1]),
    };
    let floor = -1e-10 * hi.abs().max(1.0);
    if lo >= 0.0 {
        Ok(lo)
    } else if lo >= floor {
        Ok(0.0)
    } else {
        Err(QscError::NotPositiveSemidefinite { eigenvalue: lo })
    }
}

/// Largest eigenvalue of `H` relative to `B`.
pub fn max_generalized_eigenvalue(hessian: &HessianOperator, metric: &MetricOperator) -> Result<f64> {
    let values = generalized_eigenvalues(hessian, metric)?;
    Ok(values.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}
