//! Composite terms and the regularized Newton subproblem
//! `min ⟨∇f(x), y−x⟩ + ½‖y−x‖ₓ² + (β/2)‖y−x‖² + w‖y−c‖² + ψ(y)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, QscError, Result};
use crate::linalg::{
    quad_form, regularized_solve_detailed, symmetrize, DualVector, HessianOperator,
    MetricOperator, PrimalVector,
};
use crate::oracle::{Evaluation, SmoothOracle};

/// Simple closed convex term `ψ`.
#[derive(Clone, Debug, PartialEq)]
pub enum CompositeTerm {
    Zero,
    /// Indicator of `{l ≤ x ≤ u}`; bounds may be infinite.
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
}

impl CompositeTerm {
    pub fn zero() -> Self {
        CompositeTerm::Zero
    }

    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        for i in 0..lower.len() {
            let (l, u) = (lower[i], upper[i]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(QscError::InvalidParameter(format!(
                    "box bounds invalid at coordinate {i}: [{l}, {u}]"
                )));
            }
        }
        Ok(CompositeTerm::Box { lower, upper })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, CompositeTerm::Zero)
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self {
            CompositeTerm::Zero => Ok(()),
            CompositeTerm::Box { lower, .. } => check_dim(n, lower.len()),
        }
    }

    pub fn contains(&self, x: &PrimalVector) -> bool {
        match self {
            CompositeTerm::Zero => true,
            CompositeTerm::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(&v, (&l, &u))| l <= v && v <= u),
        }
    }

    /// `ψ(x)`: zero inside the domain, `+∞` outside.
    pub fn value(&self, x: &PrimalVector) -> f64 {
        if self.contains(x) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Euclidean projection onto the domain.
    pub fn project(&self, x: &PrimalVector) -> PrimalVector {
        match self {
            CompositeTerm::Zero => x.clone(),
            CompositeTerm::Box { lower, upper } => {
                PrimalVector::from_fn(x.len(), |i, _| x[i].clamp(lower[i], upper[i]))
            }
        }
    }

    /// Element of `grad + N(x)` with the smallest Euclidean norm; used as the
    /// initial subgradient where no step has produced one yet.
    pub fn min_norm_subgradient(&self, x: &PrimalVector, grad: &DualVector) -> DualVector {
        match self {
            CompositeTerm::Zero => grad.clone(),
            CompositeTerm::Box { lower, upper } => DualVector::from_fn(x.len(), |i, _| {
                let at_lower = x[i] <= lower[i];
                let at_upper = x[i] >= upper[i];
                match (at_lower, at_upper) {
                    (true, true) => 0.0,
                    (true, false) => grad[i].min(0.0),
                    (false, true) => grad[i].max(0.0),
                    (false, false) => grad[i],
                }
            }),
        }
    }

    /// Largest componentwise violation of `candidate − grad ∈ N(x)`.
    pub fn normal_cone_violation(&self, x: &PrimalVector, grad: &DualVector, candidate: &DualVector) -> f64 {
        let d = candidate - grad;
        match self {
            CompositeTerm::Zero => d.amax(),
            CompositeTerm::Box { lower, upper } => (0..x.len())
                .map(|i| {
                    let at_lower = x[i] <= lower[i];
                    let at_upper = x[i] >= upper[i];
                    match (at_lower, at_upper) {
                        (true, true) => 0.0,
                        (true, false) => d[i].max(0.0),
                        (false, true) => (-d[i]).max(0.0),
                        (false, false) => d[i].abs(),
                    }
                })
                .fold(0.0, f64::max),
        }
    }
}

/// Exact quadratic `w‖y − c‖²` folded into the Newton model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxQuadratic {
    pub center: PrimalVector,
    pub weight: f64,
}

impl ProxQuadratic {
    pub fn new(center: PrimalVector, weight: f64) -> Self {
        Self { center, weight }
    }

    /// `w₁‖y−c₁‖² + w₂‖y−c₂‖² = (w₁+w₂)‖y−c‖² + const` with `c` the weighted mean.
    pub fn merge(a: Option<&Self>, b: Option<&Self>) -> Option<Self> {
        match (a, b) {
            (None, None) => None,
            (Some(q), None) | (None, Some(q)) => Some(q.clone()),
            (Some(p), Some(q)) => {
                let w = p.weight + q.weight;
                if w == 0.0 {
                    return Some(ProxQuadratic::new(p.center.clone(), 0.0));
                }
                let c = (&p.center * p.weight + &q.center * q.weight) / w;
                Some(ProxQuadratic::new(c, w))
            }
        }
    }

    pub fn value(&self, metric: &MetricOperator, y: &PrimalVector) -> f64 {
        let d = y - &self.center;
        self.weight * d.dot(&metric.apply(&d))
    }

    pub fn gradient(&self, metric: &MetricOperator, y: &PrimalVector) -> DualVector {
        metric.apply(&(y - &self.center)) * (2.0 * self.weight)
    }
}

/// Knobs for the projected-gradient inner solver of the box case.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InnerOptions {
    pub max_iterations: usize,
    /// Stop when the projected-gradient residual is below
    /// `factor·(β + 2w)·‖y − x‖`.
    pub tolerance_factor: f64,
    pub power_iterations: usize,
    /// Try an exact reduced solve on the detected active set.
    pub polish: bool,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            tolerance_factor: 1e-2,
            power_iterations: 20,
            polish: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub x_plus: PrimalVector,
    /// Selected subgradient `F′(x⁺) = ∇f(x⁺) − ∇q(x⁺)` with `q` the model.
    pub f_prime_plus: DualVector,
    /// Gradient of the quadratic model at `x⁺`.
    pub model_gradient: DualVector,
    /// Oracle output at `x⁺`.
    pub eval_plus: Evaluation,
    pub beta: f64,
    pub inner_iterations: usize,
    /// `‖x⁺ − x‖` in the metric.
    pub step_length: f64,
    /// Jitter needed by the factorization, zero if none.
    pub jitter: f64,
    /// The box solution was certified by an exact active-set solve.
    pub polished: bool,
}

/// Model data at the current point.
#[derive(Clone, Debug)]
pub struct LocalModel<'a> {
    pub x: &'a PrimalVector,
    pub gradient: &'a DualVector,
    pub hessian: &'a HessianOperator,
}

impl<'a> LocalModel<'a> {
    pub fn new(x: &'a PrimalVector, eval: &'a Evaluation) -> Self {
        Self {
            x,
            gradient: &eval.gradient,
            hessian: &eval.hessian,
        }
    }
}

/// One regularized Newton step from `x` (evaluates the oracle at `x` and `x⁺`).
pub fn newton_step<O: SmoothOracle + ?Sized>(
    o: &O,
    psi: &CompositeTerm,
    x: &PrimalVector,
    beta: f64,
    extra: Option<&ProxQuadratic>,
) -> Result<StepResult> {
    let e = o.evaluate(x);
    newton_step_from(o, psi, &LocalModel::new(x, &e), beta, extra, &InnerOptions::default())
}

/// One regularized Newton step from precomputed model data.
pub fn newton_step_from<O: SmoothOracle + ?Sized>(
    o: &O,
    psi: &CompositeTerm,
    model: &LocalModel<'_>,
    beta: f64,
    extra: Option<&ProxQuadratic>,
    inner: &InnerOptions,
) -> Result<StepResult> {
    let n = o.dim();
    check_dim(n, model.x.len())?;
    psi.check_dim(n)?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(QscError::InvalidParameter(format!("beta must be nonnegative, got {beta}")));
    }
    let metric = o.metric();
    let w = extra.map_or(0.0, |q| q.weight);
    if !(w >= 0.0 && w.is_finite()) {
        return Err(QscError::InvalidParameter(format!("quadratic weight must be nonnegative, got {w}")));
    }
    let x = model.x;
    // gradient of the model at y = x
    let mut gm = model.gradient.clone();
    if let Some(q) = extra {
        check_dim(n, q.center.len())?;
        gm += q.gradient(metric, x);
    }
    let reg = beta + 2.0 * w;

    let (x_plus, iterations, jitter, polished) = match psi {
        CompositeTerm::Zero => {
            let sol = regularized_solve_detailed(model.hessian, metric, reg, &gm)?;
            (x - &sol.direction, 1, sol.jitter, true)
        }
        CompositeTerm::Box { lower, upper } => {
            if reg <= 0.0 {
                return Err(QscError::InvalidParameter(
                    "box composite needs beta + 2w > 0".into(),
                ));
            }
            let k = symmetrize(model.hessian) + metric.matrix() * reg;
            let (y, it, pol) = solve_box_model(&k, &gm, x, lower, upper, metric, reg, inner)?;
            (y, it, 0.0, pol)
        }
    };

    let d = &x_plus - x;
    let model_gradient = &gm + symmetrize(model.hessian) * &d + metric.apply(&d) * reg;
    let eval_plus = o.evaluate(&x_plus);
    let f_prime_plus = &eval_plus.gradient - &model_gradient;
    Ok(StepResult {
        step_length: metric.norm(&d),
        x_plus,
        f_prime_plus,
        model_gradient,
        eval_plus,
        beta,
        inner_iterations: iterations,
        jitter,
        polished,
    })
}

/// `F′(x⁺)` recomputed from its defining formula.
pub fn select_subgradient(
    model: &LocalModel<'_>,
    metric: &MetricOperator,
    x_plus: &PrimalVector,
    gradient_plus: &DualVector,
    beta: f64,
    extra: Option<&ProxQuadratic>,
) -> DualVector {
    let d = x_plus - model.x;
    let mut s = gradient_plus - model.gradient - model.hessian * &d - metric.apply(&d) * beta;
    if let Some(q) = extra {
        s -= q.gradient(metric, x_plus);
    }
    s
}

fn power_iteration(k: &DMatrix<f64>, iters: usize) -> f64 {
    let n = k.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_7).fract());
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..iters {
        let kv = k * &v;
        est = v.dot(&kv);
        let nrm = kv.norm();
        if nrm == 0.0 {
            break;
        }
        v = kv / nrm;
    }
    // Rayleigh quotients approach from below; the diagonal bound caps it
    let diag = k.diagonal().max();
    est.max(diag)
}

fn pg_map(
    y: &PrimalVector,
    grad: &DualVector,
    step: f64,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> PrimalVector {
    PrimalVector::from_fn(y.len(), |i, _| (y[i] - step * grad[i]).clamp(lower[i], upper[i]))
}

/// Exact solve on the free coordinates of the active set guessed at `y`;
/// returns the point when it satisfies the KKT conditions to roundoff.
#[allow(clippy::too_many_arguments)]
fn polish(
    k: &DMatrix<f64>,
    gm: &DualVector,
    x: &PrimalVector,
    y: &PrimalVector,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    lip: f64,
) -> Option<PrimalVector> {
    let n = y.len();
    let grad = gm + k * (y - x);
    let mut z = y.clone();
    let mut free = Vec::with_capacity(n);
    for i in 0..n {
        let tl = 1e-12 * (1.0 + lower[i].abs());
        let tu = 1e-12 * (1.0 + upper[i].abs());
        if y[i] - lower[i] <= tl && grad[i] >= 0.0 {
            z[i] = lower[i];
        } else if upper[i] - y[i] <= tu && grad[i] <= 0.0 {
            z[i] = upper[i];
        } else {
            free.push(i);
        }
    }
    if !free.is_empty() {
        let grad_z = gm + k * (&z - x);
        let kff = DMatrix::from_fn(free.len(), free.len(), |a, b| k[(free[a], free[b])]);
        let rhs = DVector::from_fn(free.len(), |a, _| -grad_z[free[a]]);
        let dz = kff.cholesky()?.solve(&rhs);
        for (a, &i) in free.iter().enumerate() {
            z[i] = (z[i] + dz[a]).clamp(lower[i], upper[i]);
        }
    }
    let grad_z = gm + k * (&z - x);
    let mapped = pg_map(&z, &grad_z, 1.0 / lip, lower, upper);
    let resid = (&z - mapped).amax() * lip;
    let scale = gm.amax() + k.amax() * (&z - x).amax() + f64::MIN_POSITIVE;
    (resid <= 1e-11 * scale).then_some(z)
}

#[allow(clippy::too_many_arguments)]
fn solve_box_model(
    k: &DMatrix<f64>,
    gm: &DualVector,
    x: &PrimalVector,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    metric: &MetricOperator,
    reg: f64,
    opts: &InnerOptions,
) -> Result<(PrimalVector, usize, bool)> {
    let lip = power_iteration(k, opts.power_iterations) * 1.05;
    let step = 1.0 / lip;
    // warm start from the projected unconstrained minimizer
    let mut y = match k.clone().cholesky() {
        Some(c) => (x - c.solve(gm)).zip_zip_map(lower, upper, |v, l, u| v.clamp(l, u)),
        None => x.zip_zip_map(lower, upper, |v, l, u| v.clamp(l, u)),
    };
    if opts.polish {
        if let Some(z) = polish(k, gm, x, &y, lower, upper, lip) {
            return Ok((z, 0, true));
        }
    }
    let floor = 1e-14 * (metric.dual_norm(gm) + f64::MIN_POSITIVE);
    let mut factor = opts.tolerance_factor;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let grad = gm + k * (&y - x);
        let next = pg_map(&y, &grad, step, lower, upper);
        let gmap = (&y - &next) * lip;
        residual = metric.dual_norm(&gmap);
        let tol = (factor * reg * metric.norm(&(&y - x))).max(floor);
        if residual <= tol {
            if !opts.polish {
                return Ok((y, it, false));
            }
            if let Some(z) = polish(k, gm, x, &y, lower, upper, lip) {
                return Ok((z, it, true));
            }
            if tol <= floor {
                return Ok((y, it, false));
            }
            factor *= 0.1;
        }
        y = next;
    }
    Err(QscError::MaxInnerIterations {
        iterations: opts.max_iterations,
        residual,
    })
}

/// Lemma-style step bounds: `‖x⁺−x‖ ≤ g/(β+λ)` and `‖x⁺−x‖ₓ² ≤ ‖x⁺−x‖·g`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepBoundCheck {
    pub passed: bool,
    pub step_length: f64,
    pub bound: f64,
    pub local_norm_sq: f64,
    pub local_bound: f64,
}

pub const STEP_BOUND_TOL: f64 = 1e-8;

pub fn verify_step_bound(
    x: &PrimalVector,
    x_plus: &PrimalVector,
    hessian: &HessianOperator,
    metric: &MetricOperator,
    g: f64,
    beta: f64,
    lambda: f64,
) -> StepBoundCheck {
    let d = x_plus - x;
    let step_length = metric.norm(&d);
    let denom = beta + lambda.max(0.0);
    let bound = if denom > 0.0 { g / denom } else { f64::INFINITY };
    let local_norm_sq = quad_form(hessian, &d).max(0.0);
    let local_bound = step_length * g;
    StepBoundCheck {
        passed: step_length <= bound + STEP_BOUND_TOL && local_norm_sq <= local_bound + STEP_BOUND_TOL,
        step_length,
        bound,
        local_norm_sq,
        local_bound,
    }
}

/// Smallest value of `⟨∇q(x⁺), y − x⁺⟩ + ψ(y) − ψ(x⁺)` over the sample points;
/// nonnegative at an exact model minimizer.
pub fn stationarity_gap(step: &StepResult, psi: &CompositeTerm, samples: &[PrimalVector]) -> f64 {
    let base = psi.value(&step.x_plus);
    samples
        .iter()
        .map(|y| step.model_gradient.dot(&(y - &step.x_plus)) + psi.value(y) - base)
        .fold(f64::INFINITY, f64::min)
}
