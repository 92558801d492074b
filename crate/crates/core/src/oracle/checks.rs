use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{phi, SmoothOracle};
use crate::error::{check_dim, Result};
use crate::linalg::{quad_form, symmetrize, MetricOperator, PrimalVector};

fn relative_error(approx: f64, exact: f64) -> f64 {
    (approx - exact).abs() / exact.abs().max(1.0)
}

/// Largest per-coordinate relative error between central differences of the
/// value and the analytic gradient.
pub fn check_gradient<O: SmoothOracle + ?Sized>(o: &O, x: &PrimalVector, h: f64) -> Result<f64> {
    check_dim(o.dim(), x.len())?;
    let g = o.gradient(x);
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = o.value(&probe);
        probe[i] = x[i] - h;
        let fm = o.value(&probe);
        probe[i] = x[i];
        worst = worst.max(relative_error((fp - fm) / (2.0 * h), g[i]));
    }
    Ok(worst)
}

/// Largest entrywise relative error between central differences of the
/// gradient and the analytic Hessian.
pub fn check_hessian<O: SmoothOracle + ?Sized>(o: &O, x: &PrimalVector, h: f64) -> Result<f64> {
    check_dim(o.dim(), x.len())?;
    let hess = o.hessian(x);
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let gp = o.gradient(&probe);
        probe[j] = x[j] - h;
        let gm = o.gradient(&probe);
        probe[j] = x[j];
        for i in 0..x.len() {
            worst = worst.max(relative_error((gp[i] - gm[i]) / (2.0 * h), hess[(i, j)]));
        }
    }
    Ok(worst)
}

/// Central-difference estimate of `D³f(x)[u]²[v]` from two Hessians.
pub fn third_derivative_fd<O: SmoothOracle + ?Sized>(
    o: &O,
    x: &PrimalVector,
    u: &PrimalVector,
    v: &PrimalVector,
    t: f64,
) -> f64 {
    let hp = o.hessian(&(x + v * t));
    let hm = o.hessian(&(x - v * t));
    quad_form(&(hp - hm), u) / (2.0 * t)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QscCheckOptions {
    pub seed: u64,
    pub samples: usize,
    /// Standard deviation of the sampled points.
    pub point_scale: f64,
    /// Fixed difference step; defaults to `1e-4·(1+‖x‖)`.
    pub fd_step: Option<f64>,
    /// Number of worst samples handed to the alternating maximization.
    pub refine: usize,
    pub refine_rounds: usize,
}

impl Default for QscCheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 10_000,
            point_scale: 1.0,
            fd_step: None,
            refine: 8,
            refine_rounds: 6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QscTriple {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Estimated `D³f(x)[u]²[v]` with `u` normalized to `‖u‖ₓ = 1` when possible.
    pub estimate: f64,
    pub local_norm_sq: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QscCheckReport {
    pub samples: usize,
    pub refined: usize,
    pub declared_m: f64,
    /// Max over samples of `estimate − M‖u‖ₓ²`.
    pub max_violation: f64,
    /// Tolerance at the worst sample, `1e-4·(1 + M‖u‖ₓ²)`.
    pub tolerance: f64,
    /// Largest observed `estimate/‖u‖ₓ²`, an empirical lower bound on the true constant.
    pub max_ratio: f64,
    pub worst_triple: Option<QscTriple>,
    pub passed: bool,
}

struct Sample {
    x: PrimalVector,
    u: PrimalVector,
    v: PrimalVector,
    t: f64,
    estimate: f64,
    local_sq: f64,
}

impl Sample {
    fn ratio(&self) -> f64 {
        if self.local_sq > 0.0 {
            self.estimate / self.local_sq
        } else {
            0.0
        }
    }
}

fn step_for(opts: &QscCheckOptions, x: &PrimalVector) -> f64 {
    opts.fd_step.unwrap_or(1e-4 * (1.0 + x.norm()))
}

fn evaluate_triple<O: SmoothOracle + ?Sized>(
    o: &O,
    x: PrimalVector,
    mut u: PrimalVector,
    v: PrimalVector,
    t: f64,
) -> Sample {
    let hx = o.hessian(&x);
    let mut local_sq = quad_form(&hx, &u);
    if local_sq > 0.0 && local_sq.is_finite() {
        u /= local_sq.sqrt();
        local_sq = 1.0;
    }
    let estimate = third_derivative_fd(o, &x, &u, &v, t);
    Sample {
        x,
        u,
        v,
        t,
        estimate,
        local_sq,
    }
}

fn top_generalized_vector(t: &DMatrix<f64>, base: &DMatrix<f64>) -> Option<DVector<f64>> {
    let chol = base.clone().cholesky()?;
    let l = chol.l();
    let li_t = l.solve_lower_triangular(t)?;
    let c = l.solve_lower_triangular(&li_t.transpose())?;
    let eig = SymmetricEigen::new(symmetrize(&c));
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let w = eig.eigenvectors.column(idx).into_owned();
    l.transpose().solve_upper_triangular(&w)
}

/// Alternating maximization of the difference estimate over `u` (generalized
/// eigenvector against the Hessian) and `v` (dual-norm maximizer).
fn refine<O: SmoothOracle + ?Sized>(o: &O, start: &Sample, rounds: usize) -> Vec<Sample> {
    let metric = o.metric();
    let x = &start.x;
    let t = start.t;
    let hx = symmetrize(&o.hessian(x));
    let n = x.len();
    let lmax = SymmetricEigen::new(hx.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, &b| a.max(b));
    if lmax <= 0.0 {
        return Vec::new();
    }
    let base = &hx + metric.matrix() * (1e-6 * lmax);
    let mut v = start.v.clone();
    let mut u = start.u.clone();
    let mut out = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let tv = symmetrize(&((o.hessian(&(x + &v * t)) - o.hessian(&(x - &v * t))) / (2.0 * t)));
        if let Some(cand) = top_generalized_vector(&tv, &base) {
            u = cand;
        }
        let unorm = u.norm();
        if unorm == 0.0 || !unorm.is_finite() {
            break;
        }
        let dir = &u / unorm;
        let tu = (o.hessian(&(x + &dir * t)) - o.hessian(&(x - &dir * t))) / (2.0 * t);
        let d = tu * &u * unorm;
        let dn = metric.dual_norm(&d);
        if dn > 0.0 && dn.is_finite() {
            v = metric.solve(&d) / dn;
        }
        debug_assert_eq!(v.len(), n);
        out.push(evaluate_triple(o, x.clone(), u.clone(), v.clone(), t));
    }
    out
}

/// Randomized certificate of the QSC inequality at the oracle's declared `M`.
pub fn check_qsc<O: SmoothOracle + ?Sized>(o: &O, opts: &QscCheckOptions) -> QscCheckReport {
    let n = o.dim();
    let m = o.qsc_constant();
    let metric = o.metric();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut samples = Vec::with_capacity(opts.samples);
    for _ in 0..opts.samples {
        let x = PrimalVector::from_fn(n, |_, _| opts.point_scale * rng.sample::<f64, _>(StandardNormal));
        let u = PrimalVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut v = PrimalVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let vn = metric.norm(&v);
        if vn > 0.0 {
            v /= vn;
        }
        let t = step_for(opts, &x);
        samples.push(evaluate_triple(o, x, u, v, t));
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[b].ratio().total_cmp(&samples[a].ratio()));
    let mut refined = Vec::new();
    for &i in order.iter().take(opts.refine) {
        refined.extend(refine(o, &samples[i], opts.refine_rounds));
    }

    let mut report = QscCheckReport {
        samples: samples.len(),
        refined: refined.len(),
        declared_m: m,
        max_violation: f64::NEG_INFINITY,
        tolerance: 1e-4 * (1.0 + m),
        max_ratio: 0.0,
        worst_triple: None,
        passed: true,
    };
    for s in samples.iter().chain(refined.iter()) {
        let violation = s.estimate - m * s.local_sq;
        let tol = 1e-4 * (1.0 + m * s.local_sq);
        if !(violation <= tol) {
            report.passed = false;
        }
        report.max_ratio = report.max_ratio.max(s.ratio());
        if violation > report.max_violation || report.worst_triple.is_none() {
            report.max_violation = violation;
            report.tolerance = tol;
            report.worst_triple = Some(QscTriple {
                x: s.x.iter().copied().collect(),
                u: s.u.iter().copied().collect(),
                v: s.v.iter().copied().collect(),
                estimate: s.estimate,
                local_norm_sq: s.local_sq,
            });
        }
    }
    if samples.is_empty() {
        report.max_violation = 0.0;
    }
    report
}

/// Draws `x` with standard deviation `point_scale` and `y = x + r·d` with
/// `‖d‖ = 1` and `r` uniform on `[0, r_max]`.
pub fn sample_pair<R: Rng + ?Sized>(
    rng: &mut R,
    metric: &MetricOperator,
    point_scale: f64,
    r_max: f64,
) -> (PrimalVector, PrimalVector) {
    let n = metric.dim();
    let x = PrimalVector::from_fn(n, |_, _| point_scale * rng.sample::<f64, _>(StandardNormal));
    let mut d = PrimalVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let dn = metric.norm(&d);
    if dn > 0.0 {
        d /= dn;
    }
    let r = rng.random_range(0.0..=r_max);
    let y = &x + d * r;
    (x, y)
}

/// Tolerance on the exponent for the Hessian-stability check.
pub const STABILITY_EXPONENT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityCheck {
    pub passed: bool,
    pub distance: f64,
    /// `M·‖y − x‖`.
    pub exponent_bound: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `M·r − max(ln max_ratio, −ln min_ratio)`; nonnegative when the bound holds exactly.
    pub margin: f64,
}

/// Two-sided Hessian stability `e^{−Mr}∇²f(x) ⪯ ∇²f(y) ⪯ e^{Mr}∇²f(x)`.
///
/// Both Hessians are shifted by the same `δI` with `δ = 1e-8·max trace/n`,
/// which only moves the ratios toward one and keeps shared null spaces from
/// producing 0/0.
pub fn check_hessian_stability<O: SmoothOracle + ?Sized>(
    o: &O,
    x: &PrimalVector,
    y: &PrimalVector,
) -> Result<StabilityCheck> {
    check_dim(o.dim(), x.len())?;
    check_dim(o.dim(), y.len())?;
    let n = x.len();
    let hx = symmetrize(&o.hessian(x));
    let hy = symmetrize(&o.hessian(y));
    let r = o.metric().norm(&(y - x));
    let bound = o.qsc_constant() * r;
    let scale = hx.trace().max(hy.trace()).max(0.0) / n as f64;
    let delta = (1e-8 * scale).max(f64::MIN_POSITIVE);
    let id = DMatrix::<f64>::identity(n, n);
    let base = MetricOperator::new(&hx + &id * delta)?;
    let ratios = base.congruence(&(&hy + &id * delta));
    let eig = SymmetricEigen::new(ratios).eigenvalues;
    let min_ratio = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ratio = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst = max_ratio.ln().max(-min_ratio.ln());
    let margin = bound - worst;
    Ok(StabilityCheck {
        passed: margin >= -STABILITY_EXPONENT_TOL,
        distance: r,
        exponent_bound: bound,
        min_ratio,
        max_ratio,
        margin,
    })
}

/// Absolute slack on the gradient and function-value bounds.
pub const LEMMA_ABS_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundCheck {
    pub passed: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// `‖∇f(y) − ∇f(x) − ∇²f(x)(y−x)‖_* ≤ M‖y−x‖ₓ²φ(M‖y−x‖)`.
pub fn check_gradient_bound<O: SmoothOracle + ?Sized>(
    o: &O,
    x: &PrimalVector,
    y: &PrimalVector,
) -> Result<BoundCheck> {
    check_dim(o.dim(), x.len())?;
    check_dim(o.dim(), y.len())?;
    let ex = o.evaluate(x);
    let gy = o.gradient(y);
    let d = y - x;
    let m = o.qsc_constant();
    let r = o.metric().norm(&d);
    let local_sq = quad_form(&ex.hessian, &d).max(0.0);
    let lhs = o.metric().dual_norm(&(gy - &ex.gradient - &ex.hessian * &d));
    let rhs = m * local_sq * phi(m * r);
    Ok(BoundCheck {
        passed: lhs <= rhs + LEMMA_ABS_TOL,
        lhs,
        rhs,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FunctionBoundCheck {
    pub passed: bool,
    pub lower: f64,
    /// `f(y) − f(x) − ⟨∇f(x), y − x⟩`.
    pub middle: f64,
    pub upper: f64,
}

/// `‖y−x‖ₓ²φ(−Mr) ≤ f(y) − f(x) − ⟨∇f(x), y−x⟩ ≤ ‖y−x‖ₓ²φ(Mr)`.
pub fn check_function_bounds<O: SmoothOracle + ?Sized>(
    o: &O,
    x: &PrimalVector,
    y: &PrimalVector,
) -> Result<FunctionBoundCheck> {
    check_dim(o.dim(), x.len())?;
    check_dim(o.dim(), y.len())?;
    let ex = o.evaluate(x);
    let fy = o.value(y);
    let d = y - x;
    let m = o.qsc_constant();
    let r = o.metric().norm(&d);
    let local_sq = quad_form(&ex.hessian, &d).max(0.0);
    let middle = fy - ex.value - ex.gradient.dot(&d);
    let lower = local_sq * phi(-m * r);
    let upper = local_sq * phi(m * r);
    Ok(FunctionBoundCheck {
        passed: lower - LEMMA_ABS_TOL <= middle && middle <= upper + LEMMA_ABS_TOL,
        lower,
        middle,
        upper,
    })
}
