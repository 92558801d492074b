//! Newton method with gradient regularization: `x⁺` minimizes the model with
//! `β = σ‖F′(x)‖_*`, with a constant `σ` or an adaptive doubling search.

use serde::{Deserialize, Serialize};

use crate::composite::{newton_step_from, verify_step_bound, CompositeTerm, InnerOptions, LocalModel, StepBoundCheck, StepResult};
use crate::error::{QscError, Result};
use crate::linalg::{min_generalized_eigenvalue, DualVector, PrimalVector};
use crate::oracle::{rho, Evaluation, SmoothOracle};

/// Cap on doublings of `σ` within one adaptive search.
pub const MAX_DOUBLINGS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SigmaMode {
    Constant { sigma: f64 },
    /// Double from the start value until the one-step progress test holds;
    /// the next search starts from half the accepted value, floored at `min`.
    Adaptive { initial: f64, min: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrimalConfig {
    pub sigma: SigmaMode,
    /// Stop once `‖F′(x_k)‖_* ≤ grad_tol`.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Stop once `F(x_k) ≤ target_value`.
    pub target_value: Option<f64>,
    /// Record `λ(x_k)` and `η(x_k)` (one eigensolve per iteration).
    pub diagnostics: bool,
    pub inner: InnerOptions,
}

impl PrimalConfig {
    pub fn constant(sigma: f64) -> Self {
        Self {
            sigma: SigmaMode::Constant { sigma },
            ..Self::default()
        }
    }

    pub fn adaptive(initial: f64, min: f64) -> Self {
        Self {
            sigma: SigmaMode::Adaptive { initial, min },
            ..Self::default()
        }
    }

    pub fn with_tolerance(mut self, grad_tol: f64, max_iters: usize) -> Self {
        self.grad_tol = grad_tol;
        self.max_iters = max_iters;
        self
    }

    pub fn with_diagnostics(mut self) -> Self {
        self.diagnostics = true;
        self
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.sigma {
            SigmaMode::Constant { sigma } => sigma >= 0.0 && sigma.is_finite(),
            SigmaMode::Adaptive { initial, min } => {
                initial > 0.0 && initial.is_finite() && min >= 0.0 && min.is_finite()
            }
        };
        if !ok {
            return Err(QscError::InvalidParameter(format!("invalid sigma setting {:?}", self.sigma)));
        }
        if !(self.grad_tol > 0.0) {
            return Err(QscError::InvalidParameter("grad_tol must be positive".into()));
        }
        Ok(())
    }
}

impl Default for PrimalConfig {
    fn default() -> Self {
        Self {
            sigma: SigmaMode::Adaptive {
                initial: 1.0,
                min: 1e-12,
            },
            grad_tol: 1e-9,
            max_iters: 10_000,
            target_value: None,
            diagnostics: false,
            inner: InnerOptions::default(),
        }
    }
}

/// One row per iterate. Step fields describe the move from `x_k` to
/// `x_{k+1}` and are empty on the final row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimalTraceRow {
    pub k: usize,
    #[serde(rename = "F")]
    pub value: f64,
    pub g: f64,
    pub sigma: Option<f64>,
    pub beta: Option<f64>,
    pub step_len: Option<f64>,
    /// `⟨F′(x_{k+1}), x_k − x_{k+1}⟩`
    pub progress: Option<f64>,
    pub retries: Option<usize>,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimalStatus {
    GradTolReached,
    TargetGapReached,
    MaxIters,
    SingularSystem,
    AdaptiveFailure,
    InnerFailure,
}

impl PrimalStatus {
    pub fn is_success(self) -> bool {
        matches!(self, PrimalStatus::GradTolReached | PrimalStatus::TargetGapReached)
    }
}

#[derive(Clone, Debug)]
pub struct PrimalRun {
    pub x: PrimalVector,
    pub f_prime: DualVector,
    pub trace: Vec<PrimalTraceRow>,
    pub iterates: Vec<PrimalVector>,
    pub status: PrimalStatus,
    /// Number of regularized subproblems solved, including rejected trials.
    pub step_computations: usize,
    /// Second-order oracle calls (each evaluates value, gradient and Hessian).
    pub oracle_calls: usize,
    pub overflow: bool,
    pub error: Option<String>,
}

impl PrimalRun {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }

    pub fn final_value(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.value)
    }

    pub fn final_g(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.g)
    }
}

/// `η(x) = ‖F′(x)‖_*/λ(x)`, `+∞` when `λ(x) = 0`.
pub fn eta_measure<O: SmoothOracle + ?Sized>(o: &O, x: &PrimalVector, f_prime: &DualVector) -> Result<f64> {
    let lambda = min_generalized_eigenvalue(&o.hessian(x), o.metric())?;
    Ok(eta_from(o.metric().dual_norm(f_prime), lambda))
}

fn eta_from(g: f64, lambda: f64) -> f64 {
    if g == 0.0 {
        0.0
    } else if lambda > 0.0 {
        g / lambda
    } else {
        f64::INFINITY
    }
}

/// Result of one adaptive search.
pub struct AdaptiveStep {
    pub sigma: f64,
    pub step: StepResult,
    pub retries: usize,
}

/// `⟨F′(x⁺), x − x⁺⟩ ≥ ‖F′(x⁺)‖²_*/(2σ‖F′(x)‖_*)`, also accepted when the new
/// subgradient already meets `grad_tol`.
fn one_step_progress(step: &StepResult, x: &PrimalVector, g: f64, sigma: f64, g_plus: f64, grad_tol: f64) -> bool {
    let lhs = step.f_prime_plus.dot(&(x - &step.x_plus));
    lhs >= g_plus * g_plus / (2.0 * sigma * g) || g_plus <= grad_tol
}

/// Doubles `σ` from `sigma_start` until the one-step progress test holds.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_sigma_search<O: SmoothOracle + ?Sized>(
    o: &O,
    psi: &CompositeTerm,
    model: &LocalModel<'_>,
    g: f64,
    sigma_start: f64,
    grad_tol: f64,
    inner: &InnerOptions,
) -> Result<AdaptiveStep> {
    if !(g > 0.0) || !(sigma_start > 0.0) {
        return Err(QscError::InvalidParameter("adaptive search needs g > 0 and sigma > 0".into()));
    }
    let mut sigma = sigma_start;
    for retries in 0..=MAX_DOUBLINGS {
        let step = newton_step_from(o, psi, model, sigma * g, None, inner)?;
        let g_plus = o.metric().dual_norm(&step.f_prime_plus);
        if one_step_progress(&step, model.x, g, sigma, g_plus, grad_tol) {
            return Ok(AdaptiveStep { sigma, step, retries });
        }
        sigma *= 2.0;
    }
    Err(QscError::AdaptiveFailure {
        doublings: MAX_DOUBLINGS,
    })
}

fn diagnostics_row<O: SmoothOracle + ?Sized>(o: &O, e: &Evaluation, g: f64) -> (Option<f64>, Option<f64>) {
    match min_generalized_eigenvalue(&e.hessian, o.metric()) {
        Ok(l) => (Some(l), Some(eta_from(g, l))),
        Err(_) => (None, None),
    }
}

pub fn solve_primal<O: SmoothOracle + ?Sized>(
    o: &O,
    psi: &CompositeTerm,
    x0: &PrimalVector,
    cfg: &PrimalConfig,
) -> Result<PrimalRun> {
    crate::error::check_dim(o.dim(), x0.len())?;
    psi.check_dim(o.dim())?;
    cfg.validate()?;
    if !psi.contains(x0) {
        return Err(QscError::OutsideDomain);
    }
    let metric = o.metric();
    let mut x = x0.clone();
    let mut e = o.evaluate(&x);
    let mut overflow = e.overflow;
    let mut oracle_calls = 1;
    let mut f_prime = psi.min_norm_subgradient(&x, &e.gradient);
    let mut g = metric.dual_norm(&f_prime);
    let mut sigma_next = match cfg.sigma {
        SigmaMode::Constant { sigma } => sigma,
        SigmaMode::Adaptive { initial, .. } => initial,
    };
    let mut trace = Vec::new();
    let mut iterates = vec![x.clone()];
    let mut step_computations = 0;
    let mut error = None;

    let status = loop {
        let k = trace.len();
        let (lambda, eta) = if cfg.diagnostics {
            diagnostics_row(o, &e, g)
        } else {
            (None, None)
        };
        trace.push(PrimalTraceRow {
            k,
            value: e.value,
            g,
            sigma: None,
            beta: None,
            step_len: None,
            progress: None,
            retries: None,
            lambda,
            eta,
        });
        if g <= cfg.grad_tol {
            break PrimalStatus::GradTolReached;
        }
        if cfg.target_value.is_some_and(|t| e.value <= t) {
            break PrimalStatus::TargetGapReached;
        }
        if k >= cfg.max_iters {
            break PrimalStatus::MaxIters;
        }
        let model = LocalModel::new(&x, &e);
        let attempt = match cfg.sigma {
            SigmaMode::Constant { sigma } => newton_step_from(o, psi, &model, sigma * g, None, &cfg.inner)
                .map(|step| AdaptiveStep { sigma, step, retries: 0 }),
            SigmaMode::Adaptive { .. } => {
                adaptive_sigma_search(o, psi, &model, g, sigma_next, cfg.grad_tol, &cfg.inner)
            }
        };
        let AdaptiveStep { sigma, step, retries } = match attempt {
            Ok(a) => a,
            Err(err) => {
                let status = match err {
                    QscError::SingularSystem { .. } => PrimalStatus::SingularSystem,
                    QscError::AdaptiveFailure { .. } => PrimalStatus::AdaptiveFailure,
                    _ => PrimalStatus::InnerFailure,
                };
                if matches!(err, QscError::AdaptiveFailure { .. }) {
                    step_computations += MAX_DOUBLINGS + 1;
                    oracle_calls += MAX_DOUBLINGS + 1;
                }
                error = Some(err.to_string());
                break status;
            }
        };
        step_computations += retries + 1;
        oracle_calls += retries + 1;
        if let SigmaMode::Adaptive { min, .. } = cfg.sigma {
            sigma_next = (sigma / 2.0).max(min);
        }
        let row = trace.last_mut().expect("row pushed above");
        row.sigma = Some(sigma);
        row.beta = Some(step.beta);
        row.step_len = Some(step.step_length);
        row.progress = Some(step.f_prime_plus.dot(&(&x - &step.x_plus)));
        row.retries = Some(retries);

        x = step.x_plus;
        e = step.eval_plus;
        overflow |= e.overflow;
        f_prime = step.f_prime_plus;
        g = metric.dual_norm(&f_prime);
        iterates.push(x.clone());
    };

    Ok(PrimalRun {
        x,
        f_prime,
        trace,
        iterates,
        status,
        step_computations,
        oracle_calls,
        overflow,
        error,
    })
}

/// Per-step progress inequality `⟨F′(x_{k+1}), x_k − x_{k+1}⟩ ≥ g²_{k+1}/(2β_k)`
/// (with `β_k = 0` it degenerates to `g_{k+1} ≤ tol`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProgressCheck {
    pub passed: bool,
    pub steps: usize,
    pub violations: usize,
    /// Smallest `progress − g²_{k+1}/(2β_k)` over the trace.
    pub worst_slack: f64,
}

pub fn verify_progress(trace: &[PrimalTraceRow], tol: f64) -> ProgressCheck {
    let mut check = ProgressCheck {
        passed: true,
        steps: 0,
        violations: 0,
        worst_slack: f64::INFINITY,
    };
    for w in trace.windows(2) {
        let (Some(beta), Some(progress)) = (w[0].beta, w[0].progress) else {
            continue;
        };
        check.steps += 1;
        let slack = if beta > 0.0 {
            progress - w[1].g * w[1].g / (2.0 * beta)
        } else {
            -w[1].g
        };
        check.worst_slack = check.worst_slack.min(slack);
        if slack < -tol {
            check.violations += 1;
            check.passed = false;
        }
    }
    check
}

/// `F(x_{k+1}) ≤ F(x_k) + tol` along the trace.
pub fn verify_monotone(trace: &[PrimalTraceRow], tol: f64) -> bool {
    trace.windows(2).all(|w| w[1].value <= w[0].value + tol)
}

/// Step-length bounds on every recorded step; re-evaluates the Hessian at each
/// iterate. `with_lambda` uses the computed `λ(x_k)` instead of zero.
pub fn verify_run_step_bounds<O: SmoothOracle + ?Sized>(o: &O, run: &PrimalRun, with_lambda: bool) -> Result<Vec<StepBoundCheck>> {
    let mut out = Vec::new();
    for (k, row) in run.trace.iter().enumerate() {
        let Some(beta) = row.beta else { continue };
        let x = &run.iterates[k];
        let h = o.hessian(x);
        let lambda = if with_lambda {
            min_generalized_eigenvalue(&h, o.metric())?
        } else {
            0.0
        };
        out.push(verify_step_bound(x, &run.iterates[k + 1], &h, o.metric(), row.g, beta, lambda));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalCheckStatus {
    NotEntered,
    Passed,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalQuadraticCheck {
    pub status: LocalCheckStatus,
    /// First row with `η ≤ 1/(18M)`.
    pub entry: Option<usize>,
    pub checked: usize,
    /// Largest `η_{k+1} / (e(ρM+σ_k)η_k²)` among checked rows.
    pub worst_ratio: f64,
}

/// Once `η(x_k) ≤ 1/(18M)`, every later step must satisfy
/// `η_{k+1} ≤ e(ρM + σ_k)η_k² + 1e-12`.
pub fn check_local_quadratic(trace: &[PrimalTraceRow], m: f64) -> LocalQuadraticCheck {
    let radius = if m > 0.0 { 1.0 / (18.0 * m) } else { f64::INFINITY };
    let entry = trace.iter().position(|r| r.eta.is_some_and(|e| e <= radius));
    let mut check = LocalQuadraticCheck {
        status: LocalCheckStatus::NotEntered,
        entry,
        checked: 0,
        worst_ratio: 0.0,
    };
    let Some(start) = entry else { return check };
    check.status = LocalCheckStatus::Passed;
    for w in trace[start..].windows(2) {
        let (Some(eta), Some(eta_next), Some(sigma)) = (w[0].eta, w[1].eta, w[0].sigma) else {
            continue;
        };
        if !eta.is_finite() {
            continue;
        }
        check.checked += 1;
        let bound = std::f64::consts::E * (rho() * m + sigma) * eta * eta;
        if bound > 0.0 {
            check.worst_ratio = check.worst_ratio.max(eta_next / bound);
        }
        if !(eta_next <= bound + 1e-12) {
            check.status = LocalCheckStatus::Failed;
        }
    }
    check
}

/// A-posteriori global linear-rate envelope with the observed diameter `D̂`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrimalRateCheck {
    pub passed: bool,
    /// Lower estimate of the sublevel-set diameter.
    pub d_hat: f64,
    /// Largest `gap_k / envelope_k`.
    pub worst_ratio: f64,
    pub first_violation: Option<usize>,
}

/// Largest pairwise distance among the iterates and the reference point.
pub fn observed_diameter(iterates: &[PrimalVector], x_star: Option<&PrimalVector>, metric: &crate::linalg::MetricOperator) -> f64 {
    let mut pts: Vec<&PrimalVector> = iterates.iter().collect();
    if let Some(xs) = x_star {
        pts.push(xs);
    }
    // subsample long runs to keep the pairwise scan quadratic in a small number
    let stride = (pts.len() / 2000).max(1);
    let sample: Vec<&PrimalVector> = pts
        .iter()
        .enumerate()
        .filter(|(i, _)| i % stride == 0 || *i + 1 == pts.len())
        .map(|(_, p)| *p)
        .collect();
    let mut d = 0.0f64;
    for i in 0..sample.len() {
        for j in i + 1..sample.len() {
            d = d.max(metric.norm(&(sample[i] - sample[j])));
        }
    }
    d
}

/// `F_k − F* ≤ e^{−k/(8MD̂)}(F_0 − F*) + e^{−k/4}g_0D̂`.
pub fn verify_primal_rate(trace: &[PrimalTraceRow], f_star: f64, m: f64, d_hat: f64) -> PrimalRateCheck {
    let mut check = PrimalRateCheck {
        passed: true,
        d_hat,
        worst_ratio: 0.0,
        first_violation: None,
    };
    let Some(first) = trace.first() else { return check };
    let gap0 = (first.value - f_star).max(0.0);
    for row in trace {
        let k = row.k as f64;
        let linear = if m * d_hat > 0.0 { (-k / (8.0 * m * d_hat)).exp() } else { 0.0 };
        let envelope = linear * gap0 + (-k / 4.0).exp() * first.g * d_hat;
        let gap = row.value - f_star;
        let slack = 1e-12 * (1.0 + f_star.abs());
        if envelope > 0.0 {
            check.worst_ratio = check.worst_ratio.max(gap / envelope);
        }
        if gap > envelope + slack {
            check.passed = false;
            check.first_violation.get_or_insert(row.k);
        }
    }
    check
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::MetricOperator;
    use crate::zoo::{generate_synthetic, QuadraticProblem, SyntheticKind, SyntheticSpec, ZooInstance};
    use nalgebra::{dmatrix, dvector};

    fn quad() -> QuadraticProblem {
        QuadraticProblem::new(dmatrix![3.0, 1.0; 1.0, 2.0], dvector![1.0, -2.0], MetricOperator::identity(2)).unwrap()
    }

    fn logistic(n: usize, m: usize, seed: u64) -> ZooInstance {
        generate_synthetic(&SyntheticSpec::new(SyntheticKind::from_name("logistic").unwrap(), n, m, seed)).unwrap()
    }

    #[test]
    fn quadratic_pure_newton_one_iteration() {
        let q = quad();
        let run = solve_primal(&q, &CompositeTerm::zero(), &dvector![4.0, 4.0], &PrimalConfig::constant(0.0)).unwrap();
        assert_eq!(run.status, PrimalStatus::GradTolReached);
        assert_eq!(run.iterations(), 1);
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let q = quad();
        let xs = q.minimizer().unwrap();
        let run = solve_primal(&q, &CompositeTerm::zero(), &xs, &PrimalConfig::constant(1.0)).unwrap();
        assert_eq!(run.iterations(), 0);
        assert_eq!(run.x, xs);
    }

    #[test]
    fn rejects_infeasible_start_and_bad_config() {
        let q = quad();
        let psi = CompositeTerm::boxed(dvector![0.0, 0.0], dvector![1.0, 1.0]).unwrap();
        assert!(matches!(
            solve_primal(&q, &psi, &dvector![2.0, 0.0], &PrimalConfig::default()),
            Err(QscError::OutsideDomain)
        ));
        let bad = PrimalConfig::constant(-1.0);
        assert!(solve_primal(&q, &CompositeTerm::zero(), &dvector![0.0, 0.0], &bad).is_err());
    }

    #[test]
    fn logistic_constant_sigma_every_row_progresses() {
        let l = logistic(5, 50, 2);
        let cfg = PrimalConfig::constant(1.0).with_tolerance(1e-10, 500);
        let run = solve_primal(&l, &CompositeTerm::zero(), &DualVector::zeros(5), &cfg).unwrap();
        assert_eq!(run.status, PrimalStatus::GradTolReached);
        assert!(verify_progress(&run.trace, 1e-8).passed);
        assert!(verify_monotone(&run.trace, 1e-10));
        for c in verify_run_step_bounds(&l, &run, true).unwrap() {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn trace_g_matches_direct_gradient() {
        let l = logistic(4, 40, 3);
        let cfg = PrimalConfig::constant(1.0).with_tolerance(1e-10, 100);
        let run = solve_primal(&l, &CompositeTerm::zero(), &DualVector::zeros(4), &cfg).unwrap();
        for (row, x) in run.trace.iter().zip(&run.iterates) {
            let direct = l.metric().dual_norm(&l.gradient(x));
            assert!((row.g - direct).abs() <= 1e-9 * (1.0 + direct), "{} vs {}", row.g, direct);
        }
    }

    #[test]
    fn adaptive_from_tiny_sigma_stays_below_twice_m() {
        for seed in 1..4 {
            let l = logistic(5, 50, seed);
            let cfg = PrimalConfig::adaptive(1e-6, 1e-12).with_tolerance(1e-10, 500);
            let run = solve_primal(&l, &CompositeTerm::zero(), &DualVector::zeros(5), &cfg).unwrap();
            assert!(run.status.is_success());
            let max_sigma = run.trace.iter().filter_map(|r| r.sigma).fold(0.0, f64::max);
            assert!(max_sigma <= 2.0, "{max_sigma}");
            let bound = 2 * run.iterations() + (max_sigma / 1e-6).log2().ceil() as usize;
            assert!(run.step_computations <= bound);
        }
    }

    #[test]
    fn adaptive_accepts_immediately_above_m() {
        let l = logistic(4, 40, 5);
        let e = l.evaluate(&DualVector::zeros(4));
        let x = DualVector::zeros(4);
        let g = l.metric().dual_norm(&e.gradient);
        let a = adaptive_sigma_search(&l, &CompositeTerm::zero(), &LocalModel::new(&x, &e), g, 1.0, 1e-300, &InnerOptions::default()).unwrap();
        assert_eq!(a.retries, 0);
        let q = quad();
        let xq = dvector![1.0, 1.0];
        let eq = q.evaluate(&xq);
        let gq = q.metric().dual_norm(&eq.gradient);
        let a = adaptive_sigma_search(&q, &CompositeTerm::zero(), &LocalModel::new(&xq, &eq), gq, 1e-9, 1e-300, &InnerOptions::default()).unwrap();
        assert_eq!(a.retries, 0);
    }

    #[test]
    fn eta_examples() {
        let q = QuadraticProblem::new(dmatrix![1.0, 0.0; 0.0, 1.0], dvector![0.0, 0.0], MetricOperator::identity(2)).unwrap();
        let x = dvector![2.0, 0.0];
        assert_eq!(eta_measure(&q, &x, &q.gradient(&x)).unwrap(), 2.0);
        assert_eq!(eta_measure(&q, &x, &dvector![0.0, 0.0]).unwrap(), 0.0);
        let bal = crate::zoo::MatrixProblem::balancing(dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let y = dvector![0.3, 0.0];
        assert_eq!(eta_measure(&bal, &y, &bal.gradient(&y)).unwrap(), f64::INFINITY);
    }

    #[test]
    fn local_check_not_entered_and_pure_newton() {
        let row = |k, eta: f64, sigma: Option<f64>| PrimalTraceRow {
            k,
            value: 0.0,
            g: 0.0,
            sigma,
            beta: None,
            step_len: None,
            progress: None,
            retries: None,
            lambda: None,
            eta: Some(eta),
        };
        let far = vec![row(0, 1.0, Some(1.0)), row(1, 0.5, None)];
        assert_eq!(check_local_quadratic(&far, 1.0).status, LocalCheckStatus::NotEntered);
        let l = logistic(4, 60, 6);
        let ridge = crate::oracle::with_ridge(&l, 0.1).unwrap();
        let cfg = PrimalConfig::constant(0.0).with_tolerance(1e-13, 50).with_diagnostics();
        let start = solve_primal(&ridge, &CompositeTerm::zero(), &DualVector::zeros(4), &PrimalConfig::constant(1.0).with_tolerance(1e-3, 100)).unwrap();
        let run = solve_primal(&ridge, &CompositeTerm::zero(), &start.x, &cfg).unwrap();
        let c = check_local_quadratic(&run.trace, 1.0);
        assert_eq!(c.status, LocalCheckStatus::Passed, "{c:?}");
    }

    #[test]
    fn box_constrained_run_stays_feasible() {
        let l = logistic(3, 30, 7);
        let psi = CompositeTerm::boxed(DualVector::from_element(3, -0.05), DualVector::from_element(3, 0.05)).unwrap();
        let cfg = PrimalConfig::constant(1.0).with_tolerance(1e-10, 200);
        let run = solve_primal(&l, &psi, &DualVector::zeros(3), &cfg).unwrap();
        assert!(run.status.is_success(), "{:?}", run.status);
        assert!(run.iterates.iter().all(|x| psi.contains(x)));
        assert!(verify_monotone(&run.trace, 1e-10));
    }

    #[test]
    fn rate_envelope_on_geometric_trace() {
        let rows: Vec<_> = (0..5)
            .map(|k| PrimalTraceRow {
                k,
                value: 0.5f64.powi(k as i32),
                g: 1.0,
                sigma: None,
                beta: None,
                step_len: None,
                progress: None,
                retries: None,
                lambda: None,
                eta: None,
            })
            .collect();
        assert!(verify_primal_rate(&rows, 0.0, 1.0, 1.0).passed);
        assert!(!verify_primal_rate(&rows, 0.0, 1.0, 1e-3).passed);
    }
}
