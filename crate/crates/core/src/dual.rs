//! Dual Newton method: inexact proximal-point outer loop with coefficient
//! `a_{k+1} = 1/(2Mg_k)`, each subproblem solved by pure Newton steps inside
//! its region of quadratic convergence.

use serde::{Deserialize, Serialize};

use crate::composite::{newton_step_from, CompositeTerm, InnerOptions, LocalModel, ProxQuadratic};
use crate::error::{QscError, Result};
use crate::linalg::{DualVector, MetricOperator, PrimalVector};
use crate::oracle::{phi, Evaluation, SmoothOracle};

/// Inner residuals that stop decreasing below this multiple of
/// `ε_mach · scale` are treated as converged.
pub const NOISE_FLOOR_FACTOR: f64 = 1e6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualConfig {
    /// QSC parameter passed to the method. Zero switches to one exact
    /// Newton step per outer iteration.
    pub m: f64,
    /// Stop once `‖F′(x_k)‖_* ≤ nu`.
    pub nu: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Doublings of `M` allowed when an inner loop fails to converge.
    pub max_m_doublings: usize,
    pub inner: InnerOptions,
}

impl DualConfig {
    pub fn new(m: f64, nu: f64) -> Self {
        Self {
            m,
            nu,
            max_outer: 1000,
            max_inner: 50,
            max_m_doublings: 40,
            inner: InnerOptions::default(),
        }
    }

    pub fn with_limits(mut self, max_outer: usize, max_inner: usize) -> Self {
        self.max_outer = max_outer;
        self.max_inner = max_inner;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.m >= 0.0 && self.m.is_finite()) {
            return Err(QscError::InvalidParameter(format!("M must be nonnegative, got {}", self.m)));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(QscError::InvalidParameter(format!("nu must be positive, got {}", self.nu)));
        }
        if self.max_inner == 0 {
            return Err(QscError::InvalidParameter("max_inner must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outer row `k`; step fields describe the move to `x_{k+1}` and are empty on
/// the final row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualTraceRow {
    pub k: usize,
    #[serde(rename = "F")]
    pub value: f64,
    pub g: f64,
    /// `M` in effect for this outer step (after any doublings).
    pub m: Option<f64>,
    pub a_next: Option<f64>,
    pub inner_iters: Option<usize>,
    pub inner_residual: Option<f64>,
    pub threshold: Option<f64>,
    pub g_next: Option<f64>,
    /// The inner loop stopped on the roundoff floor instead of the threshold.
    pub floor_hit: Option<bool>,
}

/// Residuals `‖h′_k(z_t)‖_*` for `t = 0, 1, …` of one accepted inner loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerTrace {
    pub k: usize,
    pub residuals: Vec<f64>,
    pub threshold: f64,
    /// Strong convexity of the augmented smooth part.
    pub mu: f64,
    pub m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualStatus {
    Converged,
    MaxOuter,
    /// Inner loop failed even after the allowed doublings of `M`.
    ParameterSuspect,
    SingularSystem,
    InnerFailure,
}

impl DualStatus {
    pub fn is_success(self) -> bool {
        self == DualStatus::Converged
    }
}

#[derive(Clone, Debug)]
pub struct DualRun {
    pub x: PrimalVector,
    pub f_prime: DualVector,
    pub trace: Vec<DualTraceRow>,
    pub inner: Vec<InnerTrace>,
    pub iterates: Vec<PrimalVector>,
    pub status: DualStatus,
    /// Final value of `M` after doublings.
    pub m_final: f64,
    pub m_doublings: usize,
    /// Total second-order oracle calls in inner loops, including restarts.
    pub oracle_calls: usize,
    pub overflow: bool,
    pub error: Option<String>,
}

impl DualRun {
    pub fn outer_iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }

    pub fn inner_iterations(&self) -> usize {
        self.trace.iter().filter_map(|r| r.inner_iters).sum()
    }

    pub fn final_value(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.value)
    }

    pub fn final_g(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.g)
    }
}

pub fn solve_dual<O: SmoothOracle + ?Sized>(o: &O, psi: &CompositeTerm, x0: &PrimalVector, cfg: &DualConfig) -> Result<DualRun> {
    solve_dual_augmented(o, psi, None, x0, cfg)
}

fn objective_value(e: &Evaluation, anchor: Option<&ProxQuadratic>, metric: &MetricOperator, x: &PrimalVector) -> f64 {
    e.value + anchor.map_or(0.0, |q| q.value(metric, x))
}

struct InnerOutcome {
    x_next: PrimalVector,
    eval_next: Evaluation,
    s: DualVector,
    residuals: Vec<f64>,
    floor_hit: bool,
    steps: usize,
}

enum InnerResult {
    Done(InnerOutcome),
    Exhausted { steps: usize, residual: f64 },
}

#[allow(clippy::too_many_arguments)]
fn inner_loop<O: SmoothOracle + ?Sized>(
    o: &O,
    psi: &CompositeTerm,
    quad: Option<&ProxQuadratic>,
    x_k: &PrimalVector,
    e_k: &Evaluation,
    g_k: f64,
    threshold: f64,
    floor: f64,
    max_inner: usize,
    exact: bool,
    inner: &InnerOptions,
) -> Result<InnerResult> {
    let metric = o.metric();
    let mut z = x_k.clone();
    let mut e = e_k.clone();
    let mut residuals = vec![g_k];
    for t in 0..max_inner {
        let step = newton_step_from(o, psi, &LocalModel::new(&z, &e), 0.0, quad, inner)?;
        let mut s = step.f_prime_plus;
        if let Some(q) = quad {
            s += q.gradient(metric, &step.x_plus);
        }
        let r = metric.dual_norm(&s);
        let prev = *residuals.last().expect("nonempty");
        residuals.push(r);
        z = step.x_plus;
        e = step.eval_plus;
        let stalled = t > 0 && r > 0.5 * prev && r <= floor;
        if exact || r <= threshold || stalled {
            return Ok(InnerResult::Done(InnerOutcome {
                x_next: z,
                eval_next: e,
                s,
                floor_hit: !exact && r > threshold,
                residuals,
                steps: t + 1,
            }));
        }
    }
    Ok(InnerResult::Exhausted {
        steps: max_inner,
        residual: *residuals.last().expect("nonempty"),
    })
}

/// Dual Newton on `f + ψ + anchor`, where the optional anchor is an exact
/// quadratic `w‖x − c‖²` carried in every inner model.
pub fn solve_dual_augmented<O: SmoothOracle + ?Sized>(
    o: &O,
    psi: &CompositeTerm,
    anchor: Option<&ProxQuadratic>,
    x0: &PrimalVector,
    cfg: &DualConfig,
) -> Result<DualRun> {
    crate::error::check_dim(o.dim(), x0.len())?;
    psi.check_dim(o.dim())?;
    cfg.validate()?;
    if let Some(q) = anchor {
        crate::error::check_dim(o.dim(), q.center.len())?;
    }
    if !psi.contains(x0) {
        return Err(QscError::OutsideDomain);
    }
    let metric = o.metric();
    let smooth_grad = |e: &Evaluation, x: &PrimalVector| match anchor {
        Some(q) => &e.gradient + q.gradient(metric, x),
        None => e.gradient.clone(),
    };

    let mut x = x0.clone();
    let mut e = o.evaluate(&x);
    let mut overflow = e.overflow;
    let mut f_prime = psi.min_norm_subgradient(&x, &smooth_grad(&e, &x));
    let mut g = metric.dual_norm(&f_prime);
    let g_initial = g;
    let mut m = cfg.m;
    let exact = m == 0.0;
    let mut m_doublings = 0;
    let mut oracle_calls = 1;
    let mut trace = Vec::new();
    let mut inner_traces = Vec::new();
    let mut iterates = vec![x.clone()];
    let mut error = None;

    let status = 'outer: loop {
        let k = trace.len();
        trace.push(DualTraceRow {
            k,
            value: objective_value(&e, anchor, metric, &x),
            g,
            m: None,
            a_next: None,
            inner_iters: None,
            inner_residual: None,
            threshold: None,
            g_next: None,
            floor_hit: None,
        });
        if g <= cfg.nu {
            break DualStatus::Converged;
        }
        if k >= cfg.max_outer {
            break DualStatus::MaxOuter;
        }
        let grad_scale = metric.dual_norm(&e.gradient);
        let floor = NOISE_FLOOR_FACTOR * f64::EPSILON * g_initial.max(grad_scale).max(f64::MIN_POSITIVE);
        let mut steps_this_outer = 0;
        let (outcome, prox, threshold) = loop {
            let w = m * g;
            let prox = ProxQuadratic::new(x.clone(), w);
            let quad = ProxQuadratic::merge(anchor, (!exact).then_some(&prox));
            let threshold = 2.0 * m * g * cfg.nu / ((k + 1) as f64).powi(2);
            let res = inner_loop(o, psi, quad.as_ref(), &x, &e, g, threshold, floor, cfg.max_inner, exact, &cfg.inner);
            match res {
                Ok(InnerResult::Done(out)) => {
                    steps_this_outer += out.steps;
                    break (out, prox, threshold);
                }
                Ok(InnerResult::Exhausted { steps, residual }) => {
                    steps_this_outer += steps;
                    oracle_calls += steps;
                    if m_doublings >= cfg.max_m_doublings {
                        error = Some(
                            QscError::MaxInnerIterations {
                                iterations: steps,
                                residual,
                            }
                            .to_string(),
                        );
                        break 'outer DualStatus::ParameterSuspect;
                    }
                    m *= 2.0;
                    m_doublings += 1;
                }
                Err(err) => {
                    let status = match err {
                        QscError::SingularSystem { .. } => DualStatus::SingularSystem,
                        _ => DualStatus::InnerFailure,
                    };
                    error = Some(err.to_string());
                    break 'outer status;
                }
            }
        };
        oracle_calls += outcome.steps;
        let g_next_vec = if exact {
            outcome.s.clone()
        } else {
            &outcome.s - prox.gradient(metric, &outcome.x_next)
        };
        let g_next = metric.dual_norm(&g_next_vec);
        let row = trace.last_mut().expect("row pushed above");
        row.m = Some(m);
        row.a_next = Some(if exact { f64::INFINITY } else { 1.0 / (2.0 * m * g) });
        row.inner_iters = Some(steps_this_outer);
        row.inner_residual = outcome.residuals.last().copied();
        row.threshold = Some(threshold);
        row.g_next = Some(g_next);
        row.floor_hit = Some(outcome.floor_hit);
        inner_traces.push(InnerTrace {
            k,
            residuals: outcome.residuals,
            threshold,
            mu: 2.0 * (prox.weight + anchor.map_or(0.0, |q| q.weight)),
            m,
        });

        x = outcome.x_next;
        e = outcome.eval_next;
        overflow |= e.overflow;
        f_prime = g_next_vec;
        g = g_next;
        iterates.push(x.clone());
    };

    Ok(DualRun {
        x,
        f_prime,
        trace,
        inner: inner_traces,
        iterates,
        status,
        m_final: m,
        m_doublings,
        oracle_calls,
        overflow,
        error,
    })
}

/// `Σ a_i(F_i − F*) + ½Σ a_i²g_i² ≤ ½(‖x_0 − x*‖ + 2ν)²` at every `k ≥ 1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualGuaranteeCheck {
    pub passed: bool,
    pub rhs: f64,
    /// Largest `LHS_k / RHS` over the run.
    pub worst_ratio: f64,
    pub first_violation: Option<usize>,
}

pub fn verify_dual_guarantee(trace: &[DualTraceRow], x0_distance: f64, f_star: f64, nu: f64) -> DualGuaranteeCheck {
    let rhs = 0.5 * (x0_distance + 2.0 * nu).powi(2);
    let mut check = DualGuaranteeCheck {
        passed: true,
        rhs,
        worst_ratio: 0.0,
        first_violation: None,
    };
    let mut lhs = 0.0;
    for w in trace.windows(2) {
        let Some(a) = w[0].a_next else { break };
        if !a.is_finite() {
            // exact mode: no proximal coefficient
            continue;
        }
        lhs += a * (w[1].value - f_star) + 0.5 * a * a * w[1].g * w[1].g;
        if rhs > 0.0 {
            check.worst_ratio = check.worst_ratio.max(lhs / rhs);
        }
        if lhs > rhs * (1.0 + 1e-6) {
            check.passed = false;
            check.first_violation.get_or_insert(w[1].k);
        }
    }
    check
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualRateCheck {
    pub passed: bool,
    pub envelope_passed: bool,
    pub oracle_bound_passed: bool,
    /// Largest `g_k / envelope_k`.
    pub worst_ratio: f64,
    /// Mean of `ln(g_{k+1}/g_k)` over the run; `None` with fewer than 3 steps.
    pub mean_log_decay: Option<f64>,
    pub total_inner: usize,
    pub total_bound: f64,
}

/// Upper bound on inner steps for outer iteration `i` (1-based), the looser of
/// the two stated forms plus 2 slack.
pub fn inner_count_bound(i: usize, m: f64, nu: f64) -> f64 {
    let k1 = ((i + 1) as f64).powi(2);
    let a = if m > 0.0 { k1 / (2.0 * m * nu) } else { f64::INFINITY };
    let b = k1 / nu;
    let arg = a.max(b).max(std::f64::consts::E);
    1.0 + arg.ln().ln() / std::f64::consts::LN_2 + 2.0
}

/// Envelope `g_k ≤ exp(2M²(‖x_0 − x*‖ + 2ν)² − k/2)·g_0` for all `k ≥ 1`, and the
/// cumulative oracle-count bound `N_k ≤ Σ_{i≤k} bound_i`.
pub fn verify_dual_rate(run: &DualRun, x0_distance: f64, nu: f64) -> DualRateCheck {
    let trace = &run.trace;
    let m = run.m_final;
    let g0 = trace.first().map_or(0.0, |r| r.g);
    let burn = 2.0 * m * m * (x0_distance + 2.0 * nu).powi(2);
    let mut envelope_passed = true;
    let mut worst_ratio = 0.0f64;
    for row in trace.iter().skip(1) {
        let env = (burn - row.k as f64 / 2.0).exp() * g0;
        if env > 0.0 {
            worst_ratio = worst_ratio.max(row.g / env);
        }
        if row.g > env * (1.0 + 1e-9) {
            envelope_passed = false;
        }
    }
    let mut total_inner = 0;
    let mut total_bound = 0.0;
    let mut oracle_bound_passed = true;
    for (i, row) in trace.iter().enumerate() {
        let Some(t) = row.inner_iters else { break };
        total_inner += t;
        total_bound += inner_count_bound(i + 1, m, nu);
        if total_inner as f64 > total_bound {
            oracle_bound_passed = false;
        }
    }
    let steps = trace.len().saturating_sub(1);
    let mean_log_decay = (steps >= 3 && g0 > 0.0).then(|| {
        let last = trace.last().expect("nonempty").g.max(f64::MIN_POSITIVE);
        (last / g0).ln() / steps as f64
    });
    DualRateCheck {
        passed: envelope_passed && oracle_bound_passed,
        envelope_passed,
        oracle_bound_passed,
        worst_ratio,
        mean_log_decay,
        total_inner,
        total_bound,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InnerQuadraticCheck {
    pub passed: bool,
    pub checked: usize,
    /// Largest `r_{t+1} − (Mφ(½)/μ)r_t²`.
    pub worst_excess: f64,
}

/// Inside `‖h′(z_t)‖_* ≤ μ/(2M)`, successive residuals must satisfy
/// `r_{t+1} ≤ (Mφ(½)/μ)r_t² + 1e-10`.
pub fn check_inner_quadratic(inner: &[InnerTrace]) -> InnerQuadraticCheck {
    let mut check = InnerQuadraticCheck {
        passed: true,
        checked: 0,
        worst_excess: f64::NEG_INFINITY,
    };
    for tr in inner {
        if !(tr.mu > 0.0) || !(tr.m > 0.0) {
            continue;
        }
        let radius = tr.mu / (2.0 * tr.m);
        let c = tr.m * phi(0.5) / tr.mu;
        let mut inside = false;
        for w in tr.residuals.windows(2) {
            inside |= w[0] <= radius * (1.0 + 1e-12);
            if !inside {
                continue;
            }
            check.checked += 1;
            let excess = w[1] - c * w[0] * w[0];
            check.worst_excess = check.worst_excess.max(excess);
            if excess > 1e-10 {
                check.passed = false;
            }
        }
    }
    check
}

/// Every accepted inner loop met its threshold or the roundoff floor.
pub fn inner_stops_satisfied(trace: &[DualTraceRow]) -> bool {
    trace.iter().all(|r| match (r.inner_residual, r.threshold, r.floor_hit) {
        (Some(res), Some(th), Some(floor)) => res <= th || floor,
        _ => true,
    })
}
