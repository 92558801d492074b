//! Accelerated Newton scheme: contracting proximal-point outer loop whose
//! subproblems are solved by the dual Newton method.

use serde::{Deserialize, Serialize};

use crate::composite::{CompositeTerm, InnerOptions, ProxQuadratic};
use crate::dual::{solve_dual_augmented, DualConfig, DualStatus};
use crate::error::{QscError, Result};
use crate::linalg::PrimalVector;
use crate::oracle::{contract_oracle, SmoothOracle};

/// Lower bound `2^{3/2}/M` required of `R`.
pub fn radius_floor(m: f64) -> f64 {
    if m > 0.0 {
        2f64.powf(1.5) / m
    } else {
        0.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AccelConfig {
    /// QSC constant; the oracle's declared value when absent.
    pub m: Option<f64>,
    /// Radius estimate, at least `‖x_0 − x*‖` and `2^{3/2}/M`.
    pub r: f64,
    pub c: f64,
    pub gamma: Option<f64>,
    pub a0: Option<f64>,
    /// Reference optimal value, needed for `A_0` and the stopping rule.
    pub f_star: Option<f64>,
    /// Reference minimizer, only used to record distances in the trace.
    #[serde(skip)]
    pub x_star: Option<PrimalVector>,
    /// Stop once `F(x_k) − F* ≤ epsilon·(F(x_0) − F*)`.
    pub epsilon: f64,
    pub max_iters: usize,
    /// `R < 2^{3/2}/M` becomes an error instead of a flag.
    pub strict: bool,
    pub inner_max_outer: usize,
    pub inner_max_inner: usize,
    pub inner: InnerOptions,
}

impl AccelConfig {
    pub fn new(r: f64, f_star: f64) -> Self {
        Self {
            m: None,
            r,
            c: 1.0,
            gamma: None,
            a0: None,
            f_star: Some(f_star),
            x_star: None,
            epsilon: 1e-6,
            max_iters: 10_000,
            strict: false,
            inner_max_outer: 200,
            inner_max_inner: 50,
            inner: InnerOptions::default(),
        }
    }

    pub fn with_reference_point(mut self, x_star: PrimalVector) -> Self {
        self.x_star = Some(x_star);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccelFlag {
    /// `γ` was clamped to `1/2` (degenerate `M = 0` or `MR < 1`).
    ClampedGamma,
    /// `R < 2^{3/2}/M` accepted outside strict mode.
    RadiusBelowFloor,
}

/// Parameters actually used by a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccelParameters {
    pub m: f64,
    pub r: f64,
    pub c: f64,
    pub gamma: f64,
    pub a0: f64,
    pub f_star: f64,
    pub flags: Vec<AccelFlag>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccelTraceRow {
    pub k: usize,
    #[serde(rename = "A")]
    pub a_big: f64,
    /// `a_k`, empty at `k = 0`.
    pub a: Option<f64>,
    pub nu: Option<f64>,
    pub inner_outer: Option<usize>,
    pub inner_inner: Option<usize>,
    /// Final `‖h′(v_k)‖_*` reported by the inner solve.
    pub inner_g: Option<f64>,
    #[serde(rename = "F")]
    pub value: f64,
    pub v_dist: Option<f64>,
    pub x_dist: Option<f64>,
    /// `‖v_k − v_{k−1}‖`
    pub v_step: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccelStatus {
    TargetReached,
    MaxIters,
    InnerFailure,
}

impl AccelStatus {
    pub fn is_success(self) -> bool {
        self == AccelStatus::TargetReached
    }
}

#[derive(Clone, Debug)]
pub struct AccelRun {
    pub x: PrimalVector,
    pub v: PrimalVector,
    pub trace: Vec<AccelTraceRow>,
    pub params: AccelParameters,
    pub status: AccelStatus,
    pub inner_status: Option<DualStatus>,
    /// Oracle calls on `f`, counting inner solves and the `F(x_k)` evaluations.
    pub oracle_calls: usize,
    pub overflow: bool,
    pub error: Option<String>,
}

impl AccelRun {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }

    pub fn inner_iterations(&self) -> usize {
        self.trace.iter().filter_map(|r| r.inner_inner).sum()
    }

    pub fn final_value(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.value)
    }
}

pub fn resolve_parameters<O: SmoothOracle + ?Sized>(o: &O, f0: f64, cfg: &AccelConfig) -> Result<AccelParameters> {
    let m = cfg.m.unwrap_or_else(|| o.qsc_constant());
    if !(m >= 0.0 && m.is_finite()) {
        return Err(QscError::InvalidParameter(format!("invalid QSC constant {m}")));
    }
    if !(cfg.r > 0.0 && cfg.r.is_finite()) || !(cfg.c > 0.0) || !(cfg.epsilon > 0.0) {
        return Err(QscError::InvalidParameter("R, c and epsilon must be positive".into()));
    }
    let mut flags = Vec::new();
    if cfg.r < radius_floor(m) {
        if cfg.strict {
            return Err(QscError::InvalidParameter(format!(
                "R = {} is below 2^(3/2)/M = {}",
                cfg.r,
                radius_floor(m)
            )));
        }
        flags.push(AccelFlag::RadiusBelowFloor);
    }
    let gamma = match cfg.gamma {
        Some(g) if g > 0.0 && g < 1.0 => g,
        Some(g) => return Err(QscError::InvalidParameter(format!("gamma must lie in (0, 1), got {g}"))),
        None => {
            let g = if m > 0.0 { (m * cfg.r).powf(-2.0 / 3.0) } else { f64::INFINITY };
            if g > 0.5 {
                flags.push(AccelFlag::ClampedGamma);
                0.5
            } else {
                g
            }
        }
    };
    let f_star = cfg
        .f_star
        .ok_or_else(|| QscError::InvalidParameter("a reference optimal value is required".into()))?;
    let a0 = match cfg.a0 {
        Some(a) if a > 0.0 && a.is_finite() => a,
        Some(a) => return Err(QscError::InvalidParameter(format!("A0 must be positive, got {a}"))),
        None => {
            let gap = f0 - f_star;
            if gap > 0.0 {
                cfg.c * cfg.c * cfg.r * cfg.r / (2.0 * gap)
            } else {
                1.0
            }
        }
    };
    Ok(AccelParameters {
        m,
        r: cfg.r,
        c: cfg.c,
        gamma,
        a0,
        f_star,
        flags,
    })
}

pub fn solve_accelerated<O: SmoothOracle>(o: &O, psi: &CompositeTerm, x0: &PrimalVector, cfg: &AccelConfig) -> Result<AccelRun> {
    crate::error::check_dim(o.dim(), x0.len())?;
    psi.check_dim(o.dim())?;
    if !psi.contains(x0) {
        return Err(QscError::OutsideDomain);
    }
    let metric = o.metric();
    let e0 = o.evaluate(x0);
    let params = resolve_parameters(o, e0.value, cfg)?;
    let AccelParameters { m, r, gamma, a0, f_star, .. } = params.clone();
    let f0 = e0.value;
    let target = f_star + cfg.epsilon * (f0 - f_star);
    let dist = |p: &PrimalVector| cfg.x_star.as_ref().map(|xs| metric.norm(&(p - xs)));

    let mut x = x0.clone();
    let mut v = x0.clone();
    let mut a_k = a0;
    let mut overflow = e0.overflow;
    let mut oracle_calls = 1;
    let mut inner_status = None;
    let mut error = None;
    let mut trace = vec![AccelTraceRow {
        k: 0,
        a_big: a0,
        a: None,
        nu: None,
        inner_outer: None,
        inner_inner: None,
        inner_g: None,
        value: f0,
        v_dist: dist(&v),
        x_dist: dist(&x),
        v_step: None,
    }];

    let status = loop {
        let k = trace.len() - 1;
        if trace[k].value <= target {
            break AccelStatus::TargetReached;
        }
        if k >= cfg.max_iters {
            break AccelStatus::MaxIters;
        }
        let a_next_big = a_k / (1.0 - gamma);
        let a_small = gamma * a_k / (1.0 - gamma);
        let nu = r / ((k + 1) as f64).powi(2);
        let contracted = contract_oracle(o, gamma, x.clone(), a_next_big)?;
        let anchor = ProxQuadratic::new(v.clone(), 0.5);
        let mut dcfg = DualConfig::new(gamma * m, nu).with_limits(cfg.inner_max_outer, cfg.inner_max_inner);
        dcfg.inner = cfg.inner.clone();
        // the box indicator is invariant under positive scaling
        let run = match solve_dual_augmented(&contracted, psi, Some(&anchor), &v, &dcfg) {
            Ok(run) => run,
            Err(err) => {
                error = Some(err.to_string());
                break AccelStatus::InnerFailure;
            }
        };
        oracle_calls += run.oracle_calls;
        overflow |= run.overflow;
        inner_status = Some(run.status);
        if !run.status.is_success() {
            error = run.error.clone().or_else(|| Some(format!("inner solve ended with {:?}", run.status)));
            break AccelStatus::InnerFailure;
        }
        let v_next = run.x.clone();
        let x_next = &v_next * gamma + &x * (1.0 - gamma);
        let e_next = o.evaluate(&x_next);
        oracle_calls += 1;
        overflow |= e_next.overflow;
        trace.push(AccelTraceRow {
            k: k + 1,
            a_big: a_next_big,
            a: Some(a_small),
            nu: Some(nu),
            inner_outer: Some(run.outer_iterations()),
            inner_inner: Some(run.inner_iterations()),
            inner_g: Some(run.final_g()),
            value: e_next.value,
            v_dist: dist(&v_next),
            x_dist: dist(&x_next),
            v_step: Some(metric.norm(&(&v_next - &v))),
        });
        a_k = a_next_big;
        x = x_next;
        v = v_next;
    };

    Ok(AccelRun {
        x,
        v,
        trace,
        params,
        status,
        inner_status,
        oracle_calls,
        overflow,
        error,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AccelPotentialCheck {
    pub passed: bool,
    /// `½(‖x_0 − x*‖ + √(2A_0(F_0 − F*)) + 4R)²`
    pub rhs: f64,
    /// `(5 + c)²R²/2`
    pub rhs_simplified: f64,
    pub simplified_passed: bool,
    pub worst_ratio: f64,
    pub first_violation: Option<usize>,
}

/// `A_k(F_k − F*) + ½‖v_k − x*‖² + ½Σ‖v_i − v_{i−1}‖²` against both bounds.
/// Rows must carry `v_dist`.
pub fn verify_accel_potential(trace: &[AccelTraceRow], params: &AccelParameters, x0_distance: f64) -> AccelPotentialCheck {
    let f0 = trace.first().map_or(params.f_star, |r| r.value);
    let gap0 = (f0 - params.f_star).max(0.0);
    let rhs = 0.5 * (x0_distance + (2.0 * params.a0 * gap0).sqrt() + 4.0 * params.r).powi(2);
    let rhs_simplified = 0.5 * (5.0 + params.c).powi(2) * params.r * params.r;
    let mut check = AccelPotentialCheck {
        passed: true,
        rhs,
        rhs_simplified,
        simplified_passed: true,
        worst_ratio: 0.0,
        first_violation: None,
    };
    let mut steps = 0.0;
    for row in trace {
        steps += 0.5 * row.v_step.unwrap_or(0.0).powi(2);
        let Some(vd) = row.v_dist else {
            check.passed = false;
            continue;
        };
        let lhs = row.a_big * (row.value - params.f_star) + 0.5 * vd * vd + steps;
        check.worst_ratio = check.worst_ratio.max(lhs / rhs);
        if lhs > rhs * (1.0 + 1e-6) {
            check.passed = false;
            check.first_violation.get_or_insert(row.k);
        }
        if lhs > rhs_simplified * (1.0 + 1e-6) {
            check.simplified_passed = false;
        }
    }
    check
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AccelRateCheck {
    pub passed: bool,
    pub worst_ratio: f64,
    pub first_violation: Option<usize>,
}

/// `F_k − F* ≤ exp(−k/(MR)^{2/3})(1 + 5/c)²(F_0 − F*)` for `k ≥ 1`. A roundoff
/// allowance of `1e-14(1 + |F*|)` is added on the right.
pub fn verify_accel_rate(trace: &[AccelTraceRow], params: &AccelParameters) -> AccelRateCheck {
    let f0 = trace.first().map_or(params.f_star, |r| r.value);
    let gap0 = (f0 - params.f_star).max(0.0);
    let scale = (params.m * params.r).powf(2.0 / 3.0);
    let mut check = AccelRateCheck {
        passed: true,
        worst_ratio: 0.0,
        first_violation: None,
    };
    for row in trace.iter().skip(1) {
        let decay = if scale > 0.0 { (-(row.k as f64) / scale).exp() } else { 0.0 };
        let bound = decay * (1.0 + 5.0 / params.c).powi(2) * gap0;
        let gap = row.value - params.f_star;
        if bound > 0.0 {
            check.worst_ratio = check.worst_ratio.max(gap / bound);
        }
        if gap > bound * (1.0 + 1e-6) + 1e-14 * (1.0 + params.f_star.abs()) {
            check.passed = false;
            check.first_violation.get_or_insert(row.k);
        }
    }
    check
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AccelBoundednessCheck {
    pub passed: bool,
    pub radius: f64,
    pub max_v_dist: f64,
    pub max_x_dist: f64,
}

/// `‖v_k − x*‖ ≤ (5 + c)R` and `‖x_k − x*‖ ≤ (5 + c)R` throughout.
pub fn verify_accel_boundedness(trace: &[AccelTraceRow], params: &AccelParameters) -> AccelBoundednessCheck {
    let radius = (5.0 + params.c) * params.r;
    let max_v_dist = trace.iter().filter_map(|r| r.v_dist).fold(0.0, f64::max);
    let max_x_dist = trace.iter().filter_map(|r| r.x_dist).fold(0.0, f64::max);
    let complete = trace.iter().all(|r| r.v_dist.is_some() && r.x_dist.is_some());
    AccelBoundednessCheck {
        passed: complete && max_v_dist <= radius && max_x_dist <= radius,
        radius,
        max_v_dist,
        max_x_dist,
    }
}

/// `A_k(1 − γ)^k = A_0` to relative `1e-12` and `A_k ≥ A_0e^{kγ}`.
pub fn verify_a_growth(trace: &[AccelTraceRow], params: &AccelParameters) -> bool {
    trace.iter().all(|row| {
        let k = row.k as f64;
        let back = row.a_big * (1.0 - params.gamma).powf(k);
        (back - params.a0).abs() <= 1e-12 * params.a0 * (1.0 + k)
            && row.a_big >= params.a0 * (k * params.gamma).exp() * (1.0 - 1e-12)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::MetricOperator;
    use crate::primal::{solve_primal, PrimalConfig};
    use crate::zoo::{generate_synthetic, QuadraticProblem, SyntheticKind, SyntheticSpec, ZooInstance};
    use nalgebra::{dmatrix, dvector};

    fn logistic(n: usize, m: usize, seed: u64) -> ZooInstance {
        generate_synthetic(&SyntheticSpec::new(SyntheticKind::from_name("logistic").unwrap(), n, m, seed)).unwrap()
    }

    fn reference<O: SmoothOracle>(o: &O, psi: &CompositeTerm, x0: &PrimalVector) -> (PrimalVector, f64) {
        let run = solve_primal(o, psi, x0, &PrimalConfig::default().with_tolerance(1e-12, 10_000)).unwrap();
        (run.x.clone(), run.final_value())
    }

    #[test]
    fn parameters_follow_the_rules() {
        let l = logistic(3, 30, 1);
        let cfg = AccelConfig::new(8.0, 0.5);
        let p = resolve_parameters(&l, 1.0, &cfg).unwrap();
        assert!((p.gamma - 0.25).abs() < 1e-12);
        assert!((p.a0 - 64.0).abs() < 1e-12);
        assert!(p.flags.is_empty());
        let mut strict = AccelConfig::new(1.0, 0.5);
        strict.strict = true;
        assert!(resolve_parameters(&l, 1.0, &strict).is_err());
        strict.strict = false;
        let p = resolve_parameters(&l, 1.0, &strict).unwrap();
        assert!(p.flags.contains(&AccelFlag::RadiusBelowFloor));
        assert!(p.flags.contains(&AccelFlag::ClampedGamma));
        let mut missing = AccelConfig::new(8.0, 0.0);
        missing.f_star = None;
        assert!(resolve_parameters(&l, 1.0, &missing).is_err());
    }

    #[test]
    fn quadratic_clamps_gamma_and_converges() {
        let q = QuadraticProblem::new(dmatrix![3.0, 1.0; 1.0, 2.0], dvector![1.0, -2.0], MetricOperator::identity(2)).unwrap();
        let xs = q.minimizer().unwrap();
        let fs = q.value(&xs);
        let x0 = dvector![3.0, 3.0];
        let cfg = AccelConfig::new(q.metric().norm(&(&x0 - &xs)), fs).with_reference_point(xs);
        let run = solve_accelerated(&q, &CompositeTerm::zero(), &x0, &cfg).unwrap();
        assert_eq!(run.status, AccelStatus::TargetReached);
        assert!(run.params.flags.contains(&AccelFlag::ClampedGamma));
        assert!(verify_a_growth(&run.trace, &run.params));
    }

    #[test]
    fn logistic_run_satisfies_all_checks() {
        let l = logistic(5, 60, 2);
        let x0 = PrimalVector::zeros(5);
        let psi = CompositeTerm::zero();
        let (xs, fs) = reference(&l, &psi, &x0);
        let d0 = l.metric().norm(&(&x0 - &xs));
        let r = d0.max(radius_floor(1.0));
        let cfg = AccelConfig::new(r, fs).with_reference_point(xs);
        let run = solve_accelerated(&l, &psi, &x0, &cfg).unwrap();
        assert_eq!(run.status, AccelStatus::TargetReached, "{:?}", run.error);
        let pot = verify_accel_potential(&run.trace, &run.params, d0);
        assert!(pot.passed && pot.simplified_passed, "{pot:?}");
        assert!(verify_accel_rate(&run.trace, &run.params).passed);
        assert!(verify_accel_boundedness(&run.trace, &run.params).passed);
        assert!(verify_a_growth(&run.trace, &run.params));
        let bound = ((1.0 * r).powf(2.0 / 3.0) * ((1.0 + 5.0f64).powi(2) / cfg.epsilon).ln()).ceil() as usize + 2;
        assert!(run.iterations() <= bound);
    }

    #[test]
    fn inner_solves_meet_their_tolerance() {
        let l = logistic(4, 40, 3);
        let x0 = PrimalVector::zeros(4);
        let psi = CompositeTerm::zero();
        let (xs, fs) = reference(&l, &psi, &x0);
        let mut cfg = AccelConfig::new(radius_floor(1.0).max(l.metric().norm(&xs)), fs);
        cfg.max_iters = 3;
        let run = solve_accelerated(&l, &psi, &x0, &cfg).unwrap();
        for row in run.trace.iter().skip(1) {
            assert!(row.inner_g.unwrap() <= row.nu.unwrap());
        }
        // recompute ‖h′(v_1)‖ directly for the first subproblem
        let p = &run.params;
        let a1 = p.a0 / (1.0 - p.gamma);
        let c = contract_oracle(&l, p.gamma, x0.clone(), a1).unwrap();
        let anchor = ProxQuadratic::new(x0.clone(), 0.5);
        let mut dcfg = DualConfig::new(p.gamma * p.m, p.r).with_limits(200, 50);
        dcfg.inner = InnerOptions::default();
        let v1 = solve_dual_augmented(&c, &psi, Some(&anchor), &x0, &dcfg).unwrap();
        let direct = l.metric().dual_norm(&(c.gradient(&v1.x) + anchor.gradient(l.metric(), &v1.x)));
        assert!((direct - v1.final_g()).abs() <= 1e-8);
        assert!(direct <= p.r);
    }

    #[test]
    fn box_iterates_stay_feasible() {
        let l = logistic(3, 30, 4);
        let psi = CompositeTerm::boxed(PrimalVector::from_element(3, -0.05), PrimalVector::from_element(3, 0.05)).unwrap();
        let x0 = PrimalVector::zeros(3);
        let (xs, fs) = reference(&l, &psi, &x0);
        let cfg = AccelConfig::new(radius_floor(1.0), fs).with_reference_point(xs);
        let run = solve_accelerated(&l, &psi, &x0, &cfg).unwrap();
        assert!(run.status.is_success(), "{:?}", run.error);
        assert!(psi.contains(&run.x) && psi.contains(&run.v));
    }
}
