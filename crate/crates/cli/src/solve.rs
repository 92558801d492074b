//! Runs one configured solve, its checks, and writes the artifacts.

use std::path::Path;
use std::time::Instant;

use qsc_core::accelerated::{
    radius_floor, verify_a_growth, verify_accel_boundedness, verify_accel_potential, verify_accel_rate,
};
use qsc_core::dual::{check_inner_quadratic, inner_stops_satisfied, verify_dual_guarantee, verify_dual_rate};
use qsc_core::oracle::CountingOracle;
use qsc_core::primal::{
    check_local_quadratic, observed_diameter, verify_monotone, verify_progress, verify_primal_rate,
    verify_run_step_bounds, LocalCheckStatus,
};
use qsc_core::trace::{flatten_inner, save_rows};
use qsc_core::{
    solve_accelerated, solve_dual, solve_primal, AccelConfig, AccelTraceRow, DualConfig, DualTraceRow, PrimalConfig,
    PrimalRun, PrimalStatus, PrimalTraceRow, QscError, SigmaMode, SmoothOracle,
};

use crate::config::{RunConfig, SolverSpec, VerifyToggles};
use crate::error::{CliError, Result};
use crate::fit::{fit_linear_rate, fit_quadratic_order};
use crate::problem::{build, Problem};
use crate::reference::{reference, Reference};
use crate::report::{write_json, CheckResult, Fits, ReferenceInfo, RunReport, D_HAT_CAVEAT};

pub const PROGRESS_TOL: f64 = 1e-8;
pub const MONOTONE_TOL: f64 = 1e-10;
/// Extra iterations allowed on top of `(MR)^{2/3}` in the accelerated slope check.
pub const ACCEL_BURN_IN: f64 = 10.0;
pub const WARM_MAX_STEPS: usize = 10_000;

pub enum TraceData {
    Primal(Vec<PrimalTraceRow>),
    Dual {
        rows: Vec<DualTraceRow>,
        inner: Vec<qsc_core::trace::InnerRow>,
    },
    Accelerated(Vec<AccelTraceRow>),
    Local {
        warm: Vec<PrimalTraceRow>,
        rows: Vec<PrimalTraceRow>,
    },
}

pub struct Outcome {
    pub report: RunReport,
    pub trace: TraceData,
}

struct Ctx<'a> {
    problem: &'a Problem,
    toggles: &'a VerifyToggles,
    strict: bool,
    reference: Option<Reference>,
    checks: Vec<CheckResult>,
    flags: Vec<String>,
}

impl Ctx<'_> {
    fn m(&self) -> f64 {
        self.problem.oracle.qsc_constant()
    }

    fn add(&mut self, check: CheckResult) {
        if self.toggles.wants(&check.name) {
            self.checks.push(check);
        }
    }

    fn gap(&self, value: f64) -> Option<f64> {
        self.reference.as_ref().map(|r| value - r.f_star)
    }

    fn x0_distance(&self) -> Option<f64> {
        self.reference
            .as_ref()
            .map(|r| self.problem.oracle.metric().norm(&(&self.problem.x0 - r.point())))
    }
}

fn margin_check(name: &str, bound: f64, value: f64, detail: String) -> CheckResult {
    CheckResult::new(name, value <= bound, Some(bound - value), detail)
}

fn primal_checks(ctx: &mut Ctx, run: &PrimalRun, sigma: &SigmaMode) -> Result<(Option<f64>, Fits)> {
    let m = ctx.m();
    let p = verify_progress(&run.trace, PROGRESS_TOL);
    ctx.add(CheckResult::new(
        "progress",
        p.passed,
        Some(p.worst_slack),
        format!("{} steps, {} violations", p.steps, p.violations),
    ));
    ctx.add(CheckResult::new("monotone", verify_monotone(&run.trace, MONOTONE_TOL), None, ""));
    if ctx.toggles.wants("step_bound") {
        let bounds = verify_run_step_bounds(&ctx.problem.oracle, run, false)?;
        let worst = bounds.iter().map(|c| c.step_length - c.bound).fold(f64::NEG_INFINITY, f64::max);
        let ok = bounds.iter().all(|c| c.passed);
        ctx.add(CheckResult::new(
            "step_bound",
            ok,
            bounds.is_empty().then_some(0.0).or(Some(-worst)),
            format!("{} steps", bounds.len()),
        ));
    }
    let local = check_local_quadratic(&run.trace, m);
    ctx.add(CheckResult::new(
        "local_quadratic",
        local.status != LocalCheckStatus::Failed,
        Some(1.0 - local.worst_ratio),
        format!("{:?}, entry {:?}, {} steps checked", local.status, local.entry, local.checked),
    ));
    if let SigmaMode::Adaptive { initial, .. } = *sigma {
        let cap = initial.max(2.0 * m);
        let worst = run.trace.iter().filter_map(|r| r.sigma).fold(0.0, f64::max);
        ctx.add(margin_check("sigma_bound", cap * (1.0 + 1e-12), worst, format!("max sigma {worst:e}, cap {cap:e}")));
    }
    let mut fits = Fits::default();
    let Some(r) = ctx.reference.clone() else { return Ok((None, fits)) };
    let d_hat = observed_diameter(&run.iterates, Some(&r.point()), ctx.problem.oracle.metric());
    let rate = verify_primal_rate(&run.trace, r.f_star, m, d_hat);
    ctx.add(CheckResult::new(
        "rate",
        rate.passed,
        Some(1.0 - rate.worst_ratio),
        format!("D_hat {d_hat:e}, first violation {:?}", rate.first_violation),
    ));
    let gaps: Vec<f64> = run.trace.iter().map(|row| row.value - r.f_star).collect();
    match fit_linear_rate(&gaps) {
        Ok(fit) => {
            let bound = 8.0 * m * d_hat;
            ctx.add(margin_check(
                "linear_fit",
                bound,
                fit.implied_factor,
                format!("-1/slope {:.4} vs 8*M*D_hat {:.4}, R^2 {:.4}", fit.implied_factor, bound, fit.r_squared),
            ));
            fits.linear = Some(fit);
        }
        Err(e) => ctx.add(CheckResult::new("linear_fit", true, None, format!("not evaluated: {e}"))),
    }
    Ok((Some(d_hat), fits))
}

fn need_reference(spec: &SolverSpec, toggles: &VerifyToggles) -> bool {
    match spec {
        SolverSpec::Accelerated { f_star, r, .. } => f_star.is_none() || r.is_none() || toggles.enabled,
        _ => toggles.enabled,
    }
}

/// Runs the configured solver. Solver-level failures are reported in the
/// outcome; configuration problems are returned as errors.
pub fn execute(cfg: &RunConfig, strict: bool) -> Result<Outcome> {
    let start = Instant::now();
    let problem = build(&cfg.instance)?;
    let m = problem.oracle.qsc_constant();
    let mut ctx = Ctx {
        problem: &problem,
        toggles: &cfg.verify,
        strict,
        reference: None,
        checks: Vec::new(),
        flags: Vec::new(),
    };
    let mut ref_info = None;
    if need_reference(&cfg.solver, &cfg.verify) {
        let (r, hit) = reference(&cfg.instance, &problem)?;
        ref_info = Some(ReferenceInfo {
            f_star: r.f_star,
            g: r.g,
            iterations: r.iterations,
            cache_hit: hit,
            key: r.key.clone(),
        });
        ctx.reference = Some(r);
    }
    let counted = CountingOracle::new(&problem.oracle);
    let psi = &problem.psi;
    let x0 = &problem.x0;

    let mut d_hat = None;
    let mut fits = Fits::default();
    let (status, success, iterations, inner_iterations, solver_calls, final_value, final_g, error, trace);
    match &cfg.solver {
        SolverSpec::Primal { sigma, grad_tol, max_iters } => {
            let sigma = sigma.unwrap_or(SigmaMode::Constant { sigma: m });
            if let SigmaMode::Constant { sigma: s } = sigma {
                if s < m {
                    if ctx.strict {
                        return Err(CliError::Config(format!("sigma {s} is below M = {m}")));
                    }
                    ctx.flags.push("sigma_below_m".into());
                }
            }
            let pc = PrimalConfig {
                sigma,
                ..PrimalConfig::default().with_tolerance(*grad_tol, *max_iters).with_diagnostics()
            };
            let run = solve_primal(&counted, psi, x0, &pc)?;
            let (dh, f) = primal_checks(&mut ctx, &run, &sigma)?;
            d_hat = dh;
            fits = f;
            status = serde_json::to_value(run.status)?;
            success = run.status.is_success();
            iterations = run.iterations();
            inner_iterations = None;
            solver_calls = run.step_computations;
            final_value = run.final_value();
            final_g = Some(run.final_g());
            error = run.error.clone();
            trace = TraceData::Primal(run.trace);
        }
        SolverSpec::Dual { m: m_cfg, nu, max_outer, max_inner } => {
            let m_used = m_cfg.unwrap_or(m);
            if m_used < m {
                if ctx.strict {
                    return Err(CliError::Config(format!("dual M {m_used} is below the declared {m}")));
                }
                ctx.flags.push("m_below_declared".into());
            }
            let dc = DualConfig::new(m_used, *nu).with_limits(*max_outer, *max_inner);
            let run = solve_dual(&counted, psi, x0, &dc)?;
            if run.m_doublings > 0 {
                ctx.flags.push(format!("m_doubled_{}x", run.m_doublings));
            }
            ctx.add(CheckResult::new("inner_stops", inner_stops_satisfied(&run.trace), None, ""));
            let iq = check_inner_quadratic(&run.inner);
            ctx.add(CheckResult::new(
                "inner_quadratic",
                iq.passed,
                Some(-iq.worst_excess),
                format!("{} steps checked", iq.checked),
            ));
            if let (Some(r), Some(dist)) = (ctx.reference.clone(), ctx.x0_distance()) {
                let g = verify_dual_guarantee(&run.trace, dist, r.f_star, *nu);
                ctx.add(CheckResult::new(
                    "guarantee",
                    g.passed,
                    Some(1.0 - g.worst_ratio),
                    format!("first violation {:?}", g.first_violation),
                ));
                let rate = verify_dual_rate(&run, dist, *nu);
                ctx.add(CheckResult::new(
                    "rate",
                    rate.passed,
                    Some(1.0 - rate.worst_ratio),
                    format!(
                        "envelope {}, inner count {} of bound {:.1}",
                        rate.envelope_passed, rate.total_inner, rate.total_bound
                    ),
                ));
            }
            status = serde_json::to_value(run.status)?;
            success = run.status.is_success();
            iterations = run.outer_iterations();
            inner_iterations = Some(run.inner_iterations());
            solver_calls = run.oracle_calls;
            final_value = run.final_value();
            final_g = Some(run.final_g());
            error = run.error.clone();
            trace = TraceData::Dual {
                inner: flatten_inner(&run.inner),
                rows: run.trace,
            };
        }
        SolverSpec::Accelerated { r, c, gamma, a0, f_star, epsilon, max_iters } => {
            let reference = ctx.reference.clone();
            let f_star = f_star
                .or(reference.as_ref().map(|r| r.f_star))
                .ok_or_else(|| CliError::Config("accelerated solve needs f_star".into()))?;
            let radius = match (r, ctx.x0_distance()) {
                (Some(r), _) => *r,
                (None, Some(d)) => d.max(radius_floor(m)),
                (None, None) => return Err(CliError::Config("accelerated solve needs r".into())),
            };
            let mut ac = AccelConfig::new(radius, f_star);
            ac.c = *c;
            ac.gamma = *gamma;
            ac.a0 = *a0;
            ac.epsilon = *epsilon;
            ac.max_iters = *max_iters;
            ac.strict = ctx.strict;
            if let Some(rf) = &reference {
                ac = ac.with_reference_point(rf.point());
            }
            let run = match solve_accelerated(&counted, psi, x0, &ac) {
                Err(QscError::InvalidParameter(msg)) => return Err(CliError::Config(msg)),
                other => other?,
            };
            for flag in &run.params.flags {
                ctx.flags.push(serde_json::to_value(flag)?.as_str().unwrap_or_default().to_string());
            }
            let params = run.params.clone();
            if let Some(dist) = ctx.x0_distance() {
                let pot = verify_accel_potential(&run.trace, &params, dist);
                ctx.add(CheckResult::new(
                    "potential",
                    pot.passed && pot.simplified_passed,
                    Some(1.0 - pot.worst_ratio),
                    format!(
                        "lemma rhs {:e}, (5+c)^2R^2/2 = {:e}, first violation {:?}",
                        pot.rhs, pot.rhs_simplified, pot.first_violation
                    ),
                ));
                let b = verify_accel_boundedness(&run.trace, &params);
                ctx.add(margin_check(
                    "boundedness",
                    b.radius,
                    b.max_v_dist.max(b.max_x_dist),
                    format!("max |v-x*| {:e}, max |x-x*| {:e}", b.max_v_dist, b.max_x_dist),
                ));
            }
            let rate = verify_accel_rate(&run.trace, &params);
            ctx.add(CheckResult::new(
                "rate",
                rate.passed,
                Some(1.0 - rate.worst_ratio),
                format!("first violation {:?}", rate.first_violation),
            ));
            ctx.add(CheckResult::new("a_growth", verify_a_growth(&run.trace, &params), None, ""));
            let gaps: Vec<f64> = run.trace.iter().map(|row| row.value - params.f_star).collect();
            match fit_linear_rate(&gaps) {
                Ok(fit) => {
                    let bound = (params.m * params.r).powf(2.0 / 3.0) + ACCEL_BURN_IN;
                    ctx.add(margin_check(
                        "linear_fit",
                        bound,
                        fit.implied_factor,
                        format!("-1/slope {:.4} vs (MR)^(2/3)+{ACCEL_BURN_IN} = {bound:.4}", fit.implied_factor),
                    ));
                    fits.linear = Some(fit);
                }
                Err(e) => ctx.add(CheckResult::new("linear_fit", true, None, format!("not evaluated: {e}"))),
            }
            status = serde_json::to_value(run.status)?;
            success = run.status.is_success();
            iterations = run.iterations();
            inner_iterations = Some(run.inner_iterations());
            solver_calls = run.oracle_calls;
            final_value = run.final_value();
            final_g = None;
            error = run.error.clone();
            trace = TraceData::Accelerated(run.trace);
        }
        SolverSpec::PureNewtonLocal { warm_tol, grad_tol, max_iters } => {
            let radius = if m > 0.0 { 1.0 / (18.0 * m) } else { f64::INFINITY };
            // single σ = M steps until η ≤ 1/(18M) or g ≤ warm_tol
            let wc = PrimalConfig::constant(m).with_tolerance(*warm_tol, 1).with_diagnostics();
            let mut x = x0.clone();
            let mut warm: Vec<PrimalTraceRow> = Vec::new();
            let mut warm_steps = 0;
            let mut entered = false;
            for _ in 0..WARM_MAX_STEPS {
                let run = solve_primal(&counted, psi, &x, &wc)?;
                warm_steps += run.step_computations;
                let first = run.trace[0].clone();
                if first.eta.is_some_and(|e| e <= radius) || first.g <= *warm_tol {
                    entered = true;
                    break;
                }
                if !matches!(run.status, PrimalStatus::MaxIters | PrimalStatus::GradTolReached) {
                    break;
                }
                warm.push(PrimalTraceRow { k: warm.len(), ..first });
                x = run.x;
            }
            if !entered {
                ctx.flags.push("local_region_not_reached".into());
            }
            let lc = PrimalConfig::constant(0.0).with_tolerance(*grad_tol, *max_iters).with_diagnostics();
            let run = solve_primal(&counted, psi, &x, &lc)?;
            let local = check_local_quadratic(&run.trace, m);
            ctx.add(CheckResult::new(
                "local_quadratic",
                local.status == LocalCheckStatus::Passed,
                Some(1.0 - local.worst_ratio),
                format!("{:?}, entry {:?}, {} steps checked", local.status, local.entry, local.checked),
            ));
            if let Some(r) = &ctx.reference {
                let floor = 1e-15 * (1.0 + r.f_star.abs());
                let gaps: Vec<f64> = run.trace.iter().map(|row| row.value - r.f_star).collect();
                fits.quadratic_order = fit_quadratic_order(&gaps, floor, 3).ok();
            }
            status = serde_json::to_value(run.status)?;
            success = run.status.is_success();
            iterations = run.iterations();
            inner_iterations = Some(warm.len());
            solver_calls = run.step_computations + warm_steps;
            final_value = run.final_value();
            final_g = Some(run.final_g());
            error = run.error.clone();
            trace = TraceData::Local { warm, rows: run.trace };
        }
    }

    let report = RunReport {
        config: serde_json::to_value(cfg)?,
        problem: problem.name.clone(),
        dim: problem.oracle.dim(),
        qsc_constant: m,
        solver: cfg.solver.name().to_string(),
        status: status.as_str().unwrap_or_default().to_string(),
        success,
        iterations,
        inner_iterations,
        solver_oracle_calls: solver_calls,
        oracle_calls: counted.calls(),
        final_value,
        final_g,
        final_gap: ctx.gap(final_value),
        reference: ref_info,
        d_hat,
        d_hat_caveat: d_hat.map(|_| D_HAT_CAVEAT.to_string()),
        fits,
        checks: ctx.checks,
        flags: ctx.flags,
        error,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(Outcome { report, trace })
}

/// Writes `trace.csv`, `report.json` and the auxiliary traces into `dir`.
pub fn write_outcome(dir: &Path, outcome: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    match &outcome.trace {
        TraceData::Primal(rows) => save_rows(dir.join("trace.csv"), rows)?,
        TraceData::Dual { rows, inner } => {
            save_rows(dir.join("trace.csv"), rows)?;
            save_rows(dir.join("inner.csv"), inner)?;
        }
        TraceData::Accelerated(rows) => save_rows(dir.join("trace.csv"), rows)?,
        TraceData::Local { warm, rows } => {
            save_rows(dir.join("trace.csv"), rows)?;
            save_rows(dir.join("warm.csv"), warm)?;
        }
    }
    write_json(&dir.join("report.json"), &outcome.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{InstanceSpec, OutputSpec, ProblemSpec};
    use qsc_core::zoo::{SyntheticKind, SyntheticSpec};

    fn config(kind: &str, n: usize, solver: SolverSpec) -> RunConfig {
        RunConfig {
            version: 1,
            instance: InstanceSpec {
                problem: ProblemSpec::Synthetic {
                    generator: SyntheticSpec::new(SyntheticKind::from_name(kind).unwrap(), n, 10 * n, 5),
                },
                ridge: None,
                composite: None,
                x0: None,
                qsc_constant: None,
            },
            solver,
            verify: VerifyToggles::default(),
            output: OutputSpec::default(),
        }
    }

    fn with_cache<T>(f: impl FnOnce() -> T) -> T {
        let dir = tempfile::tempdir().unwrap();
        // tests in this module share the variable; the value only needs to be writable
        std::env::set_var("QSC_CACHE_DIR", dir.path());
        f()
    }

    #[test]
    fn quadratic_primal_takes_one_step() {
        let cfg = config(
            "quadratic",
            4,
            SolverSpec::Primal {
                sigma: None,
                grad_tol: 1e-9,
                max_iters: 100,
            },
        );
        let out = with_cache(|| execute(&cfg, false).unwrap());
        assert!(out.report.success);
        assert_eq!(out.report.iterations, 1);
        assert!(out.report.checks.iter().all(|c| c.passed), "{:?}", out.report.checks);
    }

    #[test]
    fn every_check_appears_once_and_skips_are_honoured() {
        let mut cfg = config(
            "logistic",
            3,
            SolverSpec::Dual {
                m: None,
                nu: 1e-8,
                max_outer: 1000,
                max_inner: 50,
            },
        );
        cfg.verify.skip = vec!["rate".into()];
        let out = with_cache(|| execute(&cfg, false).unwrap());
        let mut names: Vec<&str> = out.report.checks.iter().map(|c| c.name.as_str()).collect();
        names.sort();
        assert_eq!(names, ["guarantee", "inner_quadratic", "inner_stops"]);
        assert!(out.report.failed_checks().next().is_none());
    }

    #[test]
    fn strict_mode_rejects_small_radius() {
        let cfg = config(
            "logistic",
            3,
            SolverSpec::Accelerated {
                r: Some(0.1),
                c: 1.0,
                gamma: None,
                a0: None,
                f_star: Some(0.0),
                epsilon: 1e-6,
                max_iters: 10,
            },
        );
        let err = with_cache(|| execute(&cfg, true).err().unwrap());
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn pure_newton_enters_the_local_region() {
        let mut cfg = config(
            "logistic",
            4,
            SolverSpec::PureNewtonLocal {
                warm_tol: 1e-8,
                grad_tol: 1e-12,
                max_iters: 50,
            },
        );
        cfg.instance.ridge = Some(0.1);
        let out = with_cache(|| execute(&cfg, false).unwrap());
        assert!(out.report.success, "{:?}", out.report);
        let local = out.report.checks.iter().find(|c| c.name == "local_quadratic").unwrap();
        assert!(local.passed, "{local:?}");
    }
}
