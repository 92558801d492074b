//! Oracle certification: QSC constant, lemma inequalities on random pairs,
//! and finite-difference derivative checks.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qsc_core::oracle::{
    check_function_bounds, check_gradient, check_gradient_bound, check_hessian, check_hessian_stability, check_qsc,
    sample_pair, QscCheckOptions,
};
use qsc_core::SmoothOracle;

use crate::config::VerifyConfig;
use crate::error::Result;
use crate::problem::build;
use crate::report::{CheckResult, VerifyReport};

pub const FD_STEP: f64 = 1e-5;
pub const GRADIENT_FD_TOL: f64 = 1e-6;
pub const HESSIAN_FD_TOL: f64 = 1e-5;

/// Pair distances are drawn up to `3/M` (or 1 when `M = 0`).
pub fn pair_radius(m: f64) -> f64 {
    if m > 0.0 {
        3.0 / m
    } else {
        1.0
    }
}

pub fn verify_oracle<O: SmoothOracle + ?Sized>(o: &O, seed: u64, samples: usize, pairs: usize, fd_points: usize) -> Result<Vec<CheckResult>> {
    let mut checks = Vec::new();
    let q = check_qsc(
        o,
        &QscCheckOptions {
            seed,
            samples,
            ..QscCheckOptions::default()
        },
    );
    checks.push(CheckResult::new(
        "check_qsc",
        q.passed,
        Some(q.tolerance - q.max_violation),
        format!(
            "max violation {:e} (tolerance {:e}), largest ratio {:.6} vs M = {}, worst estimate {:?}",
            q.max_violation,
            q.tolerance,
            q.max_ratio,
            q.declared_m,
            q.worst_triple.as_ref().map(|t| t.estimate)
        ),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let r_max = pair_radius(o.qsc_constant());
    let (mut stab, mut grad, mut func) = ((true, f64::INFINITY, 0), (true, f64::INFINITY, 0), (true, f64::INFINITY, 0));
    for _ in 0..pairs {
        let (x, y) = sample_pair(&mut rng, o.metric(), 1.0, r_max);
        let s = check_hessian_stability(o, &x, &y)?;
        stab = (stab.0 && s.passed, stab.1.min(s.margin), stab.2 + usize::from(!s.passed));
        let g = check_gradient_bound(o, &x, &y)?;
        grad = (grad.0 && g.passed, grad.1.min(g.rhs - g.lhs), grad.2 + usize::from(!g.passed));
        let f = check_function_bounds(o, &x, &y)?;
        let slack = (f.middle - f.lower).min(f.upper - f.middle);
        func = (func.0 && f.passed, func.1.min(slack), func.2 + usize::from(!f.passed));
    }
    for (name, (ok, margin, fails)) in [("hessian_stability", stab), ("gradient_bound", grad), ("function_bounds", func)] {
        checks.push(CheckResult::new(
            name,
            ok,
            (pairs > 0).then_some(margin),
            format!("{fails} of {pairs} pairs fail, smallest margin {margin:e}"),
        ));
    }

    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for _ in 0..fd_points {
        let (x, _) = sample_pair(&mut rng, o.metric(), 1.0, 0.0);
        worst_g = worst_g.max(check_gradient(o, &x, FD_STEP)?);
        worst_h = worst_h.max(check_hessian(o, &x, FD_STEP)?);
    }
    checks.push(CheckResult::new(
        "gradient_fd",
        worst_g <= GRADIENT_FD_TOL,
        Some(GRADIENT_FD_TOL - worst_g),
        format!("worst relative error {worst_g:e} over {fd_points} points"),
    ));
    checks.push(CheckResult::new(
        "hessian_fd",
        worst_h <= HESSIAN_FD_TOL,
        Some(HESSIAN_FD_TOL - worst_h),
        format!("worst relative error {worst_h:e} over {fd_points} points"),
    ));
    Ok(checks)
}

pub fn run_verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let start = Instant::now();
    let problem = build(&cfg.instance)?;
    let checks = verify_oracle(&problem.oracle, cfg.seed, cfg.samples, cfg.pairs, cfg.fd_points)?;
    Ok(VerifyReport {
        config: serde_json::to_value(cfg)?,
        problem: problem.name.clone(),
        dim: problem.oracle.dim(),
        qsc_constant: problem.oracle.qsc_constant(),
        passed: checks.iter().all(|c| c.passed),
        checks,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
