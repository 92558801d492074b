//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qsc_cli::config::{InstanceSpec, ProblemSpec};
use qsc_cli::fit::{fit_linear_rate, fit_quadratic_order, loglog_slope};
use qsc_cli::problem::{build, Problem};
use qsc_cli::reference::{compute_reference, Reference};
use qsc_cli::verify::pair_radius;
use qsc_core::accelerated::{radius_floor, verify_accel_boundedness, verify_accel_potential, verify_accel_rate};
use qsc_core::dual::{check_inner_quadratic, verify_dual_guarantee, verify_dual_rate};
use qsc_core::linalg::max_generalized_eigenvalue;
use qsc_core::oracle::{
    check_function_bounds, check_gradient_bound, check_hessian_stability, check_qsc, sample_pair, QscCheckOptions,
};
use qsc_core::primal::{
    check_local_quadratic, observed_diameter, verify_monotone, verify_progress, verify_run_step_bounds,
    LocalCheckStatus,
};
use qsc_core::zoo::{SyntheticKind, SyntheticSpec};
use qsc_core::{
    newton_step, solve_accelerated, solve_dual, solve_primal, AccelConfig, CompositeTerm, DualConfig, MetricOperator,
    PrimalConfig, PrimalVector, SigmaMode, SmoothOracle,
};

struct Line {
    passed: bool,
    text: String,
}

fn report(n: usize, name: &str, passed: bool, detail: String) -> Line {
    let verdict = if passed { "PASS" } else { "FAIL" };
    Line {
        passed,
        text: format!("criterion {n} {name}: {verdict} ({detail})"),
    }
}

fn spec(kind: SyntheticKind, n: usize, m: usize, seed: u64) -> InstanceSpec {
    InstanceSpec {
        problem: ProblemSpec::Synthetic {
            generator: SyntheticSpec::new(kind, n, m, seed),
        },
        ridge: None,
        composite: None,
        x0: None,
        qsc_constant: None,
    }
}

fn named(kind: &str, n: usize, m: usize, seed: u64) -> InstanceSpec {
    spec(SyntheticKind::from_name(kind).unwrap(), n, m, seed)
}

/// Quadratic, soft-max (μ = 1, 0.1), logistic, exponential and the two
/// matrix problems on random 10×10 matrices.
fn zoo() -> Vec<Problem> {
    [
        named("quadratic", 10, 10, 1),
        spec(SyntheticKind::SoftMax { mu: 1.0 }, 10, 100, 1),
        spec(SyntheticKind::SoftMax { mu: 0.1 }, 10, 100, 1),
        named("logistic", 10, 100, 1),
        named("exponential", 10, 100, 1),
        named("matrix_scaling", 10, 10, 1),
        named("matrix_balancing", 10, 10, 1),
    ]
    .iter()
    .map(|s| build(s).unwrap())
    .collect()
}

fn label(p: &Problem) -> String {
    format!("{}(M={:.3})", p.name, p.oracle.qsc_constant())
}

fn logistic_20() -> Problem {
    build(&named("logistic", 20, 200, 1)).unwrap()
}

fn reference_of(p: &Problem) -> Reference {
    compute_reference(p, String::new()).expect("reference solve")
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn criterion_1() -> Line {
    let start = Instant::now();
    let mut worst: Vec<String> = Vec::new();
    let mut ok = true;
    for p in zoo() {
        let r = check_qsc(
            &p.oracle,
            &QscCheckOptions {
                seed: 7,
                samples: 10_000,
                ..QscCheckOptions::default()
            },
        );
        ok &= r.passed;
        worst.push(format!("{} viol {:.1e}/tol {:.1e}", label(&p), r.max_violation, r.tolerance));
    }
    let t = start.elapsed();
    ok &= t <= Duration::from_secs(60);
    report(1, "qsc certification", ok, format!("{}; {:.1}s", worst.join(", "), secs(t)))
}

fn criterion_2() -> Line {
    let start = Instant::now();
    let mut ok = true;
    let mut fails = Vec::new();
    for p in zoo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let o = &p.oracle;
        let r_max = pair_radius(o.qsc_constant());
        let mut bad = [0usize; 3];
        for _ in 0..1000 {
            let (x, y) = sample_pair(&mut rng, o.metric(), 1.0, r_max);
            bad[0] += usize::from(!check_hessian_stability(o, &x, &y).unwrap().passed);
            bad[1] += usize::from(!check_gradient_bound(o, &x, &y).unwrap().passed);
            bad[2] += usize::from(!check_function_bounds(o, &x, &y).unwrap().passed);
        }
        if bad.iter().any(|b| *b > 0) {
            ok = false;
            fails.push(format!("{} {:?}", label(&p), bad));
        }
    }
    let t = start.elapsed();
    ok &= t <= Duration::from_secs(60);
    let detail = if fails.is_empty() { "7 instances x 1000 pairs".to_string() } else { fails.join(", ") };
    report(2, "lemma suite", ok, format!("{detail}; {:.1}s", secs(t)))
}

fn criterion_3() -> Line {
    let mut ok = true;
    let mut notes = Vec::new();
    for p in zoo() {
        let m = p.oracle.qsc_constant();
        let run = solve_primal(&p.oracle, &p.psi, &p.x0, &PrimalConfig::constant(m).with_tolerance(1e-10, 10_000)).unwrap();
        let progress = verify_progress(&run.trace, 1e-8);
        let bounds = verify_run_step_bounds(&p.oracle, &run, false).unwrap();
        let monotone = verify_monotone(&run.trace, 1e-10);
        let step_ok = bounds.iter().all(|c| c.passed);
        let good = run.status.is_success() && progress.passed && step_ok && monotone;
        ok &= good;
        notes.push(format!("{} {} steps{}", label(&p), progress.steps, if good { "" } else { " FAIL" }));
    }
    report(3, "per-step theorem suite", ok, notes.join(", "))
}

fn criterion_4() -> Line {
    let start = Instant::now();
    let p = logistic_20();
    let r = reference_of(&p);
    let run = solve_primal(&p.oracle, &p.psi, &p.x0, &PrimalConfig::constant(1.0).with_tolerance(1e-12, 100_000)).unwrap();
    let gaps: Vec<f64> = run.trace.iter().map(|row| row.value - r.f_star).collect();
    let reached = gaps.iter().position(|g| *g <= 1e-10 * gaps[0]);
    let d_hat = observed_diameter(&run.iterates, Some(&r.point()), p.oracle.metric());
    let fit = fit_linear_rate(&gaps);
    let t = start.elapsed();
    match (reached, fit) {
        (Some(k), Ok(fit)) => {
            let bound = 8.0 * d_hat;
            let ok = fit.implied_factor <= bound && t <= Duration::from_secs(10);
            report(
                4,
                "global linear phase",
                ok,
                format!(
                    "eps=1e-10 at k={k}; -1/slope {:.3} <= 8MD_hat {:.3} (window {:?}, R^2 {:.3}); {:.2}s",
                    fit.implied_factor,
                    bound,
                    fit.window,
                    fit.r_squared,
                    secs(t)
                ),
            )
        }
        (reached, fit) => report(4, "global linear phase", false, format!("reached {reached:?}, fit {fit:?}")),
    }
}

fn criterion_5() -> Line {
    let mut s = named("logistic", 20, 200, 1);
    s.ridge = Some(0.1);
    let p = build(&s).unwrap();
    let m = p.oracle.qsc_constant();
    let run = solve_primal(
        &p.oracle,
        &p.psi,
        &p.x0,
        &PrimalConfig::constant(m).with_tolerance(1e-13, 1000).with_diagnostics(),
    )
    .unwrap();
    // polish from the final iterate to pin the optimal value below the gaps being fitted
    let polish = solve_primal(&p.oracle, &p.psi, &run.x, &PrimalConfig::default().with_tolerance(1e-14, 100)).unwrap();
    let f_star = polish.final_value().min(run.final_value());
    let gaps: Vec<f64> = run.trace.iter().map(|row| row.value - f_star).collect();
    let floor = 1e-15 * (1.0 + f_star.abs());
    let order = fit_quadratic_order(&gaps, floor, 3);
    let local = check_local_quadratic(&run.trace, m);
    let ok = run.status.is_success() && order.as_ref().is_ok_and(|o| *o >= 1.9) && local.status == LocalCheckStatus::Passed;
    report(
        5,
        "local quadratic burst",
        ok,
        format!(
            "order {:.3} over last 3 pairs; eta check {:?} from k={:?}, {} steps, worst ratio {:.3}",
            order.unwrap_or(f64::NAN),
            local.status,
            local.entry,
            local.checked,
            local.worst_ratio
        ),
    )
}

fn criterion_6() -> Line {
    let p = logistic_20();
    let m = p.oracle.qsc_constant();
    let cfg = PrimalConfig {
        sigma: SigmaMode::Adaptive {
            initial: 1e-6,
            min: 1e-12,
        },
        ..PrimalConfig::default().with_tolerance(1e-10, 10_000)
    };
    let run = solve_primal(&p.oracle, &p.psi, &p.x0, &cfg).unwrap();
    let max_sigma = run.trace.iter().filter_map(|r| r.sigma).fold(0.0, f64::max);
    let k = run.iterations();
    let ok = run.status.is_success() && max_sigma <= 2.0 * m && run.step_computations <= 2 * k + 25;
    report(
        6,
        "adaptive sigma",
        ok,
        format!("max sigma {max_sigma:.4} <= {}; {} step computations for {k} iterations", 2.0 * m, run.step_computations),
    )
}

fn criterion_7() -> Line {
    let p = logistic_20();
    let r = reference_of(&p);
    let nu = 1e-8;
    let run = solve_dual(&p.oracle, &p.psi, &p.x0, &DualConfig::new(p.oracle.qsc_constant(), nu)).unwrap();
    let dist = p.oracle.metric().norm(&(&p.x0 - r.point()));
    let g = verify_dual_guarantee(&run.trace, dist, r.f_star, nu);
    let rate = verify_dual_rate(&run, dist, nu);
    let inner = check_inner_quadratic(&run.inner);
    let ok = run.status.is_success() && g.passed && rate.passed && inner.passed && inner.checked > 0;
    report(
        7,
        "dual newton",
        ok,
        format!(
            "{} outer, {} inner (bound {:.0}); guarantee worst ratio {:.3}; envelope {}; {} inner steps checked",
            run.outer_iterations(),
            rate.total_inner,
            rate.total_bound,
            g.worst_ratio,
            rate.envelope_passed,
            inner.checked
        ),
    )
}

fn accelerated_run(p: &Problem, r: &Reference, epsilon: f64) -> (qsc_core::AccelRun, f64) {
    let m = p.oracle.qsc_constant();
    let d0 = p.oracle.metric().norm(&(&p.x0 - r.point()));
    let mut cfg = AccelConfig::new(d0.max(radius_floor(m)), r.f_star).with_reference_point(r.point());
    cfg.epsilon = epsilon;
    (solve_accelerated(&&p.oracle, &p.psi, &p.x0, &cfg).unwrap(), d0)
}

fn criterion_8() -> Line {
    let start = Instant::now();
    let p = logistic_20();
    let r = reference_of(&p);
    let (run, d0) = accelerated_run(&p, &r, 1e-10);
    let pot = verify_accel_potential(&run.trace, &run.params, d0);
    let rate = verify_accel_rate(&run.trace, &run.params);
    let bounded = verify_accel_boundedness(&run.trace, &run.params);
    let mut ok = run.status.is_success() && pot.passed && pot.simplified_passed && rate.passed && bounded.passed;
    let mut detail = format!(
        "logistic: {} iterations, potential {:.3} of rhs, rate {}, max |v-x*| {:.3} <= {:.3}",
        run.iterations(),
        pot.worst_ratio,
        rate.passed,
        bounded.max_v_dist,
        bounded.radius
    );

    let (mut ms, mut primal_iters, mut accel_iters) = (vec![], vec![], vec![]);
    for mu in [1.0, 0.1, 0.01] {
        let p = build(&spec(SyntheticKind::SoftMax { mu }, 10, 100, 1)).unwrap();
        let m = p.oracle.qsc_constant();
        let r = reference_of(&p);
        let f0 = p.oracle.value(&p.x0);
        let target = r.f_star + 1e-6 * (f0 - r.f_star);
        let pc = PrimalConfig {
            target_value: Some(target),
            ..PrimalConfig::constant(m).with_tolerance(1e-14, 1_000_000)
        };
        let prun = solve_primal(&p.oracle, &p.psi, &p.x0, &pc).unwrap();
        let (arun, d0) = accelerated_run(&p, &r, 1e-6);
        let pot = verify_accel_potential(&arun.trace, &arun.params, d0);
        let rate = verify_accel_rate(&arun.trace, &arun.params);
        let bounded = verify_accel_boundedness(&arun.trace, &arun.params);
        ok &= prun.status.is_success() && arun.status.is_success();
        ok &= pot.passed && pot.simplified_passed && rate.passed && bounded.passed;
        ms.push(m);
        primal_iters.push(prun.iterations() as f64);
        accel_iters.push(arun.iterations() as f64);
    }
    let ps = loglog_slope(&ms, &primal_iters).unwrap_or(f64::NAN);
    let acs = loglog_slope(&ms, &accel_iters).unwrap_or(f64::NAN);
    ok &= (ps - 1.0).abs() <= 0.25 && (acs - 2.0 / 3.0).abs() <= 0.25;
    let t = start.elapsed();
    ok &= t <= Duration::from_secs(300);
    detail.push_str(&format!(
        "; soft-max sweep M={ms:?}: primal {primal_iters:?} slope {ps:.3}, accelerated {accel_iters:?} slope {acs:.3}; {:.1}s",
        secs(t)
    ));
    report(8, "accelerated", ok, detail)
}

/// Projected gradient on the box-constrained quadratic model.
fn brute_force(
    g: &PrimalVector,
    k: &nalgebra::DMatrix<f64>,
    x: &PrimalVector,
    lo: &PrimalVector,
    hi: &PrimalVector,
) -> PrimalVector {
    let metric = MetricOperator::identity(x.len());
    let l = max_generalized_eigenvalue(k, &metric).unwrap();
    let mut y = x.clone();
    for _ in 0..1_000_000 {
        let grad = g + k * (&y - x);
        let next = (&y - grad / l).zip_zip_map(lo, hi, |v, a, b| v.clamp(a, b));
        let delta = (&next - &y).norm();
        y = next;
        if delta <= 1e-12 {
            break;
        }
    }
    y
}

fn criterion_9() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in 1..=3 {
        for (kind, seed) in [("logistic", 1u64), ("exponential", 2), ("soft_max", 3)] {
            let p = build(&named(kind, n, 10 * n, seed)).unwrap();
            let o = &p.oracle;
            for _ in 0..5 {
                let lo = PrimalVector::from_fn(n, |_, _| rng.random_range(-1.0..0.0));
                let hi = PrimalVector::from_fn(n, |i, _| lo[i] + rng.random_range(0.05..1.0));
                let psi = CompositeTerm::boxed(lo.clone(), hi.clone()).unwrap();
                let x = PrimalVector::from_fn(n, |i, _| rng.random_range(lo[i]..=hi[i]));
                let beta = rng.random_range(0.1..2.0);
                let step = newton_step(o, &psi, &x, beta, None).unwrap();
                let e = o.evaluate(&x);
                let k = &e.hessian + o.metric().matrix() * beta;
                let y = brute_force(&e.gradient, &k, &x, &lo, &hi);
                worst = worst.max((&step.x_plus - y).norm());
                cases += 1;
            }
        }
    }
    report(9, "oracle equivalence", worst <= 1e-8, format!("{cases} box problems, max deviation {worst:.2e}"))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    std::env::set_var("QSC_CACHE_DIR", dir.path());
    let criteria: [fn() -> Line; 9] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
    ];
    let mut failed = 0;
    for c in criteria {
        let line = c();
        println!("{}", line.text);
        failed += usize::from(!line.passed);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
