use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qsc_core::accelerated::{verify_a_growth, AccelParameters, AccelTraceRow};
use qsc_core::composite::{newton_step, stationarity_gap, CompositeTerm, ProxQuadratic};
use qsc_core::linalg::{max_generalized_eigenvalue, min_generalized_eigenvalue, regularized_solve, MetricOperator};
use qsc_core::oracle::{
    affine_substitute, check_function_bounds, check_gradient_bound, check_hessian_stability, phi, AffineMetric,
    SmoothOracle,
};
use qsc_core::zoo::{generate_synthetic, MatrixProblem, SyntheticKind, SyntheticSpec, ZooInstance};

fn instance(kind: &str, n: usize, seed: u64) -> ZooInstance {
    generate_synthetic(&SyntheticSpec::new(SyntheticKind::from_name(kind).unwrap(), n, 8 * n, seed)).unwrap()
}

fn vector(n: usize, scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-scale..scale, n).prop_map(DVector::from_vec)
}

fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
        let a = DMatrix::from_vec(n, n, v);
        a.tr_mul(&a) + DMatrix::identity(n, n) * 0.1
    })
}

fn psd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, n * 2).prop_map(move |v| {
        let a = DMatrix::from_vec(2, n, v);
        a.tr_mul(&a)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_is_monotone_and_convex(a in -10.0f64..10.0, b in -10.0f64..10.0, w in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(phi(lo) <= phi(hi) * (1.0 + 1e-12) + 1e-15);
        let mid = w * a + (1.0 - w) * b;
        prop_assert!(phi(mid) <= w * phi(a) + (1.0 - w) * phi(b) + 1e-12);
    }

    #[test]
    fn regularized_solve_residual(h in psd(4), b in spd(4), beta in 1e-3f64..10.0, rhs in vector(4, 5.0)) {
        let metric = MetricOperator::new(b.clone()).unwrap();
        let d = regularized_solve(&h, &metric, beta, &rhs).unwrap();
        let k = &h + &b * beta;
        prop_assert!((k * &d - &rhs).norm() <= 1e-10 * (rhs.norm() + 1.0));
    }

    #[test]
    fn min_eigenvalue_is_the_psd_threshold(h in psd(4), b in spd(4)) {
        let metric = MetricOperator::new(b.clone()).unwrap();
        let lambda = min_generalized_eigenvalue(&h, &metric).unwrap();
        let eps = 1e-6 * (1.0 + lambda);
        let below = (&h - &b * (lambda - eps)).symmetric_eigenvalues().min();
        let above = (&h - &b * (lambda + eps)).symmetric_eigenvalues().min();
        prop_assert!(below >= -1e-9);
        prop_assert!(above < 0.0);
    }

    #[test]
    fn identity_substitution_is_transparent(seed in 0u64..50, x in vector(3, 1.0)) {
        let l = instance("logistic", 3, seed);
        let id = affine_substitute(&l, DMatrix::identity(3, 3), DVector::zeros(3), AffineMetric::Induced).unwrap();
        prop_assert!((id.value(&x) - l.value(&x)).abs() <= 1e-14);
        prop_assert!((id.gradient(&x) - l.gradient(&x)).norm() <= 1e-14);
        prop_assert!((id.hessian(&x) - l.hessian(&x)).norm() <= 1e-14);
    }

    #[test]
    fn softmax_hessian_dominated_by_metric(seed in 0u64..50, x in vector(4, 3.0)) {
        let s = generate_synthetic(&SyntheticSpec::new(SyntheticKind::SoftMax { mu: 0.1 }, 4, 20, seed)).unwrap();
        let top = max_generalized_eigenvalue(&s.hessian(&x), s.metric()).unwrap();
        prop_assert!(top <= 10.0 + 1e-8);
    }

    #[test]
    fn matrix_scaling_is_shift_invariant(seed in 0u64..50, c in -3.0f64..3.0) {
        let p = instance("matrix_scaling", 4, seed);
        let ZooInstance::Matrix(mp) = &p else { unreachable!() };
        let plain = MatrixProblem::scaling(mp.source().clone()).unwrap();
        let z = DVector::from_fn(8, |i, _| 0.1 * i as f64);
        let shifted = &z + DVector::from_element(8, c);
        prop_assert!((plain.value(&z) - plain.value(&shifted)).abs() <= 1e-10 * (1.0 + plain.value(&z).abs()));
    }

    #[test]
    fn lemma_bounds_on_random_pairs(seed in 0u64..20, x in vector(3, 1.0), d in vector(3, 0.5)) {
        for kind in ["logistic", "exponential", "soft_max"] {
            let o = instance(kind, 3, seed);
            let y = &x + &d;
            prop_assert!(check_hessian_stability(&o, &x, &y).unwrap().passed);
            prop_assert!(check_gradient_bound(&o, &x, &y).unwrap().passed);
            prop_assert!(check_function_bounds(&o, &x, &y).unwrap().passed);
        }
    }

    #[test]
    fn zero_composite_step_matches_closed_form(seed in 0u64..50, x in vector(3, 1.0), sigma in 1.0f64..4.0) {
        let l = instance("logistic", 3, seed);
        let e = l.evaluate(&x);
        let beta = sigma * l.metric().dual_norm(&e.gradient);
        let step = newton_step(&l, &CompositeTerm::zero(), &x, beta, None).unwrap();
        let k = &e.hessian + l.metric().matrix() * beta;
        let expected = &x - k.lu().solve(&e.gradient).unwrap();
        prop_assert!((&step.x_plus - expected).norm() <= 1e-9 * (1.0 + x.norm()));
    }

    #[test]
    fn gradient_regularized_step_progress(seed in 0u64..50, x in vector(4, 2.0), sigma in 1.0f64..8.0) {
        // σ ≥ M = 1 for the logistic loss
        let l = instance("logistic", 4, seed);
        let e = l.evaluate(&x);
        let g = l.metric().dual_norm(&e.gradient);
        prop_assume!(g > 1e-12);
        let beta = sigma * g;
        let step = newton_step(&l, &CompositeTerm::zero(), &x, beta, None).unwrap();
        let gp = l.metric().dual_norm(&step.f_prime_plus);
        let progress = step.f_prime_plus.dot(&(&x - &step.x_plus));
        prop_assert!(progress >= gp * gp / (2.0 * beta) - 1e-8);
        prop_assert!(step.eval_plus.value <= e.value + 1e-10);
        prop_assert!(step.step_length <= g / beta + 1e-8);
    }

    #[test]
    fn box_step_is_feasible_and_stationary(seed in 0u64..30, x in vector(3, 0.2), beta in 0.1f64..2.0) {
        let l = instance("logistic", 3, seed);
        let psi = CompositeTerm::boxed(DVector::from_element(3, -0.2), DVector::from_element(3, 0.2)).unwrap();
        let step = newton_step(&l, &psi, &x, beta, None).unwrap();
        prop_assert!(psi.contains(&step.x_plus));
        let corners: Vec<DVector<f64>> = (0..8)
            .map(|m| DVector::from_fn(3, |i, _| if m >> i & 1 == 1 { 0.2 } else { -0.2 }))
            .collect();
        let scale = 1.0 + step.model_gradient.norm();
        prop_assert!(stationarity_gap(&step, &psi, &corners) >= -1e-6 * scale);
    }

    #[test]
    fn augmented_step_residual_is_a_subgradient(seed in 0u64..30, x in vector(3, 1.0), w in 0.01f64..2.0) {
        let l = instance("logistic", 3, seed);
        let q = ProxQuadratic::new(x.clone(), w);
        let step = newton_step(&l, &CompositeTerm::zero(), &x, 0.0, Some(&q)).unwrap();
        let s = &step.f_prime_plus + q.gradient(l.metric(), &step.x_plus);
        // zero composite: s = ∇f(x⁺) − ∇f(x) − ∇²f(x)(x⁺ − x)
        let e = l.evaluate(&x);
        let expected = l.gradient(&step.x_plus) - &e.gradient - &e.hessian * (&step.x_plus - &x);
        prop_assert!((&s - &expected).norm() <= 1e-9 * (1.0 + e.gradient.norm()));
    }

    #[test]
    fn accumulation_identity(gamma in 0.001f64..0.5, a0 in 1e-3f64..1e3, k in 1usize..200) {
        let mut a = a0;
        let mut rows = vec![];
        for i in 0..=k {
            rows.push(AccelTraceRow { k: i, a_big: a, a: None, nu: None, inner_outer: None, inner_inner: None, inner_g: None, value: 0.0, v_dist: None, x_dist: None, v_step: None });
            a /= 1.0 - gamma;
        }
        let params = AccelParameters { m: 1.0, r: 1.0, c: 1.0, gamma, a0, f_star: 0.0, flags: vec![] };
        prop_assert!(verify_a_growth(&rows, &params));
    }
}
