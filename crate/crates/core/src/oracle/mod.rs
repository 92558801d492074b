//! Second-order oracle contract for quasi-self-concordant functions, the
//! combinators that preserve the property, and finite-difference verifiers.

mod checks;
mod combinators;

pub use checks::{
    check_function_bounds, check_gradient, check_gradient_bound, check_hessian,
    check_hessian_stability, check_qsc, sample_pair, third_derivative_fd, BoundCheck,
    FunctionBoundCheck, QscCheckOptions, QscCheckReport, QscTriple, StabilityCheck,
    LEMMA_ABS_TOL, STABILITY_EXPONENT_TOL,
};
pub use combinators::{
    affine_substitute, contract_oracle, scale_oracle, with_qsc_constant, with_ridge,
    AffineMetric, AffineOracle, ContractedOracle, CountingOracle, DeclaredConstant, OracleCalls,
    RidgeOracle, ScaledOracle,
};

use std::sync::Arc;

use crate::linalg::{DualVector, HessianOperator, MetricOperator, PrimalVector};

/// Value, gradient and Hessian at one point.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DualVector,
    pub hessian: HessianOperator,
    /// Set when an exponent had to be clamped to avoid overflow.
    pub overflow: bool,
}

/// Smooth convex function `f` with a certified quasi-self-concordance
/// constant `M` under its own metric `B`:
/// `D³f(x)[u]²[v] ≤ M ‖u‖ₓ² ‖v‖` for all `x, u, v`.
///
/// Every shipped oracle has full domain, so evaluation never fails on finite
/// input.
pub trait SmoothOracle: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &PrimalVector) -> f64;
    fn gradient(&self, x: &PrimalVector) -> DualVector;
    fn hessian(&self, x: &PrimalVector) -> HessianOperator;
    fn qsc_constant(&self) -> f64;
    fn metric(&self) -> &MetricOperator;

    fn evaluate(&self, x: &PrimalVector) -> Evaluation {
        Evaluation {
            value: self.value(x),
            gradient: self.gradient(x),
            hessian: self.hessian(x),
            overflow: false,
        }
    }
}

macro_rules! forward_oracle {
    ($($ptr:ty),*) => {$(
        impl<T: SmoothOracle + ?Sized> SmoothOracle for $ptr {
            fn dim(&self) -> usize { (**self).dim() }
            fn value(&self, x: &PrimalVector) -> f64 { (**self).value(x) }
            fn gradient(&self, x: &PrimalVector) -> DualVector { (**self).gradient(x) }
            fn hessian(&self, x: &PrimalVector) -> HessianOperator { (**self).hessian(x) }
            fn qsc_constant(&self) -> f64 { (**self).qsc_constant() }
            fn metric(&self) -> &MetricOperator { (**self).metric() }
            fn evaluate(&self, x: &PrimalVector) -> Evaluation { (**self).evaluate(x) }
        }
    )*};
}

forward_oracle!(&T, Box<T>, Arc<T>);

/// Cutoff below which [`phi`] switches to its Taylor expansion.
pub const PHI_TAYLOR_CUTOFF: f64 = 1e-4;

/// `φ(t) = (eᵗ − t − 1)/t²`, continuous at zero with `φ(0) = 1/2`.
///
/// Convex and increasing; `φ(1) = e − 2`.
pub fn phi(t: f64) -> f64 {
    if t.abs() < PHI_TAYLOR_CUTOFF {
        0.5 + t / 6.0 + t * t / 24.0 + t * t * t / 120.0
    } else {
        (t.exp_m1() - t) / (t * t)
    }
}

/// `ρ = φ(1) = e − 2`.
pub fn rho() -> f64 {
    std::f64::consts::E - 2.0
}
