use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Evaluation, SmoothOracle};
use crate::error::{check_dim, QscError, Result};
use crate::linalg::{DualVector, HessianOperator, MetricOperator, PrimalVector};

/// `c·f` with the same metric and the same `M`.
#[derive(Clone, Debug)]
pub struct ScaledOracle<O> {
    inner: O,
    factor: f64,
}

pub fn scale_oracle<O: SmoothOracle>(inner: O, factor: f64) -> Result<ScaledOracle<O>> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(QscError::InvalidParameter(format!(
            "scale factor must be positive, got {factor}"
        )));
    }
    Ok(ScaledOracle { inner, factor })
}

impl<O: SmoothOracle> SmoothOracle for ScaledOracle<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &PrimalVector) -> f64 {
        self.factor * self.inner.value(x)
    }
    fn gradient(&self, x: &PrimalVector) -> DualVector {
        self.inner.gradient(x) * self.factor
    }
    fn hessian(&self, x: &PrimalVector) -> HessianOperator {
        self.inner.hessian(x) * self.factor
    }
    fn qsc_constant(&self) -> f64 {
        self.inner.qsc_constant()
    }
    fn metric(&self) -> &MetricOperator {
        self.inner.metric()
    }
    fn evaluate(&self, x: &PrimalVector) -> Evaluation {
        let mut e = self.inner.evaluate(x);
        e.value *= self.factor;
        e.gradient *= self.factor;
        e.hessian *= self.factor;
        e
    }
}

/// Metric attached to an affine substitution `g(x) = f(Ax − b)`.
#[derive(Clone, Debug)]
pub enum AffineMetric {
    /// `A*BA`, under which `M` carries over unchanged. Must be positive definite.
    Induced,
    /// Any SPD metric together with `κ` such that `‖h‖_{A*BA} ≤ κ‖h‖_metric`.
    /// The stored constant becomes `κ·M`.
    Custom { metric: MetricOperator, kappa: f64 },
}

#[derive(Clone, Debug)]
pub struct AffineOracle<O> {
    inner: O,
    map: DMatrix<f64>,
    shift: DVector<f64>,
    metric: MetricOperator,
    m: f64,
}

/// `g(x) = f(Ax − b)` where `A` maps the new space into the domain of `f`.
pub fn affine_substitute<O: SmoothOracle>(
    inner: O,
    map: DMatrix<f64>,
    shift: DVector<f64>,
    metric: AffineMetric,
) -> Result<AffineOracle<O>> {
    check_dim(inner.dim(), map.nrows())?;
    check_dim(inner.dim(), shift.len())?;
    let (metric, m) = match metric {
        AffineMetric::Induced => {
            let induced = map.transpose() * inner.metric().matrix() * &map;
            (MetricOperator::new(induced)?, inner.qsc_constant())
        }
        AffineMetric::Custom { metric, kappa } => {
            check_dim(map.ncols(), metric.dim())?;
            if !(kappa > 0.0 && kappa.is_finite()) {
                return Err(QscError::InvalidParameter(format!(
                    "norm bound kappa must be positive, got {kappa}"
                )));
            }
            (metric, inner.qsc_constant() * kappa)
        }
    };
    Ok(AffineOracle {
        inner,
        map,
        shift,
        metric,
        m,
    })
}

impl<O: SmoothOracle> AffineOracle<O> {
    fn image(&self, x: &PrimalVector) -> PrimalVector {
        &self.map * x - &self.shift
    }
}

impl<O: SmoothOracle> SmoothOracle for AffineOracle<O> {
    fn dim(&self) -> usize {
        self.map.ncols()
    }
    fn value(&self, x: &PrimalVector) -> f64 {
        self.inner.value(&self.image(x))
    }
    fn gradient(&self, x: &PrimalVector) -> DualVector {
        self.map.tr_mul(&self.inner.gradient(&self.image(x)))
    }
    fn hessian(&self, x: &PrimalVector) -> HessianOperator {
        let h = self.inner.hessian(&self.image(x));
        self.map.tr_mul(&(h * &self.map))
    }
    fn qsc_constant(&self) -> f64 {
        self.m
    }
    fn metric(&self) -> &MetricOperator {
        &self.metric
    }
    fn evaluate(&self, x: &PrimalVector) -> Evaluation {
        let e = self.inner.evaluate(&self.image(x));
        Evaluation {
            value: e.value,
            gradient: self.map.tr_mul(&e.gradient),
            hessian: self.map.tr_mul(&(e.hessian * &self.map)),
            overflow: e.overflow,
        }
    }
}

/// `A·f(γx + (1−γ)x̄)` with QSC constant `γM` under the original metric.
#[derive(Clone, Debug)]
pub struct ContractedOracle<O> {
    inner: O,
    gamma: f64,
    anchor: PrimalVector,
    scale: f64,
}

pub fn contract_oracle<O: SmoothOracle>(
    inner: O,
    gamma: f64,
    anchor: PrimalVector,
    scale: f64,
) -> Result<ContractedOracle<O>> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(QscError::InvalidParameter(format!(
            "contraction gamma must lie in (0, 1), got {gamma}"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(QscError::InvalidParameter(format!(
            "contraction scale must be positive, got {scale}"
        )));
    }
    check_dim(inner.dim(), anchor.len())?;
    Ok(ContractedOracle {
        inner,
        gamma,
        anchor,
        scale,
    })
}

impl<O: SmoothOracle> ContractedOracle<O> {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn anchor(&self) -> &PrimalVector {
        &self.anchor
    }

    fn point(&self, x: &PrimalVector) -> PrimalVector {
        x * self.gamma + &self.anchor * (1.0 - self.gamma)
    }
}

impl<O: SmoothOracle> SmoothOracle for ContractedOracle<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &PrimalVector) -> f64 {
        self.scale * self.inner.value(&self.point(x))
    }
    fn gradient(&self, x: &PrimalVector) -> DualVector {
        self.inner.gradient(&self.point(x)) * (self.scale * self.gamma)
    }
    fn hessian(&self, x: &PrimalVector) -> HessianOperator {
        self.inner.hessian(&self.point(x)) * (self.scale * self.gamma * self.gamma)
    }
    fn qsc_constant(&self) -> f64 {
        self.gamma * self.inner.qsc_constant()
    }
    fn metric(&self) -> &MetricOperator {
        self.inner.metric()
    }
    fn evaluate(&self, x: &PrimalVector) -> Evaluation {
        let mut e = self.inner.evaluate(&self.point(x));
        e.value *= self.scale;
        e.gradient *= self.scale * self.gamma;
        e.hessian *= self.scale * self.gamma * self.gamma;
        e
    }
}

/// `f(x) + (c/2)‖x‖²`. A quadratic has zero third derivative, so `M` is kept.
#[derive(Clone, Debug)]
pub struct RidgeOracle<O> {
    inner: O,
    strength: f64,
}

pub fn with_ridge<O: SmoothOracle>(inner: O, strength: f64) -> Result<RidgeOracle<O>> {
    if !(strength >= 0.0 && strength.is_finite()) {
        return Err(QscError::InvalidParameter(format!(
            "ridge strength must be nonnegative, got {strength}"
        )));
    }
    Ok(RidgeOracle { inner, strength })
}

impl<O: SmoothOracle> SmoothOracle for RidgeOracle<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &PrimalVector) -> f64 {
        let b = self.inner.metric();
        self.inner.value(x) + 0.5 * self.strength * x.dot(&b.apply(x))
    }
    fn gradient(&self, x: &PrimalVector) -> DualVector {
        self.inner.gradient(x) + self.inner.metric().apply(x) * self.strength
    }
    fn hessian(&self, x: &PrimalVector) -> HessianOperator {
        self.inner.hessian(x) + self.inner.metric().matrix() * self.strength
    }
    fn qsc_constant(&self) -> f64 {
        self.inner.qsc_constant()
    }
    fn metric(&self) -> &MetricOperator {
        self.inner.metric()
    }
    fn evaluate(&self, x: &PrimalVector) -> Evaluation {
        let b = self.inner.metric();
        let bx = b.apply(x);
        let mut e = self.inner.evaluate(x);
        e.value += 0.5 * self.strength * x.dot(&bx);
        e.gradient += bx * self.strength;
        e.hessian += b.matrix() * self.strength;
        e
    }
}

/// Same function, different declared constant. Used to probe the verifiers
/// with deliberately wrong values and to run solvers with an estimate of `M`.
#[derive(Clone, Debug)]
pub struct DeclaredConstant<O> {
    inner: O,
    m: f64,
}

pub fn with_qsc_constant<O: SmoothOracle>(inner: O, m: f64) -> Result<DeclaredConstant<O>> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(QscError::InvalidParameter(format!(
            "QSC constant must be nonnegative, got {m}"
        )));
    }
    Ok(DeclaredConstant { inner, m })
}

impl<O: SmoothOracle> SmoothOracle for DeclaredConstant<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &PrimalVector) -> f64 {
        self.inner.value(x)
    }
    fn gradient(&self, x: &PrimalVector) -> DualVector {
        self.inner.gradient(x)
    }
    fn hessian(&self, x: &PrimalVector) -> HessianOperator {
        self.inner.hessian(x)
    }
    fn qsc_constant(&self) -> f64 {
        self.m
    }
    fn metric(&self) -> &MetricOperator {
        self.inner.metric()
    }
    fn evaluate(&self, x: &PrimalVector) -> Evaluation {
        self.inner.evaluate(x)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCalls {
    pub values: usize,
    pub gradients: usize,
    pub hessians: usize,
}

/// Counts oracle calls; `evaluate` counts once in each column.
#[derive(Debug)]
pub struct CountingOracle<O> {
    inner: O,
    values: AtomicUsize,
    gradients: AtomicUsize,
    hessians: AtomicUsize,
}

impl<O: SmoothOracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            values: AtomicUsize::new(0),
            gradients: AtomicUsize::new(0),
            hessians: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> OracleCalls {
        OracleCalls {
            values: self.values.load(Ordering::Relaxed),
            gradients: self.gradients.load(Ordering::Relaxed),
            hessians: self.hessians.load(Ordering::Relaxed),
        }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: SmoothOracle> SmoothOracle for CountingOracle<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &PrimalVector) -> f64 {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.inner.value(x)
    }
    fn gradient(&self, x: &PrimalVector) -> DualVector {
        self.gradients.fetch_add(1, Ordering::Relaxed);
        self.inner.gradient(x)
    }
    fn hessian(&self, x: &PrimalVector) -> HessianOperator {
        self.hessians.fetch_add(1, Ordering::Relaxed);
        self.inner.hessian(x)
    }
    fn qsc_constant(&self) -> f64 {
        self.inner.qsc_constant()
    }
    fn metric(&self) -> &MetricOperator {
        self.inner.metric()
    }
    fn evaluate(&self, x: &PrimalVector) -> Evaluation {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.gradients.fetch_add(1, Ordering::Relaxed);
        self.hessians.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(x)
    }
}
