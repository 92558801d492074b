//! Second-order methods for composite problems whose smooth part is
//! quasi-self-concordant: the gradient-regularized Newton method, the dual
//! Newton method and the accelerated contracting scheme, with a zoo of test
//! problems and numerical verifiers for the supporting inequalities.

// parameter guards are written so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accelerated;
pub mod composite;
pub mod error;
pub mod linalg;
pub mod dual;
pub mod oracle;
pub mod primal;
pub mod trace;
pub mod zoo;

pub use error::{QscError, Result};
pub use linalg::{DualVector, HessianOperator, MetricOperator, PrimalVector};
pub use oracle::{phi, rho, Evaluation, SmoothOracle};
pub use composite::{newton_step, CompositeTerm, ProxQuadratic, StepResult};
pub use primal::{solve_primal, PrimalConfig, PrimalRun, PrimalStatus, PrimalTraceRow, SigmaMode};
pub use dual::{solve_dual, solve_dual_augmented, DualConfig, DualRun, DualStatus, DualTraceRow};
pub use accelerated::{solve_accelerated, AccelConfig, AccelRun, AccelStatus, AccelTraceRow};
