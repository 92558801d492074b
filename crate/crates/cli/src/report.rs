use std::path::Path;

use serde::{Deserialize, Serialize};

use qsc_core::oracle::OracleCalls;

use crate::error::Result;

pub const D_HAT_CAVEAT: &str =
    "D_hat is the largest observed distance among iterates and the reference point; it underestimates the sublevel-set diameter";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Positive when the check holds with room to spare.
    pub margin: Option<f64>,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: &str, passed: bool, margin: Option<f64>, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            margin,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInfo {
    pub f_star: f64,
    pub g: f64,
    pub iterations: usize,
    pub cache_hit: bool,
    pub key: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Fits {
    pub linear: Option<crate::fit::LinearRateFit>,
    pub quadratic_order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: serde_json::Value,
    pub problem: String,
    pub dim: usize,
    pub qsc_constant: f64,
    pub solver: String,
    pub status: String,
    pub success: bool,
    pub iterations: usize,
    pub inner_iterations: Option<usize>,
    /// Subproblem solves counted by the solver.
    pub solver_oracle_calls: usize,
    pub oracle_calls: OracleCalls,
    pub final_value: f64,
    pub final_g: Option<f64>,
    pub final_gap: Option<f64>,
    pub reference: Option<ReferenceInfo>,
    pub d_hat: Option<f64>,
    pub d_hat_caveat: Option<String>,
    pub fits: Fits,
    pub checks: Vec<CheckResult>,
    pub flags: Vec<String>,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn failed_checks(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config: serde_json::Value,
    pub problem: String,
    pub dim: usize,
    pub qsc_constant: f64,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
    pub wall_time_s: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
