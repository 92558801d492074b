//! High-accuracy reference solutions with a content-addressed disk cache.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qsc_core::{solve_primal, PrimalConfig, PrimalVector};

use crate::config::InstanceSpec;
use crate::error::{CliError, Result};
use crate::problem::Problem;

pub const REFERENCE_TOL: f64 = 1e-12;
pub const REFERENCE_MAX_ITERS: usize = 10_000;
/// Runs that stop on the iteration cap are still accepted below this `g`.
pub const REFERENCE_ACCEPT: f64 = 1e-9;

const CACHE_FORMAT: &str = "qsc-reference-v1";
static TMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub x: Vec<f64>,
    pub f_star: f64,
    pub g: f64,
    pub iterations: usize,
    pub key: String,
}

impl Reference {
    pub fn point(&self) -> PrimalVector {
        PrimalVector::from_column_slice(&self.x)
    }
}

pub fn cache_dir() -> PathBuf {
    std::env::var_os("QSC_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("qsc-reference-cache"))
}

/// SHA-256 over the canonical JSON of the instance and the data file digest.
pub fn cache_key(spec: &InstanceSpec, data_hash: Option<&str>) -> Result<String> {
    // serde_json::Value keeps object keys sorted, which makes the text canonical
    let value = serde_json::to_value(spec)?;
    let mut h = Sha256::new();
    h.update(CACHE_FORMAT.as_bytes());
    h.update(serde_json::to_string(&value)?.as_bytes());
    h.update(data_hash.unwrap_or("").as_bytes());
    Ok(hex::encode(h.finalize()))
}

/// Adaptive primal Newton run to `g ≤ 1e-12`; the last iterate has the lowest value.
pub fn compute_reference(problem: &Problem, key: String) -> Result<Reference> {
    let cfg = PrimalConfig::default().with_tolerance(REFERENCE_TOL, REFERENCE_MAX_ITERS);
    let run = solve_primal(&problem.oracle, &problem.psi, &problem.x0, &cfg)?;
    let g = run.final_g();
    if !(run.status.is_success() || g <= REFERENCE_ACCEPT) || !run.final_value().is_finite() {
        return Err(CliError::ReferenceNotConverged { last_g: g });
    }
    Ok(Reference {
        x: run.x.iter().copied().collect(),
        f_star: run.final_value(),
        g,
        iterations: run.iterations(),
        key,
    })
}

/// Returns the reference and whether it came from the cache.
pub fn reference(spec: &InstanceSpec, problem: &Problem) -> Result<(Reference, bool)> {
    let key = cache_key(spec, problem.data_hash.as_deref())?;
    let path = cache_dir().join(format!("{key}.json"));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(r) = serde_json::from_str::<Reference>(&text) {
            if r.key == key && r.x.len() == problem.oracle.dim() {
                return Ok((r, true));
            }
        }
    }
    let r = compute_reference(problem, key)?;
    // a failed cache write only costs a recomputation later
    if std::fs::create_dir_all(cache_dir()).is_ok() {
        let unique = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        let tmp = path.with_extension(format!("tmp{}-{unique}", std::process::id()));
        if std::fs::write(&tmp, serde_json::to_string(&r)?).is_ok() {
            let _ = std::fs::rename(&tmp, &path);
        }
    }
    Ok((r, false))
}
