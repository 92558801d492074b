//! Instance × solver grids with a comparison table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BenchmarkConfig, OutputSpec, RunConfig, SCHEMA_VERSION};
use crate::error::{CliError, Result};
use crate::fit::loglog_slope;
use crate::solve::{execute, write_outcome, Outcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub instance: String,
    pub solver: String,
    pub status: String,
    pub m: f64,
    pub iterations: usize,
    pub inner_iterations: Option<usize>,
    pub oracle_values: usize,
    pub oracle_gradients: usize,
    pub oracle_hessians: usize,
    pub final_gap: Option<f64>,
    pub checks_passed: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkResult {
    pub rows: Vec<TableRow>,
    /// Log-log slope of iterations against `M`, per solver with at least two distinct `M`.
    pub slopes: BTreeMap<String, f64>,
    pub failed_cells: Vec<String>,
}

fn cell_name(instance: &str, solver: &str) -> String {
    format!("{instance}__{solver}")
}

fn row(instance: &str, out: &Outcome) -> TableRow {
    let r = &out.report;
    TableRow {
        instance: instance.to_string(),
        solver: r.solver.clone(),
        status: r.status.clone(),
        m: r.qsc_constant,
        iterations: r.iterations,
        inner_iterations: r.inner_iterations,
        oracle_values: r.oracle_calls.values,
        oracle_gradients: r.oracle_calls.gradients,
        oracle_hessians: r.oracle_calls.hessians,
        final_gap: r.final_gap,
        checks_passed: format!("{}/{}", r.checks.iter().filter(|c| c.passed).count(), r.checks.len()),
    }
}

fn slopes(rows: &[TableRow]) -> BTreeMap<String, f64> {
    let mut by_solver: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status != "error") {
        by_solver.entry(&r.solver).or_default().push((r.m, r.iterations as f64));
    }
    by_solver
        .into_iter()
        .filter_map(|(s, pts)| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            loglog_slope(&xs, &ys).ok().map(|v| (s.to_string(), v))
        })
        .collect()
}

pub fn render_text(result: &BenchmarkResult) -> String {
    let header = ["instance", "solver", "status", "M", "iters", "inner", "values", "grads", "hessians", "gap", "checks"];
    let cells: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| {
            vec![
                r.instance.clone(),
                r.solver.clone(),
                r.status.clone(),
                format!("{}", r.m),
                r.iterations.to_string(),
                r.inner_iterations.map_or("-".into(), |v| v.to_string()),
                r.oracle_values.to_string(),
                r.oracle_gradients.to_string(),
                r.oracle_hessians.to_string(),
                r.final_gap.map_or("-".into(), |g| format!("{g:.3e}")),
                r.checks_passed.clone(),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|j| cells.iter().map(|c| c[j].len()).chain([header[j].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, fields: &[&str]| {
        let padded: Vec<String> = fields.iter().zip(&widths).map(|(f, w)| format!("{f:<w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&mut out, &header);
    for c in &cells {
        line(&mut out, &c.iter().map(String::as_str).collect::<Vec<_>>());
    }
    for (solver, slope) in &result.slopes {
        let _ = writeln!(out, "log-log slope of iterations vs M [{solver}]: {slope:.4}");
    }
    out
}

/// Runs every cell on a pool of `jobs` threads; reports are written in grid order.
pub fn run_benchmark(cfg: &BenchmarkConfig, out: &Path, jobs: usize, strict: bool) -> Result<BenchmarkResult> {
    let cells: Vec<(String, RunConfig)> = cfg
        .instances
        .iter()
        .flat_map(|inst| {
            cfg.solvers.iter().map(move |solver| {
                (
                    inst.name.clone(),
                    RunConfig {
                        version: SCHEMA_VERSION,
                        instance: inst.instance.clone(),
                        solver: solver.clone(),
                        verify: cfg.verify.clone(),
                        output: OutputSpec::default(),
                    },
                )
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<Outcome>> = pool.install(|| cells.par_iter().map(|(_, c)| execute(c, strict)).collect());

    std::fs::create_dir_all(out.join("cells"))?;
    let mut rows = Vec::new();
    let mut failed_cells = Vec::new();
    for ((name, c), outcome) in cells.iter().zip(outcomes) {
        let cell = cell_name(name, c.solver.name());
        match outcome {
            Ok(o) => {
                write_outcome(&out.join("cells").join(&cell), &o)?;
                rows.push(row(name, &o));
            }
            Err(e) => {
                eprintln!("cell {cell}: {e}");
                failed_cells.push(cell);
                rows.push(TableRow {
                    instance: name.clone(),
                    solver: c.solver.name().to_string(),
                    status: "error".into(),
                    m: f64::NAN,
                    iterations: 0,
                    inner_iterations: None,
                    oracle_values: 0,
                    oracle_gradients: 0,
                    oracle_hessians: 0,
                    final_gap: None,
                    checks_passed: "-".into(),
                });
            }
        }
    }
    let result = BenchmarkResult {
        slopes: slopes(&rows),
        rows,
        failed_cells,
    };
    let mut w = csv::Writer::from_path(out.join("table.csv"))?;
    for r in &result.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    std::fs::write(out.join("table.txt"), render_text(&result))?;
    Ok(result)
}
