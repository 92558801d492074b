use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qsc_cli::benchmark::run_benchmark;
use qsc_cli::config::{self, InstanceSpec};
use qsc_cli::problem::build;
use qsc_cli::reference::reference;
use qsc_cli::report::write_json;
use qsc_cli::solve::{execute, write_outcome};
use qsc_cli::verify::run_verify;
use qsc_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "qsc", version, about = "Newton-type solvers for quasi-self-concordant composite problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to the config's output.dir, then ./qsc-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides generator seeds.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver and write trace.csv and report.json.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Parameter preconditions become hard errors.
        #[arg(long)]
        strict: bool,
    },
    /// Certify an oracle: QSC constant, lemma inequalities, finite differences.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Run an instance × solver grid and write table.csv and table.txt.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        strict: bool,
    },
    /// Compute (or load from cache) the reference solution of an instance.
    Reference {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceConfig {
    version: u32,
    instance: InstanceSpec,
}

fn out_dir(flag: Option<PathBuf>, from_config: Option<PathBuf>) -> PathBuf {
    flag.or(from_config).unwrap_or_else(|| PathBuf::from("qsc-out"))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Solve { common, strict } => {
            let cfg = config::load_run(&common.config, common.seed)?;
            let outcome = execute(&cfg, strict)?;
            let dir = out_dir(common.out, cfg.output.dir.clone());
            write_outcome(&dir, &outcome)?;
            let r = &outcome.report;
            println!(
                "{} on {}: {} after {} iterations, F = {:.12e}{}",
                r.solver,
                r.problem,
                r.status,
                r.iterations,
                r.final_value,
                r.final_gap.map_or(String::new(), |g| format!(", gap {g:.3e}"))
            );
            for c in r.failed_checks() {
                eprintln!("check {} failed: {}", c.name, c.detail);
            }
            if r.success {
                Ok(0)
            } else {
                eprintln!("solver failed: {}", r.error.as_deref().unwrap_or(&r.status));
                Ok(2)
            }
        }
        Command::Verify { common } => {
            let cfg = config::load_verify(&common.config, common.seed)?;
            let report = run_verify(&cfg)?;
            let dir = out_dir(common.out, None);
            std::fs::create_dir_all(&dir)?;
            write_json(&dir.join("verify.json"), &report)?;
            for c in &report.checks {
                println!("{:<18} {}  {}", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
            }
            if report.passed {
                Ok(0)
            } else {
                let failing: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                eprintln!("failing checks: {}", failing.join(", "));
                Ok(2)
            }
        }
        Command::Benchmark { common, jobs, strict } => {
            let cfg = config::load_benchmark(&common.config, common.seed)?;
            let dir = out_dir(common.out, None);
            let result = run_benchmark(&cfg, &dir, jobs, strict)?;
            print!("{}", qsc_cli::benchmark::render_text(&result));
            Ok(if result.failed_cells.is_empty() { 0 } else { 2 })
        }
        Command::Reference { common } => {
            let cfg: ReferenceConfig = config::load(&common.config)?;
            if cfg.version != config::SCHEMA_VERSION {
                return Err(CliError::Config(format!("unsupported schema version {}", cfg.version)));
            }
            let run_cfg = config::load_run_instance(&common.config, cfg.instance, common.seed);
            let problem = build(&run_cfg)?;
            let (r, hit) = reference(&run_cfg, &problem)?;
            let dir = out_dir(common.out, None);
            std::fs::create_dir_all(&dir)?;
            write_json(&dir.join("reference.json"), &r)?;
            println!(
                "F* = {:.15e}, g = {:.3e}, {} iterations{}",
                r.f_star,
                r.g,
                r.iterations,
                if hit { " (cached)" } else { "" }
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
