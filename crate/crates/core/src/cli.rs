//! The `rop` command line.
//!
//! ```text
//! rop [--threads N] solve  [--config F] [--problem P] [--seed S] [--n N] [--out F]
//! rop [--threads N] sweep  [--config F] [--problem P] [--seed S] [--n N] [--out F]
//! rop [--threads N] verify [--config F] [--problem P] [--seed S] [--n N]
//! ```
//!
//! Exit codes: 0 on success, 1 on a runtime error (including a failed
//! oracle check), 2 on a usage or configuration error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, RunConfig};
use crate::experiments::{
    run_sweep_on, sample_blocks, solve_point, to_csv, write_atomic, ExperimentResult,
    ExperimentRow, Problem,
};
use crate::verify::{verify, VerifyReport};
use crate::{par, Error};

#[derive(Debug, Parser)]
#[command(
    name = "rop",
    version,
    about = "Backscatter spectrum-sharing allocator and Monte Carlo sweeps"
)]
struct Cli {
    /// Worker threads; 0 or unset uses every core.
    #[arg(long, global = true, env = "ROP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance at the configured parameters.
    Solve(RunArgs),
    /// Solve every point of the configured sweep and write a CSV.
    Sweep(RunArgs),
    /// Compare the solver with its brute-force oracle.
    Verify(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Flat TOML configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of fading blocks.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_parser = parse_problem)]
    problem: Option<Problem>,
}

fn parse_problem(s: &str) -> Result<Problem, String> {
    Problem::parse(s).ok_or_else(|| format!("unknown problem `{s}` (expected p1..p6)"))
}

/// Failures split by exit code.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParameter { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let threads = cli.threads.filter(|&t| t > 0);
    let outcome = match threads {
        Some(t) => par::with_threads(t, || dispatch(cli.command)),
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

fn load(args: &RunArgs) -> Result<RunConfig, Failure> {
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(p) = args.problem {
        cfg.set_problem(p);
    }
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if args.out.is_some() {
        cfg.out.clone_from(&args.out);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(cfg: &RunConfig, result: &ExperimentResult) -> Result<(), Failure> {
    let csv = to_csv(result, cfg.record_timing);
    match &cfg.out {
        Some(path) => write_atomic(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn print_report(r: &VerifyReport) {
    println!(
        "{} checked={} max_gap={:.3e} max_excess={:.3e} mean_abs_gap={:.3e} tolerance=\"{}\" {}",
        r.problem.name(),
        r.checked,
        r.max_gap,
        r.max_excess,
        r.mean_abs_gap,
        r.tolerance,
        if r.passed() { "PASS" } else { "FAIL" }
    );
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve(args) => {
            let cfg = load(&args)?;
            let blocks = sample_blocks(&cfg.fading()?)?;
            let sp = *cfg.params();
            let start = std::time::Instant::now();
            let point = solve_point(cfg.problem, &blocks, &sp, &cfg.options)?;
            let x = match cfg.sweep.x_axis {
                crate::experiments::XAxis::PPk => sp.p_pk,
                crate::experiments::XAxis::PAv => sp.p_av,
                crate::experiments::XAxis::EpsOut => sp.eps_out,
            };
            let result = ExperimentResult {
                problem: cfg.problem,
                x_axis: cfg.sweep.x_axis,
                rows: vec![ExperimentRow {
                    x,
                    result: Ok(point),
                    wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
                }],
            };
            emit(&cfg, &result)
        }
        Command::Sweep(args) => {
            let cfg = load(&args)?;
            let blocks = sample_blocks(&cfg.fading()?)?;
            let result = run_sweep_on(&cfg.sweep, &blocks, &cfg.options)?;
            for row in &result.rows {
                if let Err(e) = &row.result {
                    eprintln!("x = {}: {e}", row.x);
                }
            }
            emit(&cfg, &result)?;
            if cfg.oracle_check {
                let sp = cfg.sweep.x_axis.apply(cfg.params(), cfg.sweep.x_values[0]);
                let k = blocks.len().min(1000);
                let r = verify(cfg.problem, &blocks[..k], &sp)?;
                print_report(&r);
                if !r.passed() {
                    return Err(Failure::Runtime("oracle check failed".into()));
                }
            }
            Ok(())
        }
        Command::Verify(args) => {
            let cfg = load(&args)?;
            let blocks = sample_blocks(&cfg.fading()?)?;
            let r = verify(cfg.problem, &blocks, cfg.params())?;
            print_report(&r);
            if r.passed() {
                Ok(())
            } else {
                Err(Failure::Runtime(format!(
                    "oracle gap exceeds tolerance by {:.3e}",
                    r.max_excess
                )))
            }
        }
    }
}
