//! Fading sampling, Monte Carlo sweeps and CSV output.
//!
//! Gains are drawn from a ChaCha8 stream seeded with `seed`, block by block,
//! in the order `h1, g1, f, h2, g2`, each from a unit-mean exponential.
//! Sampling is sequential, so the sample only depends on the seed.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp1};
use serde::{Deserialize, Serialize};

use crate::allocation::Method;
use crate::average::{solve_average, AverageOptions};
use crate::model::{primary_rate, secondary_rate};
use crate::numerics::AlphaSearchConfig;
use crate::outage::{solve_p5_with, solve_p6_with, OutageOptions};
use crate::peak::solve_peak_blocks;
use crate::{par, BlockDecision, ChannelState, EnergyModel, Error, Result, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// Every gain i.i.d. exponential with mean one.
    #[default]
    RayleighUnitMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FadingSpec {
    pub distribution: Distribution,
    pub n_realizations: usize,
    pub seed: u64,
}

impl FadingSpec {
    pub fn rayleigh(n_realizations: usize, seed: u64) -> Self {
        Self {
            distribution: Distribution::RayleighUnitMean,
            n_realizations,
            seed,
        }
    }
}

pub fn sample_blocks(spec: &FadingSpec) -> Result<Vec<ChannelState>> {
    if spec.n_realizations == 0 {
        return Err(Error::InvalidParameter {
            name: "n_realizations",
            value: 0.0,
            reason: "need at least one block",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw = || -> f64 { Exp1.sample(&mut rng) };
    Ok((0..spec.n_realizations)
        .map(|_| ChannelState {
            h1: draw(),
            g1: draw(),
            f: draw(),
            h2: draw(),
            g2: draw(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
}

impl Problem {
    pub const ALL: [Problem; 6] = [Self::P1, Self::P2, Self::P3, Self::P4, Self::P5, Self::P6];

    pub fn name(self) -> &'static str {
        match self {
            Self::P1 => "p1",
            Self::P2 => "p2",
            Self::P3 => "p3",
            Self::P4 => "p4",
            Self::P5 => "p5",
            Self::P6 => "p6",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
    }

    /// Axes a sweep of this problem may vary.
    pub fn axes(self) -> &'static [XAxis] {
        match self {
            Self::P1 | Self::P2 => &[XAxis::PPk],
            Self::P3 | Self::P4 => &[XAxis::PAv],
            Self::P5 => &[XAxis::PPk, XAxis::EpsOut],
            Self::P6 => &[XAxis::PAv, XAxis::EpsOut],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum XAxis {
    #[serde(rename = "p_pk")]
    PPk,
    #[serde(rename = "p_av")]
    PAv,
    #[serde(rename = "eps_out")]
    EpsOut,
}

impl XAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::PPk => "p_pk",
            Self::PAv => "p_av",
            Self::EpsOut => "eps_out",
        }
    }

    pub fn apply(self, sp: &SystemParams, x: f64) -> SystemParams {
        let mut sp = *sp;
        match self {
            Self::PPk => sp.p_pk = x,
            Self::PAv => sp.p_av = x,
            Self::EpsOut => sp.eps_out = x,
        }
        sp
    }
}

/// Options of the inner solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub alpha: AlphaSearchConfig,
    pub method: Method,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            alpha: AlphaSearchConfig::default(),
            method: Method::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub problem: Problem,
    pub x_axis: XAxis,
    pub x_values: Vec<f64>,
    pub params: SystemParams,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.x_values.is_empty() {
            return Err(Error::Config("x_values must not be empty".into()));
        }
        if self.x_values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("x_values must be strictly increasing".into()));
        }
        if !self.problem.axes().contains(&self.x_axis) {
            return Err(Error::Config(format!(
                "problem {} cannot sweep {}",
                self.problem.name(),
                self.x_axis.name()
            )));
        }
        for &x in &self.x_values {
            self.x_axis.apply(&self.params, x).validate()?;
        }
        Ok(())
    }
}

/// One solved instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub capacity_bits: f64,
    /// Fraction of blocks in primary outage.
    pub outage: f64,
    /// Chosen fixed coefficient, or the mean per-block coefficient under
    /// peak power.
    pub alpha_star: f64,
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub x: f64,
    /// `None` when the instance had no solution; the error text is kept.
    pub result: std::result::Result<PointResult, String>,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub problem: Problem,
    pub x_axis: XAxis,
    pub rows: Vec<ExperimentRow>,
}

/// Fraction of transmitting blocks whose primary rate misses `gamma`.
fn rate_misses(blocks: &[ChannelState], profile: &[BlockDecision], sp: &SystemParams) -> f64 {
    par::mean_by(blocks, |i, ch| {
        let d = &profile[i];
        f64::from(u8::from(
            d.p > 0.0 && primary_rate(ch, d, sp) < sp.gamma - 1e-9,
        ))
    })
}

/// Solves one instance of `problem` on `blocks`.
pub fn solve_point(
    problem: Problem,
    blocks: &[ChannelState],
    sp: &SystemParams,
    opts: &SolveOptions,
) -> Result<PointResult> {
    sp.validate()?;
    match problem {
        Problem::P1 | Problem::P2 => {
            let em = if problem == Problem::P1 {
                EnergyModel::Ideal
            } else {
                EnergyModel::Practical
            };
            let sols = solve_peak_blocks(blocks, sp, em);
            let profile: Vec<BlockDecision> = sols.iter().map(|s| s.decision).collect();
            Ok(PointResult {
                capacity_bits: par::mean_by(blocks, |i, ch| secondary_rate(ch, &profile[i], sp)),
                outage: rate_misses(blocks, &profile, sp),
                alpha_star: par::mean_by(&profile, |_, d| d.alpha),
                lambda: 0.0,
                mu: 0.0,
            })
        }
        Problem::P3 | Problem::P4 => {
            let em = if problem == Problem::P3 {
                EnergyModel::Ideal
            } else {
                EnergyModel::Practical
            };
            let s = solve_average(
                blocks,
                sp,
                em,
                &AverageOptions {
                    alpha: opts.alpha,
                    method: opts.method,
                },
            )?;
            Ok(PointResult {
                capacity_bits: s.capacity,
                outage: rate_misses(blocks, &s.profile, sp),
                alpha_star: s.alpha,
                lambda: s.dual.lambda,
                mu: 0.0,
            })
        }
        Problem::P5 => {
            let s = solve_p5_with(blocks, sp, &opts.alpha)?;
            Ok(PointResult {
                capacity_bits: s.capacity,
                outage: s.outage,
                alpha_star: s.alpha,
                lambda: 0.0,
                mu: 0.0,
            })
        }
        Problem::P6 => {
            let s = solve_p6_with(
                blocks,
                sp,
                &OutageOptions {
                    alpha: opts.alpha,
                    method: opts.method,
                    ..OutageOptions::default()
                },
            )?;
            Ok(PointResult {
                capacity_bits: s.capacity,
                outage: s.outage,
                alpha_star: s.alpha,
                lambda: s.dual.lambda,
                mu: s.dual.mu,
            })
        }
    }
}

/// Solves every point of `sweep` on one shared sample. Points without a
/// solution are recorded and the sweep moves on.
pub fn run_sweep_on(
    sweep: &SweepSpec,
    blocks: &[ChannelState],
    opts: &SolveOptions,
) -> Result<ExperimentResult> {
    sweep.validate()?;
    let rows = sweep
        .x_values
        .iter()
        .map(|&x| {
            let sp = sweep.x_axis.apply(&sweep.params, x);
            let start = Instant::now();
            let result = solve_point(sweep.problem, blocks, &sp, opts).map_err(|e| e.to_string());
            ExperimentRow {
                x,
                result,
                wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
            }
        })
        .collect();
    Ok(ExperimentResult {
        problem: sweep.problem,
        x_axis: sweep.x_axis,
        rows,
    })
}

pub fn run_sweep(
    sweep: &SweepSpec,
    fading: &FadingSpec,
    opts: &SolveOptions,
) -> Result<ExperimentResult> {
    sweep.validate()?;
    let blocks = sample_blocks(fading)?;
    run_sweep_on(sweep, &blocks, opts)
}

pub const CSV_HEADER: &str = "x,capacity_bits,outage,alpha_star,lambda,mu,wall_time_ms";

/// Renders `result` as CSV. Unsolved rows carry `NaN` in every result
/// column. With `timing = false` the wall-time column is written as 0 so
/// that the output only depends on the inputs.
pub fn to_csv(result: &ExperimentResult, timing: bool) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in &result.rows {
        let r = row.result.as_ref().ok().copied().unwrap_or(PointResult {
            capacity_bits: f64::NAN,
            outage: f64::NAN,
            alpha_star: f64::NAN,
            lambda: f64::NAN,
            mu: f64::NAN,
        });
        let t = if timing { row.wall_time_ms } else { 0.0 };
        let _ = writeln!(
            out,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            row.x, r.capacity_bits, r.outage, r.alpha_star, r.lambda, r.mu, t
        );
    }
    out
}

/// Writes `contents` to a temporary file next to `path` and renames it into
/// place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::Io(e)
    })
}

/// A named sweep of the figure suite.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedSweep {
    pub name: String,
    pub sweep: SweepSpec,
}

/// Budgets used on the x axis of the power sweeps.
pub const FIGURE_BUDGETS: [f64; 6] = [1.0, 2.0, 4.0, 8.0, 12.0, 20.0];
/// Outage budgets of the outage sweeps.
pub const FIGURE_OUTAGES: [f64; 11] = [0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0];
/// Curves of the average-power outage figure.
pub const FIGURE_P6_CURVES: [f64; 4] = [0.0, 0.1, 0.3, 1.0];

/// The sweeps behind the four capacity figures, with the default
/// parameters (unit noise powers, unit efficiency, `u = 1`).
pub fn figure_suite() -> Vec<NamedSweep> {
    let base = SystemParams::default();
    let mut out = Vec::new();
    let mut push = |name: String, problem, x_axis, x_values: &[f64], params| {
        out.push(NamedSweep {
            name,
            sweep: SweepSpec {
                problem,
                x_axis,
                x_values: x_values.to_vec(),
                params,
            },
        })
    };
    for gamma in [1.0, 2.0] {
        let sp = SystemParams { gamma, ..base };
        for p in [Problem::P1, Problem::P2] {
            push(
                format!("fig4_{}_gamma{}", p.name(), gamma),
                p,
                XAxis::PPk,
                &FIGURE_BUDGETS,
                sp,
            );
        }
    }
    for gamma in [1.0, 2.0] {
        let sp = SystemParams { gamma, ..base };
        for p in [Problem::P3, Problem::P4] {
            push(
                format!("fig5_{}_gamma{}", p.name(), gamma),
                p,
                XAxis::PAv,
                &FIGURE_BUDGETS,
                sp,
            );
        }
    }
    for gamma in [1.0, 2.0] {
        let sp = SystemParams { gamma, ..base };
        push(
            format!("fig6_p5_gamma{gamma}"),
            Problem::P5,
            XAxis::EpsOut,
            &FIGURE_OUTAGES,
            sp,
        );
    }
    for eps in FIGURE_P6_CURVES {
        let sp = SystemParams {
            eps_out: eps,
            ..base
        };
        push(
            format!("fig7_p6_eps{eps:?}"),
            Problem::P6,
            XAxis::PAv,
            &FIGURE_BUDGETS,
            sp,
        );
    }
    out
}

/// Grid used by the figure suite for the fixed-coefficient problems.
pub fn figure_options() -> SolveOptions {
    SolveOptions {
        alpha: AlphaSearchConfig {
            grid_points: 51,
            alpha_max: 1.0 - 1e-9,
        },
        method: Method::Auto,
    }
}
