//! Solver-versus-oracle cross-checks used by `rop verify` and by
//! `oracle_check = true` sweeps.

use serde::Serialize;

use crate::average::solve_average_fixed;
use crate::experiments::Problem;
use crate::oracle::{
    oracle_average, oracle_p6b, oracle_peak_outage_frontier, oracle_per_block,
    per_block_cell_bound, GridSpec,
};
use crate::outage::{p6b_choice, solve_p5a, solve_p6a};
use crate::peak::solve_peak;
use crate::{par, ChannelState, EnergyModel, Result, SystemParams};

/// Size of the small instances handed to the exponential-cost oracles.
pub const SMALL_INSTANCE: usize = 4;
/// Power grid of [`oracle_average`] on the small instances.
pub const AVERAGE_STEPS: usize = 400;
/// Grid of the per-block outage oracle.
pub const P6B_POINTS: usize = 10_000;
/// Coefficients checked by the fixed-coefficient problems.
pub const CHECK_ALPHAS: [f64; 3] = [0.2, 0.5, 0.8];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub problem: Problem,
    pub checked: usize,
    /// Largest amount by which an oracle beat the solver.
    pub max_gap: f64,
    /// Largest gap in excess of its tolerance; positive means failure.
    pub max_excess: f64,
    pub mean_abs_gap: f64,
    pub tolerance: String,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.max_excess <= 0.0
    }
}

struct Gap {
    gap: f64,
    tol: f64,
}

fn report(problem: Problem, gaps: &[Gap], tolerance: &str) -> VerifyReport {
    let n = gaps.len().max(1) as f64;
    VerifyReport {
        problem,
        checked: gaps.len(),
        max_gap: gaps.iter().map(|g| g.gap).fold(f64::NEG_INFINITY, f64::max),
        max_excess: gaps
            .iter()
            .map(|g| g.gap - g.tol)
            .fold(f64::NEG_INFINITY, f64::max),
        mean_abs_gap: gaps.iter().map(|g| g.gap.abs()).sum::<f64>() / n,
        tolerance: tolerance.to_owned(),
    }
}

/// Absolute slack allowed on comparisons that should hold exactly.
pub const EXACT_TOL: f64 = 1e-9;
/// Slack between the dual solution and the grid oracle of the
/// average-power problems.
pub const AVERAGE_TOL: f64 = 1e-2;

/// Cross-checks `problem` on `blocks` against its brute-force oracle.
pub fn verify(
    problem: Problem,
    blocks: &[ChannelState],
    sp: &SystemParams,
) -> Result<VerifyReport> {
    sp.validate()?;
    match problem {
        Problem::P1 | Problem::P2 => {
            let em = if problem == Problem::P1 {
                EnergyModel::Ideal
            } else {
                EnergyModel::Practical
            };
            let grid = GridSpec::peak(sp);
            let gaps = par::map(blocks, |ch| {
                let s = solve_peak(ch, sp, em);
                let o = oracle_per_block(ch, sp, em, &grid);
                Gap {
                    gap: o.rate - crate::model::secondary_rate(ch, &s.decision, sp),
                    tol: per_block_cell_bound(ch, sp, &grid),
                }
            });
            Ok(report(
                problem,
                &gaps,
                "one grid cell of the rate per block (2001 x 1001 grid)",
            ))
        }
        Problem::P3 | Problem::P4 => {
            let em = if problem == Problem::P3 {
                EnergyModel::Ideal
            } else {
                EnergyModel::Practical
            };
            let mut gaps = Vec::new();
            for chunk in blocks.chunks_exact(SMALL_INSTANCE) {
                for alpha in CHECK_ALPHAS {
                    let s =
                        solve_average_fixed(chunk, sp, alpha, em, crate::allocation::Method::Dual)?;
                    let o = oracle_average(chunk, sp, alpha, em, AVERAGE_STEPS);
                    gaps.push(Gap {
                        gap: o.capacity - s.capacity,
                        tol: AVERAGE_TOL,
                    });
                }
            }
            Ok(report(problem, &gaps, "1e-2 bits per 4-block instance"))
        }
        Problem::P5 => {
            let mut gaps = Vec::new();
            for chunk in blocks.chunks_exact(SMALL_INSTANCE) {
                for alpha in CHECK_ALPHAS {
                    let s = solve_p5a(chunk, sp, alpha)?;
                    // outages of the solver's own profile
                    let k = (s.outage * chunk.len() as f64).round() as usize;
                    let frontier = oracle_peak_outage_frontier(chunk, sp, alpha, 201);
                    gaps.push(Gap {
                        gap: frontier[k] - s.capacity,
                        tol: EXACT_TOL,
                    });
                }
            }
            Ok(report(
                problem,
                &gaps,
                "1e-9 bits against the outage frontier",
            ))
        }
        Problem::P6 => {
            let mut gaps = Vec::new();
            let p_max = 100.0 * sp.p_av;
            for alpha in CHECK_ALPHAS {
                let s = solve_p6a(blocks, sp, alpha)?;
                let (lambda, mu) = (s.dual.lambda, s.dual.mu);
                gaps.extend(par::map(blocks, |ch| {
                    let (_, o_v) = oracle_p6b(ch, sp, alpha, lambda, mu, P6B_POINTS, p_max);
                    let (p, x) = p6b_choice(ch, sp, alpha, lambda, mu);
                    let a = ch.g1 * alpha * ch.f / sp.sigma_sr_sq;
                    let v =
                        (a * p).ln_1p() / std::f64::consts::LN_2 - mu * p - lambda * f64::from(x);
                    Gap {
                        gap: o_v - v,
                        tol: EXACT_TOL,
                    }
                }));
            }
            Ok(report(problem, &gaps, "1e-9 in the per-block Lagrangian"))
        }
    }
}
