//! Fixed reflection coefficient with a primary outage budget instead of a
//! hard rate target (P5: peak power, P6: average power). Ideal energy model
//! only.
//!
//! A block is in outage when the primary rate does not exceed `gamma`. For a
//! block with positive interference margin that happens iff `p <= p'`; with
//! a nonpositive margin the block is in outage at every power.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::allocation::{
    allocate, outage_allowance, rate, Allocation, BlockMenu, Interval, Method, Status,
};
use crate::average::{circuit_floor, profile_of, rate_floor, tag_gain};
use crate::model::{interference_margin, secondary_rate};
use crate::numerics::{
    alpha_grid_search, inverse_sqrt_step, subgradient_2d_trace, AlphaSearchConfig, DualResponse,
    DualState, SubgradientConfig,
};
use crate::{par, BlockDecision, ChannelState, Error, Result, SystemParams};

/// Primary outage indicator at power `p` and reflection `alpha_bar`.
/// The boundary `p = p'` counts as outage.
pub fn chi(ch: &ChannelState, p: f64, alpha_bar: f64, sp: &SystemParams) -> u8 {
    if interference_margin(ch, sp, alpha_bar) <= 0.0 {
        return 1;
    }
    match rate_floor(ch, sp, alpha_bar) {
        Some(p_prime) if p > p_prime => 0,
        _ => 1,
    }
}

/// The three candidate powers of the per-block dual problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageCandidates {
    /// Water level `1/(mu ln 2) - sigma_sr^2/(g1 α f)`.
    pub p_tilde: f64,
    /// Outage threshold; `None` when the block is always in outage.
    pub p_prime: Option<f64>,
    /// Circuit floor.
    pub p_dprime: f64,
}

pub fn candidates(
    ch: &ChannelState,
    sp: &SystemParams,
    alpha_bar: f64,
    mu: f64,
) -> OutageCandidates {
    let a = tag_gain(ch, sp, alpha_bar);
    let p_tilde = if a > 0.0 {
        1.0 / (mu * LN_2) - 1.0 / a
    } else {
        f64::NEG_INFINITY
    };
    let p_prime = if interference_margin(ch, sp, alpha_bar) > 0.0 {
        rate_floor(ch, sp, alpha_bar)
    } else {
        None
    };
    OutageCandidates {
        p_tilde,
        p_prime,
        p_dprime: circuit_floor(ch, sp, alpha_bar),
    }
}

/// Maximizer over `p >= p''` of `log2(1 + a p) - mu p - lambda chi(p)`,
/// returned with its outage indicator.
///
/// When protection wins, the returned power is the smallest representable
/// power above `p'`, where the indicator is already zero. Ties between an
/// outage candidate and the protected one go to protection.
pub fn p6b_choice(
    ch: &ChannelState,
    sp: &SystemParams,
    alpha_bar: f64,
    lambda: f64,
    mu: f64,
) -> (f64, u8) {
    let c = candidates(ch, sp, alpha_bar, mu);
    let a = tag_gain(ch, sp, alpha_bar);
    let value = |p: f64| rate(a, p) - mu * p;
    let (pt, pd) = (c.p_tilde, c.p_dprime);
    let Some(pp) = c.p_prime else {
        return (pt.max(pd), 1);
    };
    if pp < pt {
        return (pt.max(pd), 0);
    }
    let protected = pp.next_up().max(pd);
    if pp < pd {
        return (pd, 0);
    }
    // p_tilde < p' and p'' <= p': the best outage point is max(p_tilde, p'')
    let outage_point = pt.max(pd);
    if value(outage_point) - lambda > value(protected) {
        (outage_point, 1)
    } else {
        (protected, 0)
    }
}

/// Power part of [`p6b_choice`].
pub fn p6b_block(
    ch: &ChannelState,
    sp: &SystemParams,
    alpha_bar: f64,
    lambda: f64,
    mu: f64,
) -> f64 {
    p6b_choice(ch, sp, alpha_bar, lambda, mu).0
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutageSolution {
    pub alpha: f64,
    pub profile: Vec<BlockDecision>,
    /// Fraction of blocks in primary outage.
    pub outage: f64,
    pub capacity: f64,
    pub mean_power: f64,
    /// `lambda` prices outage, `mu` prices power; both zero under P5.
    pub dual: DualState,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter {
            name: "alpha_bar",
            value: alpha,
            reason: "fixed reflection coefficient must lie in [0, 1)",
        });
    }
    Ok(())
}

/// P5 at a fixed `alpha_bar`: every block transmits at the peak power; the
/// tag runs wherever the peak power can feed its circuit.
pub fn solve_p5a(
    blocks: &[ChannelState],
    sp: &SystemParams,
    alpha_bar: f64,
) -> Result<OutageSolution> {
    check_alpha(alpha_bar)?;
    let profile = par::map(blocks, |ch| {
        if circuit_floor(ch, sp, alpha_bar) <= sp.p_pk {
            BlockDecision::active(sp.p_pk, alpha_bar)
        } else {
            BlockDecision::inactive(sp.p_pk)
        }
    });
    let outage = par::mean_by(blocks, |i, ch| {
        f64::from(chi(ch, sp.p_pk, profile[i].effective_alpha(), sp))
    });
    let capacity = par::mean_by(blocks, |i, ch| secondary_rate(ch, &profile[i], sp));
    Ok(OutageSolution {
        alpha: alpha_bar,
        profile,
        outage,
        capacity,
        mean_power: sp.p_pk,
        dual: DualState {
            converged: true,
            ..DualState::default()
        },
    })
}

/// Outage tolerance for comparing an empirical fraction with `eps_out`.
const FRACTION_SLACK: f64 = 1e-12;

/// Grid search over `alpha_bar` among coefficients meeting the outage
/// budget.
pub fn solve_p5_with(
    blocks: &[ChannelState],
    sp: &SystemParams,
    alpha: &AlphaSearchConfig,
) -> Result<OutageSolution> {
    alpha.validate()?;
    let cfg = AlphaSearchConfig {
        alpha_max: alpha.alpha_max.min(1.0 - 1e-9),
        ..*alpha
    };
    let (best, value) = alpha_grid_search(
        |a| match solve_p5a(blocks, sp, a) {
            Ok(s) if s.outage <= sp.eps_out + FRACTION_SLACK => s.capacity,
            _ => f64::NEG_INFINITY,
        },
        &cfg,
    );
    if value == f64::NEG_INFINITY {
        return Err(Error::Infeasible(format!(
            "no reflection coefficient keeps outage within {}",
            sp.eps_out
        )));
    }
    solve_p5a(blocks, sp, best)
}

pub fn solve_p5(blocks: &[ChannelState], sp: &SystemParams) -> Result<OutageSolution> {
    solve_p5_with(blocks, sp, &AlphaSearchConfig::default())
}

/// How P6 prices its two constraints.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualSearch {
    /// Bisection on the power price with the outage cap enforced by ranking
    /// blocks on their Lagrangian gain from outage.
    #[default]
    Ranked,
    /// Projected subgradient on both multipliers.
    Subgradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageOptions {
    pub alpha: AlphaSearchConfig,
    pub method: Method,
    pub dual: DualSearch,
    pub subgradient: SubgradientConfig,
}

impl Default for OutageOptions {
    fn default() -> Self {
        Self {
            alpha: AlphaSearchConfig::default(),
            method: Method::Auto,
            dual: DualSearch::Ranked,
            subgradient: SubgradientConfig::default(),
        }
    }
}

/// Option menu of one block under the outage budget.
pub fn menu(ch: &ChannelState, sp: &SystemParams, alpha_bar: f64) -> BlockMenu {
    let a = tag_gain(ch, sp, alpha_bar);
    let pd = circuit_floor(ch, sp, alpha_bar);
    if !pd.is_finite() {
        return BlockMenu::silent_only();
    }
    let c = candidates(ch, sp, alpha_bar, 1.0);
    match c.p_prime {
        Some(pp) => BlockMenu::new(
            a,
            Interval::from(pp.next_up().max(pd)),
            Interval::new(pd, pp),
        ),
        None => BlockMenu::new(a, None, Interval::from(pd)),
    }
}

fn solution_from(alloc: &Allocation, alpha: f64, iterations: usize) -> OutageSolution {
    OutageSolution {
        alpha,
        profile: profile_of(alloc, alpha),
        outage: alloc.outage_fraction,
        capacity: alloc.capacity,
        mean_power: alloc.mean_power,
        dual: DualState {
            lambda: alloc.outage_price,
            mu: alloc.power_price,
            iterations,
            converged: alloc.converged,
        },
    }
}

/// Per-block Lagrangian response at `(lambda, mu)`: the better of silence
/// and the dual-optimal active power. Powers are capped at `cap`.
fn lagrangian_block(
    ch: &ChannelState,
    sp: &SystemParams,
    alpha_bar: f64,
    lambda: f64,
    mu: f64,
    cap: f64,
) -> (f64, u8, f64) {
    let a = tag_gain(ch, sp, alpha_bar);
    if !(a > 0.0) || !circuit_floor(ch, sp, alpha_bar).is_finite() {
        return (0.0, 0, 0.0);
    }
    let (p, x) = p6b_choice(ch, sp, alpha_bar, lambda, mu);
    let p = p.min(cap);
    let x = if x == 1 { 1 } else { chi(ch, p, alpha_bar, sp) };
    let v = rate(a, p) - mu * p - lambda * f64::from(x);
    if v >= 0.0 {
        (p, x, v)
    } else {
        (0.0, 0, 0.0)
    }
}

fn solve_p6a_subgradient(
    blocks: &[ChannelState],
    sp: &SystemParams,
    alpha_bar: f64,
    cfg: &SubgradientConfig,
) -> OutageSolution {
    let cap = 100.0 * sp.p_av;
    let eval = |lambda: f64, mu: f64| {
        par::map(blocks, |ch| {
            lagrangian_block(ch, sp, alpha_bar, lambda, mu, cap)
        })
    };
    let tol = SubgradientConfig {
        residual_tol: cfg.residual_tol * sp.p_av.max(1.0),
        ..*cfg
    };
    let trace = subgradient_2d_trace(
        |lambda, mu| {
            let r = eval(lambda, mu);
            let n = r.len().max(1) as f64;
            let outage = r.iter().map(|x| f64::from(x.1)).sum::<f64>() / n;
            let power = r.iter().map(|x| x.0).sum::<f64>() / n;
            let lagr = r.iter().map(|x| x.2).sum::<f64>() / n;
            DualResponse {
                outage_gap: outage - sp.eps_out,
                power_gap: power - sp.p_av,
                value: lagr + lambda * sp.eps_out + mu * sp.p_av,
            }
        },
        DualState::default(),
        inverse_sqrt_step,
        &tol,
    );
    let d = if trace.last.converged {
        trace.last
    } else {
        trace.best
    };
    let r = eval(d.lambda, d.mu);
    let profile: Vec<BlockDecision> = r
        .iter()
        .map(|&(p, _, _)| {
            if p > 0.0 {
                BlockDecision::active(p, alpha_bar)
            } else {
                BlockDecision::silent()
            }
        })
        .collect();
    let n = blocks.len().max(1) as f64;
    let capacity = blocks
        .iter()
        .zip(&r)
        .map(|(ch, x)| rate(tag_gain(ch, sp, alpha_bar), x.0))
        .sum::<f64>()
        / n;
    OutageSolution {
        alpha: alpha_bar,
        profile,
        outage: r.iter().map(|x| f64::from(x.1)).sum::<f64>() / n,
        capacity,
        mean_power: r.iter().map(|x| x.0).sum::<f64>() / n,
        dual: DualState {
            converged: trace.last.converged,
            ..d
        },
    }
}

/// P6 at a fixed `alpha_bar`.
pub fn solve_p6a_with(
    blocks: &[ChannelState],
    sp: &SystemParams,
    alpha_bar: f64,
    opts: &OutageOptions,
) -> Result<OutageSolution> {
    check_alpha(alpha_bar)?;
    match opts.dual {
        DualSearch::Ranked => {
            let menus = par::map(blocks, |ch| menu(ch, sp, alpha_bar));
            let k = outage_allowance(sp.eps_out, blocks.len());
            let alloc = allocate(&menus, sp.p_av, k, opts.method)?;
            Ok(solution_from(&alloc, alpha_bar, 0))
        }
        DualSearch::Subgradient => Ok(solve_p6a_subgradient(
            blocks,
            sp,
            alpha_bar,
            &opts.subgradient,
        )),
    }
}

pub fn solve_p6a(
    blocks: &[ChannelState],
    sp: &SystemParams,
    alpha_bar: f64,
) -> Result<OutageSolution> {
    solve_p6a_with(blocks, sp, alpha_bar, &OutageOptions::default())
}

/// Grid search over `alpha_bar`; ties go to the smaller coefficient.
pub fn solve_p6_with(
    blocks: &[ChannelState],
    sp: &SystemParams,
    opts: &OutageOptions,
) -> Result<OutageSolution> {
    opts.alpha.validate()?;
    let cfg = AlphaSearchConfig {
        alpha_max: opts.alpha.alpha_max.min(1.0 - 1e-9),
        ..opts.alpha
    };
    let (best, value) = alpha_grid_search(
        |a| {
            solve_p6a_with(blocks, sp, a, opts)
                .map(|s| s.capacity)
                .unwrap_or(f64::NEG_INFINITY)
        },
        &cfg,
    );
    if value == f64::NEG_INFINITY {
        return Err(Error::Infeasible(
            "no reflection coefficient admits a solution".into(),
        ));
    }
    solve_p6a_with(blocks, sp, best, opts)
}

pub fn solve_p6(blocks: &[ChannelState], sp: &SystemParams) -> Result<OutageSolution> {
    solve_p6_with(blocks, sp, &OutageOptions::default())
}

/// `Status` of a decision under the outage accounting: silent blocks do not
/// count as outage.
pub fn outage_status(ch: &ChannelState, d: &BlockDecision, sp: &SystemParams) -> Status {
    if d.is_silent() {
        Status::Silent
    } else if chi(ch, d.p, d.effective_alpha(), sp) == 1 {
        Status::Outage
    } else {
        Status::Protected
    }
}
