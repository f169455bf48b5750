//! Fixed reflection coefficient under an average power budget with a hard
//! primary rate target (P3: ideal energy model, P4: practical model).
//!
//! For a given `alpha_bar` every block either stays silent or transmits at
//! or above a power floor, and the powers above the floors are water-filled
//! against the budget. The outer problem is a grid search over `alpha_bar`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::allocation::{allocate, rate, Allocation, BlockMenu, Interval, Method, Status};
use crate::numerics::{
    alpha_grid_search, bracket_root, AlphaSearchConfig, BisectionConfig, DualState,
};
use crate::{par, BlockDecision, ChannelState, EnergyModel, Error, Result, SystemParams};

/// Lower bound on the transmit power of a block that carries tag data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FloorSpec {
    Feasible(f64),
    /// The primary rate target cannot be met at any power.
    Infeasible,
}

impl FloorSpec {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Self::Feasible(p) => Some(p),
            Self::Infeasible => None,
        }
    }
}

/// Tag SNR per unit transmit power at reflection `alpha`.
pub fn tag_gain(ch: &ChannelState, sp: &SystemParams, alpha: f64) -> f64 {
    ch.g1 * alpha * ch.f / sp.sigma_sr_sq
}

/// Smallest power meeting the primary rate target at reflection `alpha`
/// (`p'`); `None` when no power does.
pub fn rate_floor(ch: &ChannelState, sp: &SystemParams, alpha: f64) -> Option<f64> {
    let c = sp.sinr_target();
    let d = ch.h1 - c * ch.g2 * alpha * ch.f;
    if c == 0.0 {
        return Some(0.0);
    }
    (d > 0.0).then(|| sp.sigma_pr_sq * c / d)
}

/// Smallest power powering the tag under the ideal model (`p''`).
pub fn circuit_floor(ch: &ChannelState, sp: &SystemParams, alpha: f64) -> f64 {
    if sp.eps_st == 0.0 {
        return 0.0;
    }
    let harvest = sp.eta_st * (1.0 - alpha) * ch.f;
    if harvest > 0.0 {
        // the quotient can land an ulp short of powering the circuit
        let mut p = sp.eps_st / harvest;
        while harvest * p < sp.eps_st {
            p = p.next_up();
        }
        p
    } else {
        f64::INFINITY
    }
}

/// Floor of P3: the larger of the rate and circuit floors.
pub fn p_m(ch: &ChannelState, sp: &SystemParams, alpha_bar: f64) -> FloorSpec {
    match rate_floor(ch, sp, alpha_bar) {
        Some(r) => FloorSpec::Feasible(r.max(circuit_floor(ch, sp, alpha_bar))),
        None => FloorSpec::Infeasible,
    }
}

/// Smallest positive power satisfying the practical circuit constraint at
/// reflection `alpha_bar`. Zero when every power does.
pub fn p_c(ch: &ChannelState, sp: &SystemParams, alpha_bar: f64) -> Result<f64> {
    if ch.f == 0.0 {
        return Err(Error::DegenerateChannel("f = 0: the tag harvests nothing"));
    }
    let slope = sp.eta_st * (1.0 - alpha_bar) * ch.f;
    let a = tag_gain(ch, sp, alpha_bar);
    if !(slope > 0.0) {
        return Err(Error::Infeasible(
            "full reflection leaves nothing to harvest".into(),
        ));
    }
    let h = |p: f64| slope * p - sp.eps_b - sp.u * rate(a, p);
    // h is convex with h(0) = -eps_b.
    if sp.eps_b == 0.0 && slope >= sp.u * a / LN_2 {
        return Ok(0.0);
    }
    let cfg = BisectionConfig::default();
    let mut hi = 1.0;
    let lo;
    let mut steps = 0;
    if h(hi) < 0.0 {
        loop {
            steps += 1;
            if steps > cfg.max_iter {
                return Err(Error::NonConvergence {
                    context: "circuit floor bracketing",
                    iterations: steps,
                    residual: h(hi),
                });
            }
            hi *= 2.0;
            if h(hi) >= 0.0 {
                lo = hi / 2.0;
                break;
            }
        }
    } else {
        loop {
            steps += 1;
            let c = hi / 2.0;
            if steps > cfg.max_iter || c == 0.0 {
                return Ok(hi);
            }
            if h(c) < 0.0 {
                lo = c;
                break;
            }
            hi = c;
        }
    }
    let (_, root) = bracket_root(h, lo, hi, &BisectionConfig::exhaustive())?;
    Ok(root)
}

/// Floor of P4: the larger of the rate floor and `p_c`.
pub fn p_l(ch: &ChannelState, sp: &SystemParams, alpha_bar: f64) -> Result<FloorSpec> {
    match rate_floor(ch, sp, alpha_bar) {
        Some(r) => Ok(FloorSpec::Feasible(r.max(p_c(ch, sp, alpha_bar)?))),
        None => Ok(FloorSpec::Infeasible),
    }
}

/// Optimal power of one block at multiplier `lambda` given its floor.
///
/// Above the floor the power follows the water level `1/(lambda ln 2) -
/// 1/a`. The block goes silent when even its best active power yields a
/// negative Lagrangian `log2(1 + a p) - lambda p`; a tie stays active.
pub fn waterfill_block(
    ch: &ChannelState,
    sp: &SystemParams,
    alpha_bar: f64,
    lambda: f64,
    floor: FloorSpec,
) -> f64 {
    let Some(floor) = floor.value() else {
        return 0.0;
    };
    let a = tag_gain(ch, sp, alpha_bar);
    if !(a > 0.0) || !floor.is_finite() {
        return 0.0;
    }
    if lambda <= 0.0 {
        return f64::INFINITY;
    }
    let p = (1.0 / (lambda * LN_2) - 1.0 / a).max(floor);
    if rate(a, p) - lambda * p < 0.0 {
        0.0
    } else {
        p
    }
}

/// Option menu of one block for the average-power engine. Only the
/// protected interval is offered: the primary must meet its target whenever
/// the PT transmits.
pub fn menu(ch: &ChannelState, sp: &SystemParams, alpha_bar: f64, em: EnergyModel) -> BlockMenu {
    let a = tag_gain(ch, sp, alpha_bar);
    let Some(r) = rate_floor(ch, sp, alpha_bar) else {
        return BlockMenu::silent_only();
    };
    let energy = match em {
        EnergyModel::Ideal => Ok(circuit_floor(ch, sp, alpha_bar)),
        EnergyModel::Practical => p_c(ch, sp, alpha_bar),
    };
    match energy {
        // At exactly p' the primary rate equals the target; the next
        // representable power keeps it strictly protected.
        Ok(e) => BlockMenu::new(a, Interval::from(r.next_up().max(e)), None),
        Err(_) => BlockMenu::silent_only(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageOptions {
    pub alpha: AlphaSearchConfig,
    pub method: Method,
}

impl Default for AverageOptions {
    fn default() -> Self {
        Self {
            alpha: AlphaSearchConfig::default(),
            method: Method::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AverageSolution {
    pub alpha: f64,
    pub profile: Vec<BlockDecision>,
    /// `lambda` carries the power multiplier.
    pub dual: DualState,
    pub capacity: f64,
    pub mean_power: f64,
}

pub(crate) fn profile_of(alloc: &Allocation, alpha: f64) -> Vec<BlockDecision> {
    alloc
        .statuses
        .iter()
        .zip(&alloc.powers)
        .map(|(s, &p)| match s {
            Status::Silent => BlockDecision::silent(),
            _ => BlockDecision::active(p, alpha),
        })
        .collect()
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

/// Inner problem at a fixed `alpha_bar`.
pub fn solve_average_fixed(
    blocks: &[ChannelState],
    sp: &SystemParams,
    alpha_bar: f64,
    em: EnergyModel,
    method: Method,
) -> Result<AverageSolution> {
    check_alpha(alpha_bar)?;
    let menus = par::map(blocks, |ch| menu(ch, sp, alpha_bar, em));
    let alloc = allocate(&menus, sp.p_av, 0, method)?;
    Ok(AverageSolution {
        alpha: alpha_bar,
        profile: profile_of(&alloc, alpha_bar),
        dual: DualState {
            lambda: alloc.power_price,
            mu: 0.0,
            iterations: 0,
            converged: alloc.converged,
        },
        capacity: alloc.capacity,
        mean_power: alloc.mean_power,
    })
}

pub fn solve_p3a(
    blocks: &[ChannelState],
    sp: &SystemParams,
    alpha_bar: f64,
) -> Result<AverageSolution> {
    solve_average_fixed(blocks, sp, alpha_bar, EnergyModel::Ideal, Method::Auto)
}

pub fn solve_p4a(
    blocks: &[ChannelState],
    sp: &SystemParams,
    alpha_bar: f64,
) -> Result<AverageSolution> {
    solve_average_fixed(blocks, sp, alpha_bar, EnergyModel::Practical, Method::Auto)
}

/// Outer grid search over `alpha_bar`; ties go to the smaller coefficient.
pub fn solve_average(
    blocks: &[ChannelState],
    sp: &SystemParams,
    em: EnergyModel,
    opts: &AverageOptions,
) -> Result<AverageSolution> {
    opts.alpha.validate()?;
    let alpha_cfg = AlphaSearchConfig {
        alpha_max: opts.alpha.alpha_max.min(1.0 - 1e-9),
        ..opts.alpha
    };
    let (alpha, _) = alpha_grid_search(
        |a| {
            solve_average_fixed(blocks, sp, a, em, opts.method)
                .map(|s| s.capacity)
                .unwrap_or(f64::NEG_INFINITY)
        },
        &alpha_cfg,
    );
    solve_average_fixed(blocks, sp, alpha, em, opts.method)
}

pub fn solve_p3(blocks: &[ChannelState], sp: &SystemParams) -> Result<AverageSolution> {
    solve_average(blocks, sp, EnergyModel::Ideal, &AverageOptions::default())
}

pub fn solve_p4(blocks: &[ChannelState], sp: &SystemParams) -> Result<AverageSolution> {
    solve_average(
        blocks,
        sp,
        EnergyModel::Practical,
        &AverageOptions::default(),
    )
}
