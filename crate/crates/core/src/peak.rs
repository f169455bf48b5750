//! Per-block solvers under a peak power constraint with a per-block
//! reflection coefficient (P1: ideal energy model, P2: practical model).
//!
//! Both problems separate over blocks. The PT always transmits at `p_pk`;
//! the reflection coefficient is the largest value the primary rate target
//! and the tag's energy budget both allow.

use crate::model::{harvest_margin, secondary_rate, sinr_pr};
use crate::numerics::{bracket_root, BisectionConfig};
use crate::{par, BlockDecision, ChannelState, EnergyModel, Error, Result, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSolution {
    pub decision: BlockDecision,
    /// Largest α meeting both the rate target and the ideal circuit
    /// constraint, clamped to [0, 1].
    pub alpha_l: f64,
    /// Largest α meeting the rate target, clamped to [0, 1].
    pub alpha_m: f64,
    /// Root of the practical energy constraint; `None` when the static
    /// circuit power alone is out of reach.
    pub alpha_pk: Option<f64>,
}

/// Largest α satisfying the primary rate target at power `p`, unclamped.
///
/// Infinite when the target is vacuous (`gamma = 0`) or the tag cannot
/// interfere (`g2 = 0` and the target holds without it); `-inf` when
/// `g2 = 0` and the target fails at `p` regardless of α.
pub fn alpha_m_at(ch: &ChannelState, sp: &SystemParams, p: f64) -> f64 {
    let c = sp.sinr_target();
    if c == 0.0 {
        return f64::INFINITY;
    }
    if ch.g2 == 0.0 || ch.f == 0.0 {
        return if ch.h1 * p >= c * sp.sigma_pr_sq {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
    }
    ch.h1 / (c * ch.g2 * ch.f) - sp.sigma_pr_sq / (ch.g2 * ch.f * p)
}

/// `alpha_m_at` evaluated at the peak power.
pub fn alpha_m(ch: &ChannelState, sp: &SystemParams) -> f64 {
    alpha_m_at(ch, sp, sp.p_pk)
}

/// Largest α meeting the primary rate target and the ideal circuit
/// constraint at `p_pk`, clamped to [0, 1]. Zero marks an infeasible block.
pub fn alpha_l(ch: &ChannelState, sp: &SystemParams) -> Result<f64> {
    if ch.f == 0.0 {
        return Err(Error::DegenerateChannel("f = 0: the tag harvests nothing"));
    }
    let rate = alpha_m(ch, sp);
    let energy = 1.0 - sp.eps_st / (sp.eta_st * ch.f * sp.p_pk);
    Ok(rate.min(energy).clamp(0.0, 1.0))
}

/// Root in α of `eta (1 - α) f p = eps_b + u log2(1 + g1 α f p / sigma_sr^2)`.
///
/// The left side falls and the right side rises in α, so the root is unique;
/// it is returned from the feasible side. Returns 1 when the constraint
/// still holds at full reflection.
pub fn curve_intersection(ch: &ChannelState, sp: &SystemParams, p: f64) -> Result<f64> {
    if ch.f == 0.0 {
        return Err(Error::DegenerateChannel("f = 0: the tag harvests nothing"));
    }
    if sp.eta_st * ch.f * p < sp.eps_b {
        return Err(Error::Infeasible(format!(
            "harvested power {} below static circuit power {}",
            sp.eta_st * ch.f * p,
            sp.eps_b
        )));
    }
    let margin = |a: f64| harvest_margin(ch, p, a, sp, EnergyModel::Practical);
    if margin(1.0) >= 0.0 {
        return Ok(1.0);
    }
    let (lo, _) = bracket_root(margin, 0.0, 1.0, &BisectionConfig::exhaustive())?;
    Ok(lo)
}

/// `curve_intersection` at the peak power.
pub fn alpha_pk(ch: &ChannelState, sp: &SystemParams) -> Result<f64> {
    curve_intersection(ch, sp, sp.p_pk)
}

/// Steps α down until the rate target and circuit constraint hold exactly in
/// floating point; closed forms can overshoot by an ulp.
fn settle(ch: &ChannelState, sp: &SystemParams, em: EnergyModel, mut alpha: f64) -> f64 {
    let p = sp.p_pk;
    let c = sp.sinr_target();
    let ok = |a: f64| {
        let d = BlockDecision::active(p, a);
        harvest_margin(ch, p, a, sp, em) >= 0.0 && sinr_pr(ch, &d, sp) >= c
    };
    for _ in 0..64 {
        if alpha <= 0.0 || ok(alpha) {
            break;
        }
        alpha = alpha.next_down();
    }
    alpha.max(0.0)
}

fn finish(
    ch: &ChannelState,
    sp: &SystemParams,
    em: EnergyModel,
    alpha: f64,
    alpha_l: f64,
    alpha_pk: Option<f64>,
) -> PeakSolution {
    let alpha_m = alpha_m(ch, sp).clamp(0.0, 1.0);
    let alpha = if alpha > 0.0 && ch.g1 > 0.0 {
        settle(ch, sp, em, alpha)
    } else {
        0.0
    };
    let decision = if alpha > 0.0 {
        BlockDecision::active(sp.p_pk, alpha)
    } else {
        BlockDecision::inactive(sp.p_pk)
    };
    PeakSolution {
        decision,
        alpha_l,
        alpha_m,
        alpha_pk,
    }
}

/// P1 for one block: `p = p_pk`, `α = α_L`.
pub fn solve_p1(ch: &ChannelState, sp: &SystemParams) -> PeakSolution {
    let a = alpha_l(ch, sp).unwrap_or(0.0);
    finish(ch, sp, EnergyModel::Ideal, a, a, None)
}

/// P2 for one block: `p = p_pk`, `α = min(α_M, α_pk)` clamped to [0, 1].
pub fn solve_p2(ch: &ChannelState, sp: &SystemParams) -> PeakSolution {
    let a_l = alpha_l(ch, sp).unwrap_or(0.0);
    match alpha_pk(ch, sp) {
        Ok(a_pk) => {
            let a = alpha_m(ch, sp).min(a_pk).clamp(0.0, 1.0);
            finish(ch, sp, EnergyModel::Practical, a, a_l, Some(a_pk))
        }
        Err(_) => finish(ch, sp, EnergyModel::Practical, 0.0, a_l, None),
    }
}

pub fn solve_peak(ch: &ChannelState, sp: &SystemParams, em: EnergyModel) -> PeakSolution {
    match em {
        EnergyModel::Ideal => solve_p1(ch, sp),
        EnergyModel::Practical => solve_p2(ch, sp),
    }
}

/// Solves every block; order is preserved.
pub fn solve_peak_blocks(
    blocks: &[ChannelState],
    sp: &SystemParams,
    em: EnergyModel,
) -> Vec<PeakSolution> {
    par::map(blocks, |ch| solve_peak(ch, sp, em))
}

/// Empirical ergodic capacity of the peak-power solution on `blocks`.
pub fn peak_capacity(blocks: &[ChannelState], sp: &SystemParams, em: EnergyModel) -> f64 {
    par::mean_by(blocks, |_, ch| {
        secondary_rate(ch, &solve_peak(ch, sp, em).decision, sp)
    })
}
