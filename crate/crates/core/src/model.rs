//! Domain types and the instantaneous link formulas every solver evaluates.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Channel power gains of one fading block.
///
/// `h2` (PT to SR) is carried for completeness but enters no formula: the
/// reader cancels the primary signal before decoding the tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    /// PT to PR.
    pub h1: f64,
    /// ST to SR.
    pub g1: f64,
    /// PT to ST.
    pub f: f64,
    /// PT to SR.
    pub h2: f64,
    /// ST to PR.
    pub g2: f64,
}

impl ChannelState {
    pub fn new(h1: f64, g1: f64, f: f64, h2: f64, g2: f64) -> Result<Self> {
        let ch = Self { h1, g1, f, h2, g2 };
        ch.validate()?;
        Ok(ch)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("h1", self.h1),
            ("g1", self.g1),
            ("f", self.f),
            ("h2", self.h2),
            ("g2", self.g2),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "channel gains must be finite and nonnegative",
                });
            }
        }
        Ok(())
    }
}

/// Noise powers, energy-model constants, QoS targets and power budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub sigma_pr_sq: f64,
    pub sigma_sr_sq: f64,
    /// Energy-harvesting efficiency of the tag.
    pub eta_st: f64,
    /// Circuit power of the ideal energy model.
    pub eps_st: f64,
    /// Static circuit power of the practical energy model.
    pub eps_b: f64,
    /// Dynamic energy per bit/use of the practical energy model.
    pub u: f64,
    /// Primary minimum rate in bits per channel use.
    pub gamma: f64,
    pub p_pk: f64,
    pub p_av: f64,
    /// Acceptable primary outage probability.
    pub eps_out: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            sigma_pr_sq: 1.0,
            sigma_sr_sq: 1.0,
            eta_st: 1.0,
            eps_st: 0.1,
            eps_b: 0.1,
            u: 1.0,
            gamma: 1.0,
            p_pk: 10.0,
            p_av: 10.0,
            eps_out: 0.1,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma_pr_sq", self.sigma_pr_sq),
            ("sigma_sr_sq", self.sigma_sr_sq),
            ("p_pk", self.p_pk),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite and strictly positive",
                });
            }
        }
        // An infinite average budget is the "never binds" sentinel.
        if !(self.p_av > 0.0) {
            return Err(Error::InvalidParameter {
                name: "p_av",
                value: self.p_av,
                reason: "must be strictly positive",
            });
        }
        if !(self.eta_st > 0.0 && self.eta_st <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "eta_st",
                value: self.eta_st,
                reason: "must lie in (0, 1]",
            });
        }
        let nonnegative = [
            ("eps_st", self.eps_st),
            ("eps_b", self.eps_b),
            ("u", self.u),
            ("gamma", self.gamma),
        ];
        for (name, value) in nonnegative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite and nonnegative",
                });
            }
        }
        if !(0.0..=1.0).contains(&self.eps_out) {
            return Err(Error::InvalidParameter {
                name: "eps_out",
                value: self.eps_out,
                reason: "must lie in [0, 1]",
            });
        }
        Ok(())
    }

    /// SINR the primary needs to reach `gamma` bits: `2^gamma - 1`.
    pub fn sinr_target(&self) -> f64 {
        self.gamma.exp2() - 1.0
    }
}

/// Per-block allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockDecision {
    pub p: f64,
    pub alpha: f64,
    /// False when the tag is off in this block: it then reflects nothing,
    /// contributes no secondary rate and causes no interference at the PR.
    pub secondary_active: bool,
}

impl BlockDecision {
    pub fn active(p: f64, alpha: f64) -> Self {
        Self {
            p,
            alpha,
            secondary_active: true,
        }
    }

    pub fn inactive(p: f64) -> Self {
        Self {
            p,
            alpha: 0.0,
            secondary_active: false,
        }
    }

    /// A block in which the PT stays silent and the tag is off.
    pub fn silent() -> Self {
        Self::inactive(0.0)
    }

    pub fn is_silent(&self) -> bool {
        self.p == 0.0
    }

    /// Reflection coefficient seen by the channel.
    pub fn effective_alpha(&self) -> f64 {
        if self.secondary_active {
            self.alpha
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyModel {
    /// Constant circuit power `eps_st`.
    Ideal,
    /// Static power `eps_b` plus `u` per bit of tag rate.
    Practical,
}

/// Instantaneous SINR at the primary receiver.
pub fn sinr_pr(ch: &ChannelState, d: &BlockDecision, sp: &SystemParams) -> f64 {
    let interference = ch.g2 * d.effective_alpha() * ch.f * d.p;
    ch.h1 * d.p / (interference + sp.sigma_pr_sq)
}

/// Instantaneous SNR at the reader.
pub fn snr_sr(ch: &ChannelState, d: &BlockDecision, sp: &SystemParams) -> f64 {
    if !d.secondary_active {
        return 0.0;
    }
    ch.g1 * d.alpha * ch.f * d.p / sp.sigma_sr_sq
}

/// Tag rate in bits per channel use.
pub fn secondary_rate(ch: &ChannelState, d: &BlockDecision, sp: &SystemParams) -> f64 {
    snr_sr(ch, d, sp).ln_1p() / std::f64::consts::LN_2
}

/// Primary rate in bits per channel use.
pub fn primary_rate(ch: &ChannelState, d: &BlockDecision, sp: &SystemParams) -> f64 {
    sinr_pr(ch, d, sp).ln_1p() / std::f64::consts::LN_2
}

/// Power the tag needs at reflection `alpha` and transmit power `p`.
pub fn circuit_demand(
    ch: &ChannelState,
    p: f64,
    alpha: f64,
    sp: &SystemParams,
    em: EnergyModel,
) -> f64 {
    match em {
        EnergyModel::Ideal => sp.eps_st,
        EnergyModel::Practical => {
            let snr = ch.g1 * alpha * ch.f * p / sp.sigma_sr_sq;
            sp.eps_b + sp.u * snr.ln_1p() / std::f64::consts::LN_2
        }
    }
}

/// Harvested power minus circuit demand; nonnegative iff the tag can run.
pub fn harvest_margin(
    ch: &ChannelState,
    p: f64,
    alpha: f64,
    sp: &SystemParams,
    em: EnergyModel,
) -> f64 {
    sp.eta_st * (1.0 - alpha) * ch.f * p - circuit_demand(ch, p, alpha, sp, em)
}

pub fn harvest_satisfied(
    ch: &ChannelState,
    d: &BlockDecision,
    sp: &SystemParams,
    em: EnergyModel,
) -> bool {
    harvest_margin(ch, d.p, d.alpha, sp, em) >= 0.0
}

/// `h1 - (2^gamma - 1) g2 alpha f`. The primary rate target is reachable at
/// some power iff this is positive.
pub fn interference_margin(ch: &ChannelState, sp: &SystemParams, alpha: f64) -> f64 {
    ch.h1 - sp.sinr_target() * ch.g2 * alpha * ch.f
}
