//! Average-power allocation engine shared by the fixed-α problems (P3, P4,
//! P6).
//!
//! Each block offers a small menu: stay silent (PT off, tag off), transmit
//! somewhere in a protected interval where the primary meets its rate
//! target, or (outage problems only) transmit in an interval where the
//! primary is in outage. The engine picks one option and a power per block
//! to maximize the mean tag rate `log2(1 + a p)` under a mean-power budget
//! and a cap on the number of outage blocks.
//!
//! The dual phase prices power with a multiplier `mu` and ranks blocks by
//! the Lagrangian gain of going into outage, which prices the outage cap
//! implicitly. Once the options are fixed the powers are re-water-filled so
//! the budget is met exactly. Small instances are solved by enumerating
//! every option assignment instead, since the dual can leave a gap when the
//! per-block feasible sets are not convex.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::numerics::{bracket_multiplier, BisectionConfig};
use crate::{par, Error, Result};

/// Closed power interval; `hi` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// `None` when the interval is empty or `lo` is not a finite power.
    pub fn new(lo: f64, hi: f64) -> Option<Self> {
        (lo.is_finite() && lo >= 0.0 && lo <= hi).then_some(Self { lo, hi })
    }

    pub fn from(lo: f64) -> Option<Self> {
        Self::new(lo, f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Silent,
    Protected,
    Outage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockMenu {
    /// Tag SNR per unit transmit power, `g1 α f / sigma_sr^2`.
    pub a: f64,
    pub protected: Option<Interval>,
    pub outage: Option<Interval>,
}

impl BlockMenu {
    pub fn silent_only() -> Self {
        Self {
            a: 0.0,
            protected: None,
            outage: None,
        }
    }

    /// Builds a menu; options are dropped when the tag gains nothing from
    /// transmitting (`a = 0`).
    pub fn new(a: f64, protected: Option<Interval>, outage: Option<Interval>) -> Self {
        if !(a > 0.0) {
            return Self::silent_only();
        }
        Self {
            a,
            protected,
            outage,
        }
    }

    pub fn option(&self, s: Status) -> Option<Interval> {
        match s {
            Status::Silent => Interval::new(0.0, 0.0),
            Status::Protected => self.protected,
            Status::Outage => self.outage,
        }
    }
}

/// `log2(1 + a p)`.
pub fn rate(a: f64, p: f64) -> f64 {
    (a * p).ln_1p() / LN_2
}

/// Power in `iv` maximizing `log2(1 + a p) - mu p`.
pub fn best_power(a: f64, iv: Interval, mu: f64) -> f64 {
    let level = if a > 0.0 {
        1.0 / (mu * LN_2) - 1.0 / a
    } else {
        f64::NEG_INFINITY
    };
    level.max(iv.lo).min(iv.hi)
}

fn lagrangian(a: f64, p: f64, mu: f64) -> f64 {
    let cost = if mu == 0.0 { 0.0 } else { mu * p };
    rate(a, p) - cost
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Exhaustive up to [`EXHAUSTIVE_MAX_BLOCKS`] blocks, dual otherwise.
    #[default]
    Auto,
    Dual,
    Exhaustive,
}

pub const EXHAUSTIVE_MAX_BLOCKS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub statuses: Vec<Status>,
    pub powers: Vec<f64>,
    /// Mean tag rate in bits per channel use.
    pub capacity: f64,
    pub mean_power: f64,
    pub outage_fraction: f64,
    /// Multiplier of the mean-power budget.
    pub power_price: f64,
    /// Multiplier of the outage cap; zero when the cap is slack.
    pub outage_price: f64,
    /// False when the dual phase could not meet the budget within 1e-3
    /// relative before polishing.
    pub converged: bool,
}

struct Choice {
    base: Status,
    base_power: f64,
    base_value: f64,
    outage: Option<(f64, f64)>,
}

fn choose(m: &BlockMenu, mu: f64) -> Choice {
    let (base, base_power, base_value) = match m.protected {
        Some(iv) => {
            let p = best_power(m.a, iv, mu);
            let v = lagrangian(m.a, p, mu);
            if v >= 0.0 {
                (Status::Protected, p, v)
            } else {
                (Status::Silent, 0.0, 0.0)
            }
        }
        None => (Status::Silent, 0.0, 0.0),
    };
    let outage = m.outage.map(|iv| {
        let p = best_power(m.a, iv, mu);
        (p, lagrangian(m.a, p, mu))
    });
    Choice {
        base,
        base_power,
        base_value,
        outage,
    }
}

/// Lagrangian-optimal options at power price `mu` with at most
/// `max_outage` outage blocks. Returns the statuses, powers and the outage
/// price implied by the ranking.
fn lagrangian_profile(
    menus: &[BlockMenu],
    mu: f64,
    max_outage: usize,
) -> (Vec<Status>, Vec<f64>, f64) {
    let choices = par::map(menus, |m| choose(m, mu));
    let mut statuses: Vec<Status> = choices.iter().map(|c| c.base).collect();
    let mut powers: Vec<f64> = choices.iter().map(|c| c.base_power).collect();
    let mut ranked: Vec<(usize, f64)> = choices
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let (_, v) = c.outage?;
            let gain = v - c.base_value;
            (gain > 0.0).then_some((i, gain))
        })
        .collect();
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    for &(i, _) in ranked.iter().take(max_outage) {
        statuses[i] = Status::Outage;
        powers[i] = choices[i].outage.map(|(p, _)| p).unwrap_or(0.0);
    }
    let price = ranked.get(max_outage).map(|&(_, g)| g).unwrap_or(0.0);
    (statuses, powers, price)
}

fn mean(xs: &[f64]) -> f64 {
    par::mean_by(xs, |_, x| *x)
}

fn polish_cfg() -> BisectionConfig {
    BisectionConfig {
        abs_tol: 1e-13,
        max_iter: 400,
    }
}

/// Water-fills the budget over blocks with fixed options. `None` when the
/// interval floors alone exceed the budget.
fn polish(menus: &[BlockMenu], statuses: &[Status], p_av: f64) -> Option<(Vec<f64>, f64)> {
    let ivs: Vec<Option<Interval>> = menus
        .iter()
        .zip(statuses)
        .map(|(m, &s)| match s {
            Status::Silent => None,
            s => m.option(s),
        })
        .collect();
    let floor = par::mean_by(&ivs, |_, iv| iv.map_or(0.0, |iv| iv.lo));
    if floor > p_av {
        return None;
    }
    let powers_at = |mu: f64| -> Vec<f64> {
        menus
            .iter()
            .zip(&ivs)
            .map(|(m, iv)| iv.map_or(0.0, |iv| best_power(m.a, iv, mu)))
            .collect()
    };
    let b = bracket_multiplier(|mu| mean(&powers_at(mu)), p_av, &polish_cfg()).ok()?;
    Some((powers_at(b.hi), b.hi))
}

fn assemble(
    menus: &[BlockMenu],
    statuses: Vec<Status>,
    powers: Vec<f64>,
    power_price: f64,
    max_outage: usize,
    converged: bool,
) -> Allocation {
    let n = menus.len().max(1) as f64;
    let capacity = par::mean_by(menus, |i, m| rate(m.a, powers[i]));
    let outage_count = statuses.iter().filter(|&&s| s == Status::Outage).count();
    let outage_price = if outage_count < max_outage {
        0.0
    } else {
        lagrangian_profile(menus, power_price, max_outage).2
    };
    Allocation {
        capacity,
        mean_power: mean(&powers),
        outage_fraction: outage_count as f64 / n,
        statuses,
        powers,
        power_price,
        outage_price,
        converged,
    }
}

fn better(current: &Option<Allocation>, capacity: f64) -> bool {
    current.as_ref().is_none_or(|b| capacity > b.capacity)
}

fn dual(menus: &[BlockMenu], p_av: f64, max_outage: usize) -> Result<Allocation> {
    let b = bracket_multiplier(
        |mu| mean(&lagrangian_profile(menus, mu, max_outage).1),
        p_av,
        &BisectionConfig::default(),
    )?;
    let mut best: Option<Allocation> = None;
    let mut sides = vec![b.hi];
    if b.lo > 0.0 {
        sides.push(b.lo);
    }
    for mu in sides {
        let (statuses, _, _) = lagrangian_profile(menus, mu, max_outage);
        if let Some((powers, price)) = polish(menus, &statuses, p_av) {
            let cand = assemble(menus, statuses, powers, price, max_outage, b.dual.converged);
            if better(&best, cand.capacity) {
                best = Some(cand);
            }
        }
    }
    let best =
        best.ok_or_else(|| Error::Infeasible("no option assignment fits the power budget".into()))?;
    Ok(repair(menus, p_av, max_outage, best))
}

/// Silent blocks tried per repair round.
const REPAIR_CANDIDATES: usize = 4;
const REPAIR_ROUNDS: usize = 8;
/// Up to this many blocks the repair also tries every swap and drop.
const LOCAL_SEARCH_MAX_BLOCKS: usize = 16;

fn floor_of(m: &BlockMenu, s: Status) -> f64 {
    match s {
        Status::Silent => 0.0,
        s => m.option(s).map_or(0.0, |iv| iv.lo),
    }
}

/// Local search from the dual solution. The Lagrangian cannot see a block
/// whose floor alone is a large share of the budget: its power jumps past
/// the budget as soon as it turns on, so the dual keeps it silent even when
/// using it is best. Each round tries switching on the silent blocks with
/// the least negative Lagrangian and, on small instances, every swap of an
/// active block for a silent one and every drop; the best strict gain is
/// kept.
fn repair(menus: &[BlockMenu], p_av: f64, max_outage: usize, mut best: Allocation) -> Allocation {
    let n = menus.len();
    let budget = p_av * n as f64;
    let small = n <= LOCAL_SEARCH_MAX_BLOCKS;
    for _ in 0..REPAIR_ROUNDS {
        let mu = best.power_price;
        let floor: f64 = menus
            .iter()
            .zip(&best.statuses)
            .map(|(m, &s)| floor_of(m, s))
            .sum();
        let outages = best
            .statuses
            .iter()
            .filter(|&&s| s == Status::Outage)
            .count();
        let mut adds: Vec<(f64, usize, Status)> = Vec::new();
        for (i, m) in menus.iter().enumerate() {
            if best.statuses[i] != Status::Silent {
                continue;
            }
            for s in [Status::Protected, Status::Outage] {
                if s == Status::Outage && outages >= max_outage {
                    continue;
                }
                let Some(iv) = m.option(s) else { continue };
                if floor + iv.lo > budget {
                    continue;
                }
                // capped so that a zero price still ranks by a finite value
                let q = best_power(m.a, iv, mu).min(budget - floor).max(iv.lo);
                adds.push((lagrangian(m.a, q, mu), i, s));
            }
        }
        adds.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        let mut moves: Vec<Vec<Status>> = adds
            .iter()
            .take(REPAIR_CANDIDATES)
            .map(|&(_, i, s)| {
                let mut st = best.statuses.clone();
                st[i] = s;
                st
            })
            .collect();
        if small {
            for i in (0..n).filter(|&i| best.statuses[i] != Status::Silent) {
                let mut dropped = best.statuses.clone();
                dropped[i] = Status::Silent;
                let freed = floor - floor_of(&menus[i], best.statuses[i]);
                let outages_left = outages - usize::from(best.statuses[i] == Status::Outage);
                for j in (0..n).filter(|&j| best.statuses[j] == Status::Silent) {
                    for s in [Status::Protected, Status::Outage] {
                        if s == Status::Outage && outages_left >= max_outage {
                            continue;
                        }
                        let Some(iv) = menus[j].option(s) else {
                            continue;
                        };
                        if freed + iv.lo <= budget {
                            let mut st = dropped.clone();
                            st[j] = s;
                            moves.push(st);
                        }
                    }
                }
                moves.push(dropped);
            }
        }
        let mut improved: Option<Allocation> = None;
        for statuses in moves {
            if let Some((powers, price)) = polish(menus, &statuses, p_av) {
                let capacity = par::mean_by(menus, |j, m| rate(m.a, powers[j]));
                let bar = improved.as_ref().map_or(best.capacity, |a| a.capacity);
                if capacity > bar {
                    improved = Some(assemble(
                        menus,
                        statuses,
                        powers,
                        price,
                        max_outage,
                        best.converged,
                    ));
                }
            }
        }
        match improved {
            Some(a) => best = a,
            None => break,
        }
    }
    best
}

fn exhaustive(menus: &[BlockMenu], p_av: f64, max_outage: usize) -> Allocation {
    let n = menus.len();
    let budget = p_av * n as f64;
    let mut best: Option<Allocation> = None;
    let mut statuses = vec![Status::Silent; n];

    #[allow(clippy::too_many_arguments)]
    fn walk(
        i: usize,
        floor: f64,
        outages: usize,
        statuses: &mut Vec<Status>,
        ctx: &mut dyn FnMut(&[Status]),
        menus: &[BlockMenu],
        budget: f64,
        max_outage: usize,
    ) {
        if i == menus.len() {
            ctx(statuses);
            return;
        }
        for s in [Status::Silent, Status::Protected, Status::Outage] {
            let Some(iv) = menus[i].option(s) else {
                continue;
            };
            let outages = outages + usize::from(s == Status::Outage);
            if outages > max_outage || floor + iv.lo > budget {
                continue;
            }
            statuses[i] = s;
            walk(
                i + 1,
                floor + iv.lo,
                outages,
                statuses,
                ctx,
                menus,
                budget,
                max_outage,
            );
        }
        statuses[i] = Status::Silent;
    }

    let mut visit = |st: &[Status]| {
        if let Some((powers, price)) = polish(menus, st, p_av) {
            let capacity = par::mean_by(menus, |i, m| rate(m.a, powers[i]));
            if better(&best, capacity) {
                best = Some(assemble(
                    menus,
                    st.to_vec(),
                    powers,
                    price,
                    max_outage,
                    true,
                ));
            }
        }
    };
    walk(
        0,
        0.0,
        0,
        &mut statuses,
        &mut visit,
        menus,
        budget,
        max_outage,
    );
    best.unwrap_or_else(|| {
        let st = vec![Status::Silent; n];
        assemble(menus, st, vec![0.0; n], 0.0, max_outage, true)
    })
}

/// Maximizes the mean of `log2(1 + a p)` over the menus subject to a mean
/// power of at most `p_av` and at most `max_outage` outage blocks.
pub fn allocate(
    menus: &[BlockMenu],
    p_av: f64,
    max_outage: usize,
    method: Method,
) -> Result<Allocation> {
    if !(p_av.is_finite() && p_av > 0.0) {
        return Err(Error::InvalidParameter {
            name: "p_av",
            value: p_av,
            reason: "average-power allocation needs a finite positive budget",
        });
    }
    if menus.is_empty() {
        return Ok(assemble(
            menus,
            Vec::new(),
            Vec::new(),
            0.0,
            max_outage,
            true,
        ));
    }
    let use_exhaustive = match method {
        Method::Auto => menus.len() <= EXHAUSTIVE_MAX_BLOCKS,
        Method::Dual => false,
        Method::Exhaustive => true,
    };
    if use_exhaustive {
        Ok(exhaustive(menus, p_av, max_outage))
    } else {
        dual(menus, p_av, max_outage)
    }
}

/// Outage blocks allowed by a probability budget on `n` blocks.
pub fn outage_allowance(eps: f64, n: usize) -> usize {
    ((eps * n as f64) + 1e-9).floor().max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn open(a: f64, lo: f64) -> BlockMenu {
        BlockMenu::new(a, Interval::from(lo), None)
    }

    #[test]
    fn best_power_clamps_water_level() {
        let iv = Interval::from(0.0).unwrap();
        assert_abs_diff_eq!(
            best_power(0.5, iv, 0.2),
            1.0 / (0.2 * LN_2) - 2.0,
            epsilon = 1e-12
        );
        assert_eq!(best_power(0.5, Interval::from(7.0).unwrap(), 0.2), 7.0);
        assert_eq!(best_power(0.5, Interval::new(0.0, 1.0).unwrap(), 0.2), 1.0);
        assert_eq!(best_power(0.0, iv, 0.2), 0.0);
    }

    #[test]
    fn single_block_spends_whole_budget() {
        let a = allocate(&[open(1.0, 0.0)], 3.0, 0, Method::Dual).unwrap();
        assert_abs_diff_eq!(a.powers[0], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(a.capacity, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn two_block_waterfill_is_classic() {
        // levels: w - 1/a; a = (1, 0.25) and budget 0.8 keep block 2 silent.
        let menus = [open(1.0, 0.0), open(0.25, 0.0)];
        for s in [Method::Dual, Method::Exhaustive] {
            let a = allocate(&menus, 0.8, 0, s).unwrap();
            assert_abs_diff_eq!(a.powers[0], 1.6, epsilon = 1e-9);
            assert_abs_diff_eq!(a.powers[1], 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(a.mean_power, 0.8, epsilon = 1e-9);
        }
    }

    #[test]
    fn floor_above_budget_forces_silence() {
        let a = allocate(&[open(1.0, 5.0)], 1.0, 0, Method::Dual).unwrap();
        assert_eq!(a.statuses[0], Status::Silent);
        assert_eq!(a.capacity, 0.0);
    }

    #[test]
    fn outage_option_respects_cap() {
        let m = BlockMenu::new(1.0, Interval::from(10.0), Interval::new(0.5, 10.0));
        let menus = [m; 4];
        for s in [Method::Dual, Method::Exhaustive] {
            let a = allocate(&menus, 1.0, 2, s).unwrap();
            let outages = a.statuses.iter().filter(|&&s| s == Status::Outage).count();
            assert!(outages <= 2);
            assert!(a.mean_power <= 1.0 * (1.0 + 1e-12));
            assert!(a.capacity > 0.0);
        }
    }

    #[test]
    fn rejects_infinite_budget() {
        assert!(allocate(&[open(1.0, 0.0)], f64::INFINITY, 0, Method::Auto).is_err());
    }

    #[test]
    fn allowance_rounding() {
        assert_eq!(outage_allowance(0.1, 1000), 100);
        assert_eq!(outage_allowance(0.0, 1000), 0);
        assert_eq!(outage_allowance(1.0, 7), 7);
        assert_eq!(outage_allowance(0.3, 10), 3);
    }

    fn menu() -> impl Strategy<Value = BlockMenu> {
        (
            0.01f64..5.0,
            0.0f64..3.0,
            proptest::option::of((0.0f64..2.0, 0.0f64..3.0)),
        )
            .prop_map(|(a, lo, out)| {
                BlockMenu::new(
                    a,
                    Interval::from(lo),
                    out.and_then(|(l, w)| Interval::new(l, l + w)),
                )
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn allocations_are_feasible(menus in proptest::collection::vec(menu(), 1..7), p_av in 0.1f64..4.0, k in 0usize..3) {
            for s in [Method::Dual, Method::Exhaustive] {
                let a = allocate(&menus, p_av, k, s).unwrap();
                prop_assert!(a.mean_power <= p_av * (1.0 + 1e-9));
                let outages = a.statuses.iter().filter(|&&s| s == Status::Outage).count();
                prop_assert!(outages <= k);
                for ((m, st), p) in menus.iter().zip(&a.statuses).zip(&a.powers) {
                    let iv = m.option(*st).unwrap();
                    prop_assert!(*p >= iv.lo && *p <= iv.hi);
                }
            }
        }

        #[test]
        fn exhaustive_dominates_dual(menus in proptest::collection::vec(menu(), 1..6), p_av in 0.1f64..4.0, k in 0usize..3) {
            let d = allocate(&menus, p_av, k, Method::Dual).unwrap();
            let e = allocate(&menus, p_av, k, Method::Exhaustive).unwrap();
            prop_assert!(e.capacity >= d.capacity - 1e-9);
        }
    }
}
