//! Brute-force reference solutions on linear grids. These only evaluate the
//! model formulas and never call into the solvers, so they can be used to
//! check them.

use serde::{Deserialize, Serialize};

use crate::model::{harvest_margin, sinr_pr};
use crate::{par, BlockDecision, ChannelState, EnergyModel, Error, Result, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub p_points: usize,
    pub alpha_points: usize,
    pub p_max: f64,
}

impl GridSpec {
    pub fn peak(sp: &SystemParams) -> Self {
        Self {
            p_points: 2001,
            alpha_points: 1001,
            p_max: sp.p_pk,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_points < 2 || self.alpha_points < 2 {
            return Err(Error::InvalidParameter {
                name: "grid",
                value: self.p_points.min(self.alpha_points) as f64,
                reason: "need at least two points per axis",
            });
        }
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(Error::InvalidParameter {
                name: "p_max",
                value: self.p_max,
                reason: "must be finite and positive",
            });
        }
        Ok(())
    }

    pub fn p(&self, i: usize) -> f64 {
        self.p_max * i as f64 / (self.p_points - 1) as f64
    }

    pub fn alpha(&self, j: usize) -> f64 {
        j as f64 / (self.alpha_points - 1) as f64
    }

    pub fn p_step(&self) -> f64 {
        self.p_max / (self.p_points - 1) as f64
    }

    pub fn alpha_step(&self) -> f64 {
        1.0 / (self.alpha_points - 1) as f64
    }
}

fn bits(snr: f64) -> f64 {
    snr.ln_1p() / std::f64::consts::LN_2
}

/// Rate target and circuit constraint for an active tag at `(p, alpha)`.
fn feasible(ch: &ChannelState, sp: &SystemParams, em: EnergyModel, p: f64, alpha: f64) -> bool {
    let d = BlockDecision::active(p, alpha);
    sinr_pr(ch, &d, sp) >= sp.sinr_target() && harvest_margin(ch, p, alpha, sp, em) >= 0.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockOptimum {
    pub p: f64,
    pub alpha: f64,
    pub rate: f64,
    pub active: bool,
}

/// Best feasible grid point of one block under the peak power constraint.
///
/// The rate only depends on `alpha * p`, so a row (fixed `p`) whose largest
/// product cannot beat the incumbent is skipped, and inside a row the scan
/// stops at the first feasible `alpha` from the top. Both cuts are exact.
/// Ties go to the smaller `p`.
pub fn oracle_per_block(
    ch: &ChannelState,
    sp: &SystemParams,
    em: EnergyModel,
    grid: &GridSpec,
) -> BlockOptimum {
    let mut best = BlockOptimum {
        p: 0.0,
        alpha: 0.0,
        rate: 0.0,
        active: false,
    };
    let mut best_product = 0.0;
    for i in (1..grid.p_points).rev() {
        let p = grid.p(i);
        if p < best_product {
            break;
        }
        for j in (1..grid.alpha_points).rev() {
            let alpha = grid.alpha(j);
            let product = alpha * p;
            if product < best_product {
                break;
            }
            if feasible(ch, sp, em, p, alpha) {
                best_product = product;
                best = BlockOptimum {
                    p,
                    alpha,
                    rate: bits(ch.g1 * alpha * ch.f * p / sp.sigma_sr_sq),
                    active: true,
                };
                break;
            }
        }
    }
    best
}

/// Largest rate change across one grid cell: the rate's Lipschitz constant
/// in `alpha * p` times the largest change of that product over a cell.
pub fn per_block_cell_bound(ch: &ChannelState, sp: &SystemParams, grid: &GridSpec) -> f64 {
    let slope = ch.g1 * ch.f / (sp.sigma_sr_sq * std::f64::consts::LN_2);
    slope * (grid.alpha_step() * grid.p_max + grid.p_step())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AverageOptimum {
    pub powers: Vec<f64>,
    pub capacity: f64,
}

/// Exact maximum of the mean tag rate over per-block powers on the grid
/// `k * p_max / steps`, with silence always allowed and the mean power
/// within `p_av`.
///
/// The grid runs up to the whole budget `N * p_av`, which no single block
/// can exceed. Solved by dynamic programming over the spent budget, which
/// visits every point of the Cartesian product implicitly.
pub fn oracle_average(
    blocks: &[ChannelState],
    sp: &SystemParams,
    alpha_bar: f64,
    em: EnergyModel,
    steps: usize,
) -> AverageOptimum {
    let n = blocks.len();
    let p_max = sp.p_av * n as f64;
    let h = p_max / steps as f64;
    let tables: Vec<Vec<f64>> = par::map(blocks, |ch| {
        (0..=steps)
            .map(|k| {
                let p = k as f64 * h;
                if k == 0 {
                    0.0
                } else if feasible(ch, sp, em, p, alpha_bar) {
                    bits(ch.g1 * alpha_bar * ch.f * p / sp.sigma_sr_sq)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    });
    let (choice, total) = knapsack(&tables, steps);
    AverageOptimum {
        powers: choice.iter().map(|&k| k as f64 * h).collect(),
        capacity: total / n.max(1) as f64,
    }
}

/// Maximizes `sum_n table[n][k_n]` subject to `sum_n k_n <= budget`.
fn knapsack(tables: &[Vec<f64>], budget: usize) -> (Vec<usize>, f64) {
    let mut best = vec![0.0; budget + 1];
    let mut picks: Vec<Vec<usize>> = Vec::with_capacity(tables.len());
    for t in tables {
        let mut next = vec![f64::NEG_INFINITY; budget + 1];
        let mut pick = vec![0; budget + 1];
        for b in 0..=budget {
            for (k, &r) in t.iter().enumerate().take(b + 1) {
                if r == f64::NEG_INFINITY {
                    continue;
                }
                let v = best[b - k] + r;
                if v > next[b] {
                    next[b] = v;
                    pick[b] = k;
                }
            }
        }
        best = next;
        picks.push(pick);
    }
    let mut choice = vec![0; tables.len()];
    let mut b = budget;
    for (n, pick) in picks.iter().enumerate().rev() {
        choice[n] = pick[b];
        b -= pick[b];
    }
    (choice, best[budget])
}

fn outage_indicator(ch: &ChannelState, sp: &SystemParams, p: f64, alpha: f64) -> bool {
    let d = BlockDecision::active(p, alpha);
    bits(sinr_pr(ch, &d, sp)) <= sp.gamma
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutageOptimum {
    pub powers: Vec<f64>,
    pub capacity: f64,
    pub outage: f64,
}

/// Exact maximum of the mean tag rate on the power grid `k * p_max / steps`
/// (with `p_max = N * p_av`) under the mean-power budget and at most
/// `floor(eps_out * N)` outage blocks. Ideal energy model; silent blocks are
/// not in outage.
pub fn oracle_outage_primal(
    blocks: &[ChannelState],
    sp: &SystemParams,
    alpha_bar: f64,
    steps: usize,
) -> OutageOptimum {
    let n = blocks.len();
    let max_out = ((sp.eps_out * n as f64) + 1e-9).floor() as usize;
    let p_max = sp.p_av * n as f64;
    let h = p_max / steps as f64;
    // value[o][b]: best total rate with o outage blocks so far and spent
    // budget at most b
    let neg = f64::NEG_INFINITY;
    let mut value = vec![vec![neg; steps + 1]; max_out + 1];
    value[0] = vec![0.0; steps + 1];
    let mut picks: Vec<Vec<Vec<(usize, usize)>>> = Vec::with_capacity(n);
    for ch in blocks {
        let options: Vec<(usize, bool, f64)> = (0..=steps)
            .filter_map(|k| {
                let p = k as f64 * h;
                if k == 0 {
                    return Some((0, false, 0.0));
                }
                if harvest_margin(ch, p, alpha_bar, sp, EnergyModel::Ideal) < 0.0 {
                    return None;
                }
                let r = bits(ch.g1 * alpha_bar * ch.f * p / sp.sigma_sr_sq);
                Some((k, outage_indicator(ch, sp, p, alpha_bar), r))
            })
            .collect();
        let mut next = vec![vec![neg; steps + 1]; max_out + 1];
        let mut pick = vec![vec![(0, 0); steps + 1]; max_out + 1];
        for o in 0..=max_out {
            for b in 0..=steps {
                for &(k, x, r) in &options {
                    if k > b {
                        break;
                    }
                    let from = if x {
                        if o == 0 {
                            continue;
                        }
                        o - 1
                    } else {
                        o
                    };
                    let v = value[from][b - k] + r;
                    if v > next[o][b] {
                        next[o][b] = v;
                        pick[o][b] = (k, from);
                    }
                }
            }
        }
        value = next;
        picks.push(pick);
    }
    let (mut o, mut total) = (0, neg);
    for (oo, row) in value.iter().enumerate() {
        if row[steps] > total {
            total = row[steps];
            o = oo;
        }
    }
    let mut b = steps;
    let mut powers = vec![0.0; n];
    let mut outages = 0;
    for idx in (0..n).rev() {
        let (k, from) = picks[idx][o][b];
        powers[idx] = k as f64 * h;
        if from != o {
            outages += 1;
        }
        o = from;
        b -= k;
    }
    OutageOptimum {
        powers,
        capacity: total / n.max(1) as f64,
        outage: outages as f64 / n.max(1) as f64,
    }
}

/// Grid maximizer of `log2(1 + a p) - mu p - lambda chi(p)` over
/// `points` equally spaced powers on `[p'', p_max]`. Returns the power and
/// the objective value; ties go to the smaller power.
pub fn oracle_p6b(
    ch: &ChannelState,
    sp: &SystemParams,
    alpha_bar: f64,
    lambda: f64,
    mu: f64,
    points: usize,
    p_max: f64,
) -> (f64, f64) {
    let harvest = sp.eta_st * (1.0 - alpha_bar) * ch.f;
    let lo = if sp.eps_st == 0.0 {
        0.0
    } else {
        sp.eps_st / harvest
    };
    let objective = |p: f64| {
        let x = f64::from(u8::from(outage_indicator(ch, sp, p, alpha_bar)));
        bits(ch.g1 * alpha_bar * ch.f * p / sp.sigma_sr_sq) - mu * p - lambda * x
    };
    let mut best = (lo, objective(lo));
    let steps = points.max(2) - 1;
    for i in 1..=steps {
        let p = lo + (p_max - lo) * i as f64 / steps as f64;
        let v = objective(p);
        if v > best.1 {
            best = (p, v);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualGridOptimum {
    pub capacity: f64,
    pub lambda: f64,
    pub mu: f64,
    pub outage: f64,
    pub mean_power: f64,
}

/// For every `(lambda, mu)` on the given grids, solves each block by a grid
/// search of its Lagrangian (silence allowed) and keeps the best primal
/// point that meets both constraints. `None` when no grid point yields a
/// feasible primal.
pub fn oracle_outage_dual(
    blocks: &[ChannelState],
    sp: &SystemParams,
    alpha_bar: f64,
    lambda_grid: &[f64],
    mu_grid: &[f64],
    grid: &GridSpec,
) -> Option<DualGridOptimum> {
    let n = blocks.len().max(1) as f64;
    // per block: (p, rate, chi) at every admissible grid power
    let points: Vec<Vec<(f64, f64, f64)>> = blocks
        .iter()
        .map(|ch| {
            (1..grid.p_points)
                .map(|i| grid.p(i))
                .filter(|&p| harvest_margin(ch, p, alpha_bar, sp, EnergyModel::Ideal) >= 0.0)
                .map(|p| {
                    let r = bits(ch.g1 * alpha_bar * ch.f * p / sp.sigma_sr_sq);
                    (
                        p,
                        r,
                        f64::from(u8::from(outage_indicator(ch, sp, p, alpha_bar))),
                    )
                })
                .collect()
        })
        .collect();
    let evaluate = |lambda: f64, mu: f64| {
        let mut total = (0.0, 0.0, 0.0);
        for pts in &points {
            let mut best = (0.0, 0.0, 0.0, 0.0);
            for &(p, r, x) in pts {
                let v = r - mu * p - lambda * x;
                if v > best.3 {
                    best = (p, r, x, v);
                }
            }
            total.0 += best.0;
            total.1 += best.1;
            total.2 += best.2;
        }
        (total.0 / n, total.1 / n, total.2 / n)
    };
    let mut best: Option<DualGridOptimum> = None;
    for &lambda in lambda_grid {
        for &mu in mu_grid {
            let (power, capacity, outage) = evaluate(lambda, mu);
            if power <= sp.p_av * (1.0 + 1e-9)
                && outage <= sp.eps_out + 1e-12
                && best.is_none_or(|b| capacity > b.capacity)
            {
                best = Some(DualGridOptimum {
                    capacity,
                    lambda,
                    mu,
                    outage,
                    mean_power: power,
                });
            }
        }
    }
    best
}

/// Largest mean tag rate reachable with at most `o` outage blocks, for
/// `o = 0..=N`, with every
/// block at a grid power in `[0, p_pk]` and the tag either on (circuit
/// powered) or off.
pub fn oracle_peak_outage_frontier(
    blocks: &[ChannelState],
    sp: &SystemParams,
    alpha_bar: f64,
    points: usize,
) -> Vec<f64> {
    let n = blocks.len();
    let neg = f64::NEG_INFINITY;
    let mut frontier = vec![neg; n + 1];
    frontier[0] = 0.0;
    let steps = points.max(2) - 1;
    for ch in blocks {
        // best rate without and with outage
        let mut best = [neg, neg];
        for i in 0..=steps {
            let p = sp.p_pk * i as f64 / steps as f64;
            let off = BlockDecision::inactive(p);
            let x_off = usize::from(bits(sinr_pr(ch, &off, sp)) <= sp.gamma);
            best[x_off] = best[x_off].max(0.0);
            if harvest_margin(ch, p, alpha_bar, sp, EnergyModel::Ideal) >= 0.0 {
                let x = usize::from(outage_indicator(ch, sp, p, alpha_bar));
                let r = bits(ch.g1 * alpha_bar * ch.f * p / sp.sigma_sr_sq);
                best[x] = best[x].max(r);
            }
        }
        let mut next = vec![neg; n + 1];
        for o in 0..=n {
            if frontier[o] == neg {
                continue;
            }
            next[o] = next[o].max(frontier[o] + best[0]);
            if o < n {
                next[o + 1] = next[o + 1].max(frontier[o] + best[1]);
            }
        }
        frontier = next;
    }
    let mut running = neg;
    frontier
        .iter()
        .map(|v| {
            running = running.max(*v);
            running / n.max(1) as f64
        })
        .collect()
}
