//! Root finding and dual-variable search shared by the solvers.

use serde::{Deserialize, Serialize};

use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisectionConfig {
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            max_iter: 200,
        }
    }
}

impl BisectionConfig {
    /// Bisect until the bracket can no longer be split in floating point.
    pub fn exhaustive() -> Self {
        Self {
            abs_tol: 0.0,
            max_iter: 2_100,
        }
    }
}

/// Lagrange multipliers of the outage (`lambda`) and average-power (`mu`)
/// constraints. Single-constraint searches use `lambda` only.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
    pub mu: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Shrinks `[lo, hi]` around a sign change of `f`.
///
/// The returned bracket keeps the sign of `f(lo)` at its left end and the
/// sign of `f(hi)` at its right end, which lets callers pick the side that
/// satisfies an inequality. A bracket of zero width means an exact root.
pub fn bracket_root<F>(f: F, lo: f64, hi: f64, cfg: &BisectionConfig) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok((a, a));
    }
    if fb == 0.0 {
        return Ok((b, b));
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::NoSignChange {
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let left_positive = fa > 0.0;
    for _ in 0..cfg.max_iter {
        if b - a <= cfg.abs_tol {
            return Ok((a, b));
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return Ok((a, b));
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok((mid, mid));
        }
        if (fm > 0.0) == left_positive {
            a = mid;
        } else {
            b = mid;
        }
    }
    if b - a <= cfg.abs_tol {
        return Ok((a, b));
    }
    Err(Error::NonConvergence {
        context: "bisection",
        iterations: cfg.max_iter,
        residual: b - a,
    })
}

/// Root of `f` on `[lo, hi]`; the midpoint of the final bracket.
pub fn bisect<F>(f: F, lo: f64, hi: f64, cfg: &BisectionConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (a, b) = bracket_root(f, lo, hi, cfg)?;
    Ok(0.5 * (a + b))
}

/// Final state of a multiplier search on a mean-power budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaBracket {
    /// Largest multiplier found whose mean power still exceeds the budget
    /// (zero when the lower end was never probed).
    pub lo: f64,
    /// Smallest multiplier found whose mean power fits the budget.
    pub hi: f64,
    pub mean_at_hi: f64,
    pub dual: DualState,
}

/// Searches a multiplier `x >= 0` for a quantity `mean(x)` that is
/// nonincreasing in `x`, so that `mean(x) <= budget`. The returned bracket's
/// `hi` side always satisfies the budget. `cfg.abs_tol` is relative to `hi`.
pub fn bracket_multiplier<M>(mean: M, budget: f64, cfg: &BisectionConfig) -> Result<LambdaBracket>
where
    M: Fn(f64) -> f64,
{
    let slack = |m: f64| LambdaBracket {
        lo: 0.0,
        hi: 0.0,
        mean_at_hi: m,
        dual: DualState {
            converged: true,
            ..DualState::default()
        },
    };
    if budget.is_infinite() {
        return Ok(slack(mean(0.0)));
    }
    let unconstrained = mean(0.0);
    if unconstrained.is_finite() && unconstrained <= budget {
        return Ok(slack(unconstrained));
    }

    let mut iterations = 0;
    let mut hi = 1.0;
    let mut mean_hi = mean(hi);
    let mut lo;
    if mean_hi > budget {
        loop {
            iterations += 1;
            if iterations > cfg.max_iter {
                return Err(Error::NonConvergence {
                    context: "multiplier bracketing",
                    iterations,
                    residual: mean_hi - budget,
                });
            }
            lo = hi;
            hi *= 2.0;
            mean_hi = mean(hi);
            if mean_hi <= budget {
                break;
            }
        }
    } else {
        loop {
            iterations += 1;
            let candidate = 0.5 * hi;
            if iterations > cfg.max_iter || candidate == 0.0 {
                // The budget holds for every positive multiplier we can
                // represent; report the smallest one tried.
                return Ok(LambdaBracket {
                    lo: 0.0,
                    hi,
                    mean_at_hi: mean_hi,
                    dual: DualState {
                        lambda: hi,
                        iterations,
                        converged: true,
                        ..DualState::default()
                    },
                });
            }
            let m = mean(candidate);
            if m > budget {
                lo = candidate;
                break;
            }
            hi = candidate;
            mean_hi = m;
        }
    }

    for _ in 0..cfg.max_iter {
        if hi - lo <= cfg.abs_tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let m = mean(mid);
        if m > budget {
            lo = mid;
        } else {
            hi = mid;
            mean_hi = m;
        }
    }
    Ok(LambdaBracket {
        lo,
        hi,
        mean_at_hi: mean_hi,
        dual: DualState {
            lambda: hi,
            mu: 0.0,
            iterations,
            converged: (budget - mean_hi) <= 1e-3 * budget,
        },
    })
}

/// [`bracket_multiplier`] for the empirical mean of a per-block policy.
pub fn bracket_lambda_average_power<B, F>(
    policy: F,
    blocks: &[B],
    p_av: f64,
    cfg: &BisectionConfig,
) -> Result<LambdaBracket>
where
    B: Sync,
    F: Fn(f64, &B) -> f64 + Sync + Send,
{
    bracket_multiplier(
        |lambda| par::mean_by(blocks, |_, b| policy(lambda, b)),
        p_av,
        cfg,
    )
}

/// Multiplier `lambda*` of the average-power constraint `E[p] <= p_av`.
///
/// Returns zero when the budget is slack; otherwise the smallest multiplier
/// at which the mean power fits the budget. `converged` is false when the
/// policy jumps across the budget and no multiplier meets it within 1e-3
/// relative.
pub fn solve_lambda_average_power<B, F>(
    policy: F,
    blocks: &[B],
    p_av: f64,
    cfg: &BisectionConfig,
) -> Result<DualState>
where
    B: Sync,
    F: Fn(f64, &B) -> f64 + Sync + Send,
{
    bracket_lambda_average_power(policy, blocks, p_av, cfg).map(|b| b.dual)
}

/// Gaps returned by a dual objective evaluation: `E[chi] - eps` and
/// `E[p] - p_av` of the Lagrangian-optimal primal at the evaluated point,
/// plus the dual function value there (NaN when not tracked).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualResponse {
    pub outage_gap: f64,
    pub power_gap: f64,
    pub value: f64,
}

impl DualResponse {
    pub fn gaps(outage_gap: f64, power_gap: f64) -> Self {
        Self {
            outage_gap,
            power_gap,
            value: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgradientConfig {
    pub steps: usize,
    /// Bound on `|lambda * outage_gap|` and `|mu * power_gap|`.
    pub residual_tol: f64,
    /// Allowed positive constraint violation.
    pub feasibility_tol: f64,
}

impl Default for SubgradientConfig {
    fn default() -> Self {
        Self {
            steps: 5_000,
            residual_tol: 1e-3,
            feasibility_tol: 1e-3,
        }
    }
}

/// Default step schedule `1 / sqrt(k)`, `k >= 1`.
pub fn inverse_sqrt_step(k: usize) -> f64 {
    1.0 / (k.max(1) as f64).sqrt()
}

fn residual(multiplier: f64, gap: f64) -> f64 {
    if multiplier == 0.0 {
        0.0
    } else {
        (multiplier * gap).abs()
    }
}

/// Outcome of a subgradient run that did not necessarily converge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgradientTrace {
    /// Final iterate, or the first one meeting every tolerance.
    pub last: DualState,
    /// Iterate with the lowest dual value seen (equal to `last` when values
    /// are not tracked).
    pub best: DualState,
    pub best_value: f64,
    /// Largest of the residuals and violations at `last`.
    pub residual: f64,
}

/// Projected subgradient descent on the dual of a problem with an outage and
/// an average-power constraint, keeping the whole trace summary.
///
/// Each step moves `(lambda, mu)` along the constraint gaps and projects onto
/// the nonnegative orthant. Stops at the first iterate whose complementary
/// slackness residuals and constraint violations are all within tolerance.
pub fn subgradient_2d_trace<O, S>(
    mut objective: O,
    init: DualState,
    step_schedule: S,
    cfg: &SubgradientConfig,
) -> SubgradientTrace
where
    O: FnMut(f64, f64) -> DualResponse,
    S: Fn(usize) -> f64,
{
    let mut lambda = init.lambda.max(0.0);
    let mut mu = init.mu.max(0.0);
    let mut worst = f64::INFINITY;
    let mut best = DualState {
        lambda,
        mu,
        ..DualState::default()
    };
    let mut best_value = f64::INFINITY;
    let mut last = best;
    for k in 1..=cfg.steps {
        let r = objective(lambda, mu);
        if r.value < best_value {
            best_value = r.value;
            best = DualState {
                lambda,
                mu,
                iterations: k,
                converged: false,
            };
        }
        let cs = residual(lambda, r.outage_gap).max(residual(mu, r.power_gap));
        let violation = r.outage_gap.max(r.power_gap).max(0.0);
        worst = cs.max(violation);
        last = DualState {
            lambda,
            mu,
            iterations: k,
            converged: cs <= cfg.residual_tol && violation <= cfg.feasibility_tol,
        };
        if last.converged {
            break;
        }
        let step = step_schedule(k);
        lambda = (lambda + step * r.outage_gap).max(0.0);
        mu = (mu + step * r.power_gap).max(0.0);
        if lambda.is_nan() {
            lambda = 0.0;
        }
        if mu.is_nan() {
            mu = 0.0;
        }
    }
    if best_value == f64::INFINITY {
        best = last;
    }
    SubgradientTrace {
        last,
        best,
        best_value,
        residual: worst,
    }
}

/// [`subgradient_2d_trace`] that fails unless the tolerances are met.
pub fn subgradient_2d<O, S>(
    objective: O,
    init: DualState,
    step_schedule: S,
    cfg: &SubgradientConfig,
) -> Result<DualState>
where
    O: FnMut(f64, f64) -> DualResponse,
    S: Fn(usize) -> f64,
{
    let t = subgradient_2d_trace(objective, init, step_schedule, cfg);
    if t.last.converged {
        Ok(t.last)
    } else {
        Err(Error::NonConvergence {
            context: "subgradient_2d",
            iterations: t.last.iterations,
            residual: t.residual,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSearchConfig {
    pub grid_points: usize,
    pub alpha_max: f64,
}

impl Default for AlphaSearchConfig {
    fn default() -> Self {
        Self {
            grid_points: 1001,
            alpha_max: 1.0 - 1e-9,
        }
    }
}

impl AlphaSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 2 {
            return Err(Error::InvalidParameter {
                name: "grid_points",
                value: self.grid_points as f64,
                reason: "need at least two grid points",
            });
        }
        if !(self.alpha_max > 0.0 && self.alpha_max <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "alpha_max",
                value: self.alpha_max,
                reason: "must lie in (0, 1]",
            });
        }
        Ok(())
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.grid_points {
            self.alpha_max
        } else {
            self.alpha_max * i as f64 / (self.grid_points - 1) as f64
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.grid_points).map(move |i| self.point(i))
    }
}

/// Index and value of the first maximum; NaN counts as `-inf`.
pub fn first_argmax(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

/// Grid search of `evaluate` over `[0, alpha_max]`; ties go to the smaller α.
pub fn alpha_grid_search<F>(evaluate: F, cfg: &AlphaSearchConfig) -> (f64, f64)
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    let values = par::map_range(cfg.grid_points, |i| evaluate(cfg.point(i)));
    let (i, v) = first_argmax(&values).unwrap_or((0, f64::NEG_INFINITY));
    (cfg.point(i), v)
}
