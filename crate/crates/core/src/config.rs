//! Flat TOML run configuration.
//!
//! Every key sits at the top level. Run keys:
//!
//! | key             | default                       |
//! |-----------------|-------------------------------|
//! | `problem`       | `"p1"`                        |
//! | `seed`          | none (required by `sweep`)    |
//! | `n`             | 10000                         |
//! | `x_axis`        | first axis of the problem     |
//! | `x_values`      | a default grid for the axis   |
//! | `out`           | none                          |
//! | `oracle_check`  | false                         |
//! | `alpha_points`  | 1001                          |
//! | `alpha_max`     | `1 - 1e-9`                    |
//! | `method`        | `"auto"`                      |
//! | `record_timing` | false                         |
//!
//! All other keys are [`SystemParams`] fields (`sigma_pr_sq`, `sigma_sr_sq`,
//! `eta_st`, `eps_st`, `eps_b`, `u`, `gamma`, `p_pk`, `p_av`, `eps_out`).
//! Unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::allocation::Method;
use crate::experiments::{
    FadingSpec, Problem, SolveOptions, SweepSpec, XAxis, FIGURE_BUDGETS, FIGURE_OUTAGES,
};
use crate::numerics::AlphaSearchConfig;
use crate::{Error, Result, SystemParams};

pub const DEFAULT_N: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunKeys {
    problem: Problem,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    x_axis: Option<XAxis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x_values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    oracle_check: bool,
    alpha_points: usize,
    alpha_max: f64,
    method: Method,
    record_timing: bool,
}

impl Default for RunKeys {
    fn default() -> Self {
        let alpha = AlphaSearchConfig::default();
        Self {
            problem: Problem::P1,
            seed: None,
            n: DEFAULT_N,
            x_axis: None,
            x_values: None,
            out: None,
            oracle_check: false,
            alpha_points: alpha.grid_points,
            alpha_max: alpha.alpha_max,
            method: Method::Auto,
            record_timing: false,
        }
    }
}

const RUN_KEYS: [&str; 11] = [
    "problem",
    "seed",
    "n",
    "x_axis",
    "x_values",
    "out",
    "oracle_check",
    "alpha_points",
    "alpha_max",
    "method",
    "record_timing",
];

/// A validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: Problem,
    pub seed: Option<u64>,
    pub n: usize,
    /// Problem, axis, points and system parameters.
    pub sweep: SweepSpec,
    pub options: SolveOptions,
    pub out: Option<PathBuf>,
    pub oracle_check: bool,
    pub record_timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn params(&self) -> &SystemParams {
        &self.sweep.params
    }

    /// Fading sample of this run. Fails without a seed.
    pub fn fading(&self) -> Result<FadingSpec> {
        let seed = self.seed.ok_or_else(|| {
            Error::Config("`seed` is required (set it in the config or pass --seed)".into())
        })?;
        Ok(FadingSpec::rayleigh(self.n, seed))
    }

    /// Re-targets the run at another problem, resetting the axis and points
    /// when they do not fit it.
    pub fn set_problem(&mut self, problem: Problem) {
        self.problem = problem;
        self.sweep.problem = problem;
        if !problem.axes().contains(&self.sweep.x_axis) {
            self.sweep.x_axis = problem.axes()[0];
            self.sweep.x_values = default_x_values(self.sweep.x_axis);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("`n` must be positive".into()));
        }
        self.options
            .alpha
            .validate()
            .map_err(|e| Error::Config(format!("alpha grid: {e}")))?;
        self.sweep
            .params
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.sweep.validate()
    }

    /// Flat TOML that parses back to `self`.
    pub fn to_toml(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Flat<'a> {
            #[serde(flatten)]
            run: RunKeys,
            #[serde(flatten)]
            params: &'a SystemParams,
        }
        let run = RunKeys {
            problem: self.problem,
            seed: self.seed,
            n: self.n,
            x_axis: Some(self.sweep.x_axis),
            x_values: Some(self.sweep.x_values.clone()),
            out: self.out.clone(),
            oracle_check: self.oracle_check,
            alpha_points: self.options.alpha.grid_points,
            alpha_max: self.options.alpha.alpha_max,
            method: self.options.method,
            record_timing: self.record_timing,
        };
        toml::to_string(&Flat {
            run,
            params: &self.sweep.params,
        })
        .map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn default_x_values(axis: XAxis) -> Vec<f64> {
    match axis {
        XAxis::PPk | XAxis::PAv => FIGURE_BUDGETS.to_vec(),
        XAxis::EpsOut => FIGURE_OUTAGES.to_vec(),
    }
}

/// Parses and validates a flat TOML document; missing keys take their
/// defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let (run, params): (toml::Table, toml::Table) = table
        .into_iter()
        .partition(|(k, _)| RUN_KEYS.contains(&k.as_str()));
    let run: RunKeys = run
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let params: SystemParams = params
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let x_axis = run.x_axis.unwrap_or(run.problem.axes()[0]);
    let cfg = RunConfig {
        problem: run.problem,
        seed: run.seed,
        n: run.n,
        sweep: SweepSpec {
            problem: run.problem,
            x_axis,
            x_values: run.x_values.unwrap_or_else(|| default_x_values(x_axis)),
            params,
        },
        options: SolveOptions {
            alpha: AlphaSearchConfig {
                grid_points: run.alpha_points,
                alpha_max: run.alpha_max,
            },
            method: run.method,
        },
        out: run.out,
        oracle_check: run.oracle_check,
        record_timing: run.record_timing,
    };
    cfg.validate()?;
    Ok(cfg)
}
