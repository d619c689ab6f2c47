//! JSON problem description.
//!
//! ```json
//! {
//!   "grid": { "T": 1.0, "N": 200 },
//!   "beta": 20.0,
//!   "epsilon": 0.05,
//!   "driver":   { "kind": "linear", "r": 0.05, "theta": 0.0 },
//!   "terminal": { "kind": "constant", "value": 1.0 },
//!   "obstacle": { "kind": "constant", "value": -10.0 },
//!   "solver":   { "tol": 1e-12, "max_iters": 200, "seed": 7, "paths": 10000 },
//!   "compare":  { "oracle": "linear", "tolerance": 1e-3 }
//! }
//! ```
//!
//! Time functions (`r`, `theta`, polynomial coefficients) are either a number
//! or an array `[c0, c1, ...]` meaning `c0 + c1 t + ...`. Custom tables hold
//! one row per time index `i` with `i + 1` entries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::driver::{CoefficientProcess, DriverSpec, ProblemSpec};
use crate::error::{RbsdeError, Result};
use crate::oracle::AmericanPutSpec;
use crate::picard::{default_beta, PicardConfig};
use crate::process::TimeGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeFunction {
    Constant(f64),
    Polynomial(Vec<f64>),
}

impl Default for TimeFunction {
    fn default() -> Self {
        TimeFunction::Constant(0.0)
    }
}

impl TimeFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFunction::Constant(c) => *c,
            TimeFunction::Polynomial(coeffs) => coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            TimeFunction::Constant(c) => Some(*c),
            TimeFunction::Polynomial(c) if c.len() <= 1 => Some(c.first().copied().unwrap_or(0.0)),
            TimeFunction::Polynomial(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientKind {
    Constant {
        value: f64,
    },
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// `offset + scale·|w|`
    AbsBrownian {
        offset: f64,
        scale: f64,
    },
    CustomTable {
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientConfig {
    Constant(f64),
    Kind(CoefficientKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriverConfig {
    /// `f = −(r(t)·y + θ(t)·z)`; `μ = |r|`, `γ = |θ|` unless given.
    Linear {
        r: TimeFunction,
        #[serde(default)]
        theta: TimeFunction,
        #[serde(default)]
        mu: Option<CoefficientConfig>,
        #[serde(default)]
        gamma: Option<CoefficientConfig>,
    },
    /// `f = −(r0 + r1·|w|)·y`, an unbounded state-dependent rate; `μ = |r0| + |r1|·|w|`.
    StateLinear {
        r0: f64,
        r1: f64,
        #[serde(default)]
        mu: Option<CoefficientConfig>,
        #[serde(default)]
        gamma: Option<CoefficientConfig>,
    },
    Constant {
        value: f64,
        #[serde(default)]
        mu: Option<CoefficientConfig>,
        #[serde(default)]
        gamma: Option<CoefficientConfig>,
    },
    Zero {
        #[serde(default)]
        mu: Option<CoefficientConfig>,
        #[serde(default)]
        gamma: Option<CoefficientConfig>,
    },
    /// Per-node values of a driver that ignores `(y, z)`.
    CustomTable {
        values: Vec<Vec<f64>>,
        #[serde(default)]
        mu: Option<CoefficientConfig>,
        #[serde(default)]
        gamma: Option<CoefficientConfig>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionParams {
    pub spot: f64,
    pub strike: f64,
    pub rate: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TerminalConfig {
    Zero,
    Constant {
        value: f64,
    },
    /// `intercept + slope·w`
    Affine {
        intercept: f64,
        slope: f64,
    },
    Put(OptionParams),
    Call(OptionParams),
    CustomTable {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObstacleConfig {
    Zero,
    Constant {
        value: f64,
    },
    /// Polynomial in `t`.
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// `intercept + slope_w·w + slope_t·t`
    Affine {
        intercept: f64,
        #[serde(default)]
        slope_w: f64,
        #[serde(default)]
        slope_t: f64,
    },
    Put(OptionParams),
    Call(OptionParams),
    CustomTable {
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub probe_count: Option<usize>,
    pub probe_box: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    CrrPut,
    Linear,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub oracle: OracleKind,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub beta: Option<f64>,
    pub epsilon: f64,
    pub driver: DriverConfig,
    pub terminal: TerminalConfig,
    pub obstacle: ObstacleConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
}

/// Maps `(t, w)` back to `(i, j)` on a grid, for table-backed evaluators.
#[derive(Debug, Clone, Copy)]
struct NodeIndexer {
    grid: TimeGrid,
}

impl NodeIndexer {
    fn index(&self, t: f64, w: f64) -> (usize, usize) {
        let n = self.grid.steps();
        let i = ((t / self.grid.dt()).round().max(0.0) as usize).min(n);
        let j = (((w / self.grid.sqrt_dt() + i as f64) / 2.0).round().max(0.0) as usize).min(i);
        (i, j)
    }
}

fn check_table(values: &[Vec<f64>], grid: &TimeGrid, what: &str) -> Result<()> {
    if values.len() != grid.steps() + 1 || values.iter().enumerate().any(|(i, row)| row.len() != i + 1) {
        return Err(RbsdeError::Config(format!(
            "{what}: custom table must have {} rows with i + 1 entries in row i",
            grid.steps() + 1
        )));
    }
    Ok(())
}

fn table_fn(values: &[Vec<f64>], grid: TimeGrid) -> impl Fn(f64, f64) -> f64 + Send + Sync + 'static {
    let values = values.to_vec();
    let idx = NodeIndexer { grid };
    move |t, w| {
        let (i, j) = idx.index(t, w);
        values[i][j]
    }
}

impl CoefficientConfig {
    fn build(&self, grid: TimeGrid, what: &str) -> Result<CoefficientProcess> {
        Ok(match self {
            CoefficientConfig::Constant(v)
            | CoefficientConfig::Kind(CoefficientKind::Constant { value: v }) => {
                CoefficientProcess::constant(*v)
            }
            CoefficientConfig::Kind(CoefficientKind::Polynomial { coeffs }) => {
                let p = TimeFunction::Polynomial(coeffs.clone());
                CoefficientProcess::of_time(move |t| p.eval(t))
            }
            CoefficientConfig::Kind(CoefficientKind::AbsBrownian { offset, scale }) => {
                let (o, s) = (*offset, *scale);
                CoefficientProcess::of_state(move |_, w| o + s * w.abs())
            }
            CoefficientConfig::Kind(CoefficientKind::CustomTable { values }) => {
                check_table(values, &grid, what)?;
                CoefficientProcess::of_state(table_fn(values, grid))
            }
        })
    }
}

fn coefficient_or(
    c: &Option<CoefficientConfig>,
    grid: TimeGrid,
    what: &str,
    default: impl FnOnce() -> CoefficientProcess,
) -> Result<CoefficientProcess> {
    match c {
        Some(c) => c.build(grid, what),
        None => Ok(default()),
    }
}

impl DriverConfig {
    fn build(&self, grid: TimeGrid, epsilon: f64) -> Result<DriverSpec> {
        // Drivers that ignore (y, z) are Lipschitz with any μ ≥ 0; μ = ε makes a² = ε.
        let fixed_mu = || CoefficientProcess::constant(epsilon);
        let zero = || CoefficientProcess::constant(0.0);
        Ok(match self {
            DriverConfig::Linear { r, theta, mu, gamma } => {
                let (r1, t1) = (r.clone(), theta.clone());
                let (r2, t2) = (r.clone(), theta.clone());
                let mu = coefficient_or(mu, grid, "driver.mu", || {
                    CoefficientProcess::of_time(move |t| r2.eval(t).abs())
                })?;
                let gamma = coefficient_or(gamma, grid, "driver.gamma", || {
                    CoefficientProcess::of_time(move |t| t2.eval(t).abs())
                })?;
                DriverSpec::new(move |t, _, y, z| -(r1.eval(t) * y + t1.eval(t) * z), mu, gamma, epsilon)
            }
            DriverConfig::StateLinear { r0, r1, mu, gamma } => {
                let (a, b) = (*r0, *r1);
                let mu = coefficient_or(mu, grid, "driver.mu", || {
                    if b == 0.0 {
                        CoefficientProcess::constant(a.abs())
                    } else {
                        CoefficientProcess::of_state(move |_, w| a.abs() + b.abs() * w.abs())
                    }
                })?;
                let gamma = coefficient_or(gamma, grid, "driver.gamma", zero)?;
                DriverSpec::new(move |_, w, y, _| -(a + b * w.abs()) * y, mu, gamma, epsilon)
            }
            DriverConfig::Constant { value, mu, gamma } => {
                let v = *value;
                DriverSpec::fixed(
                    move |_, _| v,
                    coefficient_or(mu, grid, "driver.mu", fixed_mu)?,
                    coefficient_or(gamma, grid, "driver.gamma", zero)?,
                    epsilon,
                )
            }
            DriverConfig::Zero { mu, gamma } => DriverSpec::fixed(
                |_, _| 0.0,
                coefficient_or(mu, grid, "driver.mu", fixed_mu)?,
                coefficient_or(gamma, grid, "driver.gamma", zero)?,
                epsilon,
            ),
            DriverConfig::CustomTable { values, mu, gamma } => {
                check_table(values, &grid, "driver")?;
                DriverSpec::fixed(
                    table_fn(values, grid),
                    coefficient_or(mu, grid, "driver.mu", fixed_mu)?,
                    coefficient_or(gamma, grid, "driver.gamma", zero)?,
                    epsilon,
                )
            }
        })
    }
}

fn option_spec(p: &OptionParams, grid: &TimeGrid) -> AmericanPutSpec {
    AmericanPutSpec {
        spot: p.spot,
        strike: p.strike,
        rate: p.rate,
        sigma: p.sigma,
        maturity: grid.horizon(),
        steps: grid.steps(),
    }
}

fn call_payoff(spec: &AmericanPutSpec, t: f64, w: f64) -> f64 {
    (spec.underlying(t, w) - spec.strike).max(0.0)
}

type Terminal = Box<dyn Fn(f64) -> f64 + Send + Sync>;
type Obstacle = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

impl TerminalConfig {
    fn build(&self, grid: TimeGrid) -> Result<Terminal> {
        let horizon = grid.horizon();
        Ok(match self {
            TerminalConfig::Zero => Box::new(|_| 0.0),
            TerminalConfig::Constant { value } => {
                let v = *value;
                Box::new(move |_| v)
            }
            TerminalConfig::Affine { intercept, slope } => {
                let (a, b) = (*intercept, *slope);
                Box::new(move |w| a + b * w)
            }
            TerminalConfig::Put(p) => {
                let spec = option_spec(p, &grid);
                spec.validate()?;
                Box::new(move |w| spec.payoff(horizon, w))
            }
            TerminalConfig::Call(p) => {
                let spec = option_spec(p, &grid);
                spec.validate()?;
                Box::new(move |w| call_payoff(&spec, horizon, w))
            }
            TerminalConfig::CustomTable { values } => {
                if values.len() != grid.steps() + 1 {
                    return Err(RbsdeError::Config(format!(
                        "terminal: custom table must have {} entries",
                        grid.steps() + 1
                    )));
                }
                let values = values.clone();
                let idx = NodeIndexer { grid };
                Box::new(move |w| values[idx.index(horizon, w).1])
            }
        })
    }
}

impl ObstacleConfig {
    fn build(&self, grid: TimeGrid) -> Result<Obstacle> {
        Ok(match self {
            ObstacleConfig::Zero => Box::new(|_, _| 0.0),
            ObstacleConfig::Constant { value } => {
                let v = *value;
                Box::new(move |_, _| v)
            }
            ObstacleConfig::Polynomial { coeffs } => {
                let p = TimeFunction::Polynomial(coeffs.clone());
                Box::new(move |t, _| p.eval(t))
            }
            ObstacleConfig::Affine { intercept, slope_w, slope_t } => {
                let (a, b, c) = (*intercept, *slope_w, *slope_t);
                Box::new(move |t, w| a + b * w + c * t)
            }
            ObstacleConfig::Put(p) => {
                let spec = option_spec(p, &grid);
                spec.validate()?;
                Box::new(move |t, w| spec.payoff(t, w))
            }
            ObstacleConfig::Call(p) => {
                let spec = option_spec(p, &grid);
                spec.validate()?;
                Box::new(move |t, w| call_payoff(&spec, t, w))
            }
            ObstacleConfig::CustomTable { values } => {
                check_table(values, &grid, "obstacle")?;
                Box::new(table_fn(values, grid))
            }
        })
    }
}

impl ProblemConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.horizon, self.grid.steps)
    }

    /// β from the file, or the smallest β with contraction factor 1/2.
    pub fn beta_or_default(&self) -> f64 {
        self.beta.unwrap_or_else(default_beta)
    }

    pub fn to_problem(&self) -> Result<ProblemSpec> {
        let grid = self.grid()?;
        let driver = self.driver.build(grid, self.epsilon)?;
        let terminal = self.terminal.build(grid)?;
        let obstacle = self.obstacle.build(grid)?;
        ProblemSpec::new(grid, driver, terminal, obstacle, self.beta_or_default())
    }

    /// Picard settings from the `solver` block, library defaults elsewhere.
    pub fn picard_config(&self) -> PicardConfig {
        let d = PicardConfig::default();
        PicardConfig {
            tol: self.solver.tol.unwrap_or(d.tol),
            max_iters: self.solver.max_iters.unwrap_or(d.max_iters),
            seed: self.solver.seed.unwrap_or(d.seed),
            paths: self.solver.paths.unwrap_or(d.paths),
            ..d
        }
    }

    /// Put parameters when both the terminal value and obstacle are the same put payoff.
    pub fn american_put(&self) -> Option<AmericanPutSpec> {
        match (&self.terminal, &self.obstacle) {
            (TerminalConfig::Put(a), ObstacleConfig::Put(b)) if a == b => Some(AmericanPutSpec {
                spot: a.spot,
                strike: a.strike,
                rate: a.rate,
                sigma: a.sigma,
                maturity: self.grid.horizon,
                steps: self.grid.steps,
            }),
            _ => None,
        }
    }
}
