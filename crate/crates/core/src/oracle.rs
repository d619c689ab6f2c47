//! Reference values used to check the solver: closed-form discounting for
//! the linear driver, a Cox–Ross–Rubinstein American put, and the path-tree
//! brute force (re-exported from [`crate::snell`]).
//!
//! The CRR pricer below deliberately shares no code with the lattice solver.

use serde::{Deserialize, Serialize};

use crate::driver::{CoefficientProcess, DriverSpec, ProblemSpec};
use crate::error::{RbsdeError, Result};
use crate::process::TimeGrid;

pub use crate::snell::{brute_force_reference, MAX_BRUTE_FORCE_STEPS};

/// `exp(−Σ_{i<N} r(t_i) dt) · E[ξ]`, the root value of the linear BSDE with
/// zero risk premium under left-endpoint quadrature.
pub fn linear_bsde_value(r: impl Fn(f64) -> f64, xi_mean: f64, grid: &TimeGrid) -> f64 {
    let dt = grid.dt();
    let integral: f64 = (0..grid.steps()).map(|i| r(grid.time(i)) * dt).sum();
    (-integral).exp() * xi_mean
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmericanPutSpec {
    pub spot: f64,
    pub strike: f64,
    pub rate: f64,
    pub sigma: f64,
    pub maturity: f64,
    pub steps: usize,
}

impl AmericanPutSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.spot, self.strike, self.sigma, self.maturity];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || !(self.rate.is_finite() && self.rate >= 0.0)
            || self.steps == 0
        {
            return Err(RbsdeError::InvalidArgument(format!(
                "american put needs positive spot, strike, sigma, maturity, rate >= 0 and steps >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// Underlying price `S0·exp((r − σ²/2)t + σw)` at Brownian value `w`.
    pub fn underlying(&self, t: f64, w: f64) -> f64 {
        self.spot * ((self.rate - 0.5 * self.sigma * self.sigma) * t + self.sigma * w).exp()
    }

    pub fn payoff(&self, t: f64, w: f64) -> f64 {
        (self.strike - self.underlying(t, w)).max(0.0)
    }
}

fn crr(spec: &AmericanPutSpec, early_exercise: bool) -> Result<f64> {
    let n = spec.steps;
    let dt = spec.maturity / n as f64;
    let u = (spec.sigma * dt.sqrt()).exp();
    let d = 1.0 / u;
    let growth = (spec.rate * dt).exp();
    let q = (growth - d) / (u - d);
    if !(0.0..=1.0).contains(&q) {
        return Err(RbsdeError::InvalidRiskNeutralProbability { q });
    }
    let discount = 1.0 / growth;
    let price_at = |i: usize, k: usize| spec.spot * u.powi(k as i32) * d.powi((i - k) as i32);

    let mut values: Vec<f64> = (0..=n).map(|k| (spec.strike - price_at(n, k)).max(0.0)).collect();
    for i in (0..n).rev() {
        for k in 0..=i {
            let hold = discount * (q * values[k + 1] + (1.0 - q) * values[k]);
            values[k] = if early_exercise { hold.max(spec.strike - price_at(i, k)) } else { hold };
        }
        values.truncate(i + 1);
    }
    Ok(values[0])
}

/// CRR binomial American put with early exercise.
pub fn crr_american_put(spec: &AmericanPutSpec) -> Result<f64> {
    spec.validate()?;
    crr(spec, true)
}

/// Same tree with the exercise decision removed.
pub fn crr_european_put(spec: &AmericanPutSpec) -> Result<f64> {
    spec.validate()?;
    crr(spec, false)
}

/// The American put as a reflected problem: `f = −r·y` (`μ ≡ r`, `γ ≡ 0`,
/// `ε = r`), obstacle and terminal value both the put payoff on the
/// risk-neutral state map.
pub fn rbsde_american_put_problem(spec: &AmericanPutSpec, beta: f64) -> Result<ProblemSpec> {
    spec.validate()?;
    if spec.rate <= 0.0 {
        return Err(RbsdeError::InvalidArgument(
            "the reflected formulation needs rate > 0 so that a^2 = r is bounded below".into(),
        ));
    }
    let grid = TimeGrid::new(spec.maturity, spec.steps)?;
    let r = spec.rate;
    let driver = DriverSpec::new(
        move |_, _, y, _| -r * y,
        CoefficientProcess::constant(r),
        CoefficientProcess::constant(0.0),
        r,
    );
    let (s_terminal, s_obstacle) = (*spec, *spec);
    let horizon = spec.maturity;
    ProblemSpec::new(
        grid,
        driver,
        move |w| s_terminal.payoff(horizon, w),
        move |t, w| s_obstacle.payoff(t, w),
        beta,
    )
}
