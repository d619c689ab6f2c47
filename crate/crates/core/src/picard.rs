//! Fixed-point iteration of the map that freezes `(U, V)` inside the driver
//! and re-solves the reflected problem.

use std::time::Instant;

use serde::Serialize;

use crate::driver::{location, ProblemSpec};
use crate::error::{RbsdeError, Result};
use crate::process::norms::weighted_integral;
use crate::process::{CumulativeWeight, Estimate, LatticeProcess, PathSet};
use crate::snell::{solve_fixed_driver, SolutionTriple};

/// Target contraction used to pick β when the caller does not.
pub const DEFAULT_RHO: f64 = 0.5;

/// Contraction coefficient `12/β² + 6/β` of the Picard map in the β-norm.
pub fn contraction_factor(beta: f64) -> Result<f64> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(RbsdeError::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    Ok(12.0 / (beta * beta) + 6.0 / beta)
}

/// Smallest β with `contraction_factor(β) ≤ ρ`: the positive root of
/// `ρβ² − 6β − 12 = 0`.
pub fn min_beta_for_factor(rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(RbsdeError::InvalidArgument(format!("rho must lie in (0, 1], got {rho}")));
    }
    Ok((3.0 + (9.0 + 12.0 * rho).sqrt()) / rho)
}

pub fn default_beta() -> f64 {
    min_beta_for_factor(DEFAULT_RHO).expect("default rho is valid")
}

/// `g(node) = f(t, w, U(node), V(node))`.
pub fn frozen_driver(
    u: &LatticeProcess,
    v: &LatticeProcess,
    problem: &ProblemSpec,
) -> Result<LatticeProcess> {
    let grid = *problem.grid();
    if u.grid() != &grid || v.grid() != &grid {
        return Err(RbsdeError::GridMismatch);
    }
    let driver = problem.driver();
    let g = LatticeProcess::from_node_fn(grid, |i, j| {
        driver.eval(grid.time(i), grid.brownian(i, j), u.get(i, j), v.get(i, j))
    });
    if let Some(node) = g.first_non_finite() {
        return Err(RbsdeError::NonFinite { what: "driver", location: location(&grid, node.i, node.j) });
    }
    Ok(g)
}

/// One application of the Picard map.
pub fn phi_map(u: &LatticeProcess, v: &LatticeProcess, problem: &ProblemSpec) -> Result<SolutionTriple> {
    solve_fixed_driver(&frozen_driver(u, v, problem)?, problem)
}

/// `E Σ_{i<N} e^{βA(t_i)} (a² |ΔY|² + |ΔZ|²) dt` with an explicit β and weight.
pub fn beta_distance_with(
    first: (&LatticeProcess, &LatticeProcess),
    second: (&LatticeProcess, &LatticeProcess),
    weight: &CumulativeWeight,
    beta: f64,
    paths: &PathSet,
) -> Result<Estimate> {
    let grid = weight.grid();
    for p in [first.0, first.1, second.0, second.1] {
        if p.grid() != grid {
            return Err(RbsdeError::GridMismatch);
        }
    }
    let a_sq = weight.a_sq();
    weighted_integral(weight, beta, paths, |i, j| {
        let dy = first.0.get(i, j) - second.0.get(i, j);
        let dz = first.1.get(i, j) - second.1.get(i, j);
        a_sq.get(i, j) * dy * dy + dz * dz
    })
}

/// Squared β-norm of `(Y₁ − Y₂, Z₁ − Z₂)` under the problem's β and weight.
pub fn beta_distance(
    first: (&LatticeProcess, &LatticeProcess),
    second: (&LatticeProcess, &LatticeProcess),
    problem: &ProblemSpec,
    paths: &PathSet,
) -> Result<Estimate> {
    beta_distance_with(first, second, &problem.weight(), problem.beta(), paths)
}

#[derive(Debug, Clone)]
pub struct PicardConfig {
    /// Stop once the squared distance between successive iterates is at most this.
    pub tol: f64,
    pub max_iters: usize,
    /// `(U₀, V₀)`; zero processes when absent.
    pub initial: Option<(LatticeProcess, LatticeProcess)>,
    pub seed: u64,
    pub paths: usize,
    /// β used by the stopping metric only; defaults to the problem's β.
    pub metric_beta: Option<f64>,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 200, initial: None, seed: 0, paths: 10_000, metric_beta: None }
    }
}

impl PicardConfig {
    fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(RbsdeError::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(RbsdeError::InvalidArgument("max_iters must be at least 1".into()));
        }
        if self.paths == 0 {
            return Err(RbsdeError::InvalidArgument("path count must be at least 1".into()));
        }
        if let Some(b) = self.metric_beta {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(RbsdeError::InvalidArgument(format!("metric beta must be >= 0, got {b}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Squared β-distance to the previous iterate (to the initial guess for the first).
    pub distance: f64,
    /// `d_k / d_{k−1}`, defined only when `d_{k−1} > 0`.
    pub ratio: Option<f64>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_distance(&self) -> Option<f64> {
        self.records.last().map(|r| r.distance)
    }

    /// Largest ratio from iteration `from` on, skipping ratios whose
    /// denominator is below `floor`.
    pub fn max_ratio(&self, from: usize, floor: f64) -> Option<f64> {
        self.records
            .windows(2)
            .filter(|w| w[1].iteration >= from && w[0].distance > floor)
            .filter_map(|w| w[1].ratio)
            .fold(None, |m, r| Some(m.map_or(r, |m: f64| m.max(r))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PicardStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub solution: SolutionTriple,
    pub trace: IterationTrace,
    pub status: PicardStatus,
    pub warnings: Vec<String>,
}

impl PicardOutcome {
    pub fn converged(&self) -> bool {
        self.status == PicardStatus::Converged
    }

    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Iterates the Picard map with the lattice Snell solver.
pub fn picard_solve(problem: &ProblemSpec, config: &PicardConfig) -> Result<PicardOutcome> {
    picard_solve_with(problem, config, solve_fixed_driver)
}

/// Iterates `(Y_k, Z_k) = Φ(Y_{k−1}, Z_{k−1})` using `inner` to solve each
/// frozen-driver problem. Stops at the first `k ≥ 2` with `d_k ≤ tol`; the
/// first distance is measured against the initial guess, which need not be
/// an image of the map.
pub fn picard_solve_with(
    problem: &ProblemSpec,
    config: &PicardConfig,
    mut inner: impl FnMut(&LatticeProcess, &ProblemSpec) -> Result<SolutionTriple>,
) -> Result<PicardOutcome> {
    config.validate()?;
    let grid = *problem.grid();
    let mut warnings = Vec::new();
    let rho = contraction_factor(problem.beta())?;
    if rho >= 1.0 {
        warnings.push(format!(
            "beta = {} gives contraction factor {rho} >= 1; convergence is not guaranteed",
            problem.beta()
        ));
    }

    let weight = problem.weight();
    let metric_beta = config.metric_beta.unwrap_or(problem.beta());
    let paths = PathSet::auto(config.seed, config.paths, &grid)?;

    let (mut u, mut v) = match &config.initial {
        Some((u, v)) => {
            if u.grid() != &grid || v.grid() != &grid {
                return Err(RbsdeError::GridMismatch);
            }
            (u.clone(), v.clone())
        }
        None => (LatticeProcess::zeros(grid), LatticeProcess::zeros(grid)),
    };

    let start = Instant::now();
    let mut trace = IterationTrace::default();
    let mut last: Option<SolutionTriple> = None;
    let mut status = PicardStatus::MaxIterations;
    for k in 1..=config.max_iters {
        let g = frozen_driver(&u, &v, problem)?;
        let sol = inner(&g, problem)?;
        let d = beta_distance_with((&sol.y, &sol.z), (&u, &v), &weight, metric_beta, &paths)?.value;
        if !d.is_finite() {
            return Err(RbsdeError::InvalidArgument(format!("non-finite distance at iteration {k}")));
        }
        let ratio = trace.last_distance().filter(|&prev| prev > 0.0).map(|prev| d / prev);
        trace.records.push(IterationRecord {
            iteration: k,
            distance: d,
            ratio,
            wall_time_secs: start.elapsed().as_secs_f64(),
        });
        u = sol.y.clone();
        v = sol.z.clone();
        last = Some(sol);
        if k >= 2 && d <= config.tol {
            status = PicardStatus::Converged;
            break;
        }
    }
    if status == PicardStatus::MaxIterations {
        warnings.push(format!("no convergence within {} iterations", config.max_iters));
    }
    Ok(PicardOutcome { solution: last.expect("at least one iteration runs"), trace, status, warnings })
}

/// `Y_i = E[ξ | F_{t_i}]`, `Z ≡ 0`: an alternative starting point for the iteration.
pub fn propagated_terminal_guess(problem: &ProblemSpec) -> Result<(LatticeProcess, LatticeProcess)> {
    let grid = *problem.grid();
    let n = grid.steps();
    let mut y = LatticeProcess::zeros(grid);
    y.slice_mut(n).copy_from_slice(&problem.terminal_slice());
    for i in (0..n).rev() {
        let back = crate::process::conditional_expectation_into(y.slice(i + 1), i)?;
        y.slice_mut(i).copy_from_slice(&back);
    }
    Ok((y, LatticeProcess::zeros(grid)))
}
