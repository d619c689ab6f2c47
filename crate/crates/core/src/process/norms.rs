//! Weighted process norms on the lattice.
//!
//! Every quantity here is the *squared* norm, i.e. the expectation exactly as
//! it appears in the definition of the weighted spaces. The cumulative weight
//! `A(t) = ∫ a²(s) ds` uses the left-endpoint rule along each path.
//!
//! When `a²` depends only on time, `A` is the same on every path and additive
//! functionals are computed exactly by summing against the node measure.
//! Otherwise, and for every functional involving a running supremum, the
//! expectation is taken over a [`PathSet`].

use crate::error::{RbsdeError, Result};

use super::grid::TimeGrid;
use super::lattice::{LatticeProcess, NodeMeasure};
use super::paths::{Estimate, PathSet};

/// `a²` on the lattice plus whether it ignores the Brownian state.
#[derive(Debug, Clone)]
pub struct CumulativeWeight {
    a_sq: LatticeProcess,
    deterministic: bool,
}

impl CumulativeWeight {
    pub fn new(a_sq: LatticeProcess, deterministic: bool) -> Self {
        Self { a_sq, deterministic }
    }

    /// Constant `a²`, handy for tests and for the classical Lipschitz case.
    pub fn constant(grid: TimeGrid, a_sq: f64) -> Self {
        Self::new(LatticeProcess::constant(grid, a_sq), true)
    }

    pub fn grid(&self) -> &TimeGrid {
        self.a_sq.grid()
    }

    pub fn a_sq(&self) -> &LatticeProcess {
        &self.a_sq
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    /// `A(t_i)` along the path with up-counts `js`.
    pub fn along(&self, js: &[usize]) -> Vec<f64> {
        let dt = self.grid().dt();
        let mut acc = Vec::with_capacity(js.len());
        let mut a = 0.0;
        acc.push(a);
        for (i, &j) in js.iter().enumerate().take(js.len().saturating_sub(1)) {
            a += self.a_sq.get(i, j) * dt;
            acc.push(a);
        }
        acc
    }

    /// `A(t_i)` for time-only coefficients, `None` otherwise.
    pub fn deterministic_values(&self) -> Option<Vec<f64>> {
        if !self.deterministic {
            return None;
        }
        let n = self.grid().steps();
        let js = vec![0usize; n + 1];
        Some(self.along(&js))
    }

    fn check(&self, psi: &LatticeProcess) -> Result<()> {
        if psi.grid() != self.grid() {
            return Err(RbsdeError::GridMismatch);
        }
        Ok(())
    }
}

/// `E Σ_{i<N} e^{β A(t_i)} h(i, j_i) dt`.
pub fn weighted_integral(
    weight: &CumulativeWeight,
    beta: f64,
    paths: &PathSet,
    h: impl Fn(usize, usize) -> f64,
) -> Result<Estimate> {
    let grid = *weight.grid();
    paths.check_grid(&grid)?;
    let n = grid.steps();
    let dt = grid.dt();
    if let Some(a) = weight.deterministic_values() {
        let measure = NodeMeasure::new(&grid);
        let mut total = 0.0;
        for (i, a_i) in a.iter().enumerate().take(n) {
            let slice: Vec<f64> = (0..=i).map(|j| h(i, j)).collect();
            total += (beta * a_i).exp() * measure.expect_slice(i, &slice) * dt;
        }
        return Ok(Estimate::exact(total));
    }
    paths.average(|js| {
        let a = weight.along(js);
        (0..n).map(|i| (beta * a[i]).exp() * h(i, js[i]) * dt).sum()
    })
}

/// `E[e^{β A(T)} h(N, j_N)]`.
pub fn weighted_terminal(
    weight: &CumulativeWeight,
    beta: f64,
    paths: &PathSet,
    h: impl Fn(usize) -> f64,
) -> Result<Estimate> {
    let grid = *weight.grid();
    paths.check_grid(&grid)?;
    let n = grid.steps();
    if let Some(a) = weight.deterministic_values() {
        let measure = NodeMeasure::new(&grid);
        let slice: Vec<f64> = (0..=n).map(&h).collect();
        return Ok(Estimate::exact((beta * a[n]).exp() * measure.expect_slice(n, &slice)));
    }
    paths.average(|js| {
        let a = weight.along(js);
        (beta * a[n]).exp() * h(js[n])
    })
}

/// `E[sup_{0≤i≤N} e^{c A(t_i)} h(i, j_i)]`, always a path functional.
pub fn weighted_running_sup(
    weight: &CumulativeWeight,
    coef: f64,
    paths: &PathSet,
    h: impl Fn(usize, usize) -> f64,
) -> Result<Estimate> {
    let grid = *weight.grid();
    paths.check_grid(&grid)?;
    paths.average(|js| {
        let a = weight.along(js);
        js.iter().enumerate().map(|(i, &j)| (coef * a[i]).exp() * h(i, j)).fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Squared `H²(β, a)` norm: `E Σ_{i<N} e^{β A(t_i)} |ψ_i|² dt`.
pub fn weighted_h2_norm(
    psi: &LatticeProcess,
    weight: &CumulativeWeight,
    beta: f64,
    paths: &PathSet,
) -> Result<Estimate> {
    weight.check(psi)?;
    weighted_integral(weight, beta, paths, |i, j| psi.get(i, j).powi(2))
}

/// Squared `S²(β, a)` norm: `E[e^{β A(T)} sup_i |ψ_i|²]`.
pub fn weighted_s2_norm(
    psi: &LatticeProcess,
    weight: &CumulativeWeight,
    beta: f64,
    paths: &PathSet,
) -> Result<Estimate> {
    weight.check(psi)?;
    let grid = *weight.grid();
    paths.check_grid(&grid)?;
    let n = grid.steps();
    paths.average(|js| {
        let a = weight.along(js);
        let sup = js.iter().enumerate().map(|(i, &j)| psi.get(i, j).powi(2)).fold(0.0, f64::max);
        (beta * a[n]).exp() * sup
    })
}
