use serde::{Deserialize, Serialize};

use crate::error::{RbsdeError, Result};

/// Uniform partition of `[0, T]` into `N` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(RbsdeError::InvalidGrid(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(RbsdeError::InvalidGrid("steps must be at least 1".into()));
        }
        Ok(Self { horizon, steps, dt: horizon / steps as f64 })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sqrt_dt(&self) -> f64 {
        self.dt.sqrt()
    }

    /// Time of grid index `i`. The last index maps to the horizon exactly.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.dt
        }
    }

    /// Brownian value `(2j - i)·√dt` at node `(i, j)`.
    pub fn brownian(&self, i: usize, j: usize) -> f64 {
        (2.0 * j as f64 - i as f64) * self.sqrt_dt()
    }

    /// Total number of lattice nodes, `(N+1)(N+2)/2`.
    pub fn node_count(&self) -> usize {
        (self.steps + 1) * (self.steps + 2) / 2
    }
}

/// Node of the recombining lattice: time index `i`, number of up moves `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticeNode {
    pub i: usize,
    pub j: usize,
}

impl LatticeNode {
    pub const ROOT: LatticeNode = LatticeNode { i: 0, j: 0 };

    pub fn new(i: usize, j: usize) -> Self {
        debug_assert!(j <= i);
        Self { i, j }
    }

    pub fn up(self) -> Self {
        Self { i: self.i + 1, j: self.j + 1 }
    }

    pub fn down(self) -> Self {
        Self { i: self.i + 1, j: self.j }
    }

    pub fn time(self, grid: &TimeGrid) -> f64 {
        grid.time(self.i)
    }

    pub fn brownian(self, grid: &TimeGrid) -> f64 {
        grid.brownian(self.i, self.j)
    }
}

pub fn build_time_grid(horizon: f64, steps: usize) -> Result<TimeGrid> {
    TimeGrid::new(horizon, steps)
}
