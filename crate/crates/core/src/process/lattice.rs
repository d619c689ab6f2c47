use crate::error::{RbsdeError, Result};

use super::grid::{LatticeNode, TimeGrid};

/// An adapted real process stored on the recombining binomial lattice.
///
/// Slice `i` holds `i + 1` values indexed by the up-move count `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeProcess {
    grid: TimeGrid,
    slices: Vec<Vec<f64>>,
}

impl LatticeProcess {
    pub fn constant(grid: TimeGrid, value: f64) -> Self {
        let slices = (0..=grid.steps()).map(|i| vec![value; i + 1]).collect();
        Self { grid, slices }
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Builds a process by evaluating `f(t, w)` at every node.
    pub fn from_fn(grid: TimeGrid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        Self::from_node_fn(grid, |i, j| f(grid.time(i), grid.brownian(i, j)))
    }

    pub fn from_node_fn(grid: TimeGrid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let slices = (0..=grid.steps()).map(|i| (0..=i).map(|j| f(i, j)).collect()).collect();
        Self { grid, slices }
    }

    pub fn from_slices(grid: TimeGrid, slices: Vec<Vec<f64>>) -> Result<Self> {
        if slices.len() != grid.steps() + 1 {
            return Err(RbsdeError::LengthMismatch { expected: grid.steps() + 1, actual: slices.len() });
        }
        for (i, s) in slices.iter().enumerate() {
            if s.len() != i + 1 {
                return Err(RbsdeError::LengthMismatch { expected: i + 1, actual: s.len() });
            }
        }
        Ok(Self { grid, slices })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        &self.slices[i]
    }

    pub fn slice_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.slices[i]
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    pub fn at(&self, node: LatticeNode) -> f64 {
        self.slices[node.i][node.j]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slices[i][j]
    }

    pub fn root(&self) -> f64 {
        self.slices[0][0]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.slices[i][j] = value;
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            slices: self.slices.iter().map(|s| s.iter().map(|&v| f(v)).collect()).collect(),
        }
    }

    /// Pointwise combination of two processes on the same grid.
    pub fn zip_with(&self, other: &Self, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(RbsdeError::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            slices: self
                .slices
                .iter()
                .zip(&other.slices)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
        })
    }

    pub fn nodes(&self) -> impl Iterator<Item = (LatticeNode, f64)> + '_ {
        self.slices
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().enumerate().map(move |(j, &v)| (LatticeNode::new(i, j), v)))
    }

    /// First node holding a NaN or infinite value.
    pub fn first_non_finite(&self) -> Option<LatticeNode> {
        self.nodes().find(|(_, v)| !v.is_finite()).map(|(n, _)| n)
    }

    pub fn max_abs(&self) -> f64 {
        self.nodes().fold(0.0, |m, (_, v)| m.max(v.abs()))
    }

    /// Largest pointwise gap to another process on the same grid.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(RbsdeError::GridMismatch);
        }
        Ok(self.nodes().zip(other.nodes()).fold(0.0, |m, ((_, a), (_, b))| m.max((a - b).abs())))
    }
}

/// One backward step of `E[· | F_{t_i}]` under fair up/down moves.
pub fn conditional_expectation_step(next_slice: &[f64]) -> Result<Vec<f64>> {
    if next_slice.len() < 2 {
        return Err(RbsdeError::LengthMismatch { expected: 2, actual: next_slice.len() });
    }
    Ok(next_slice.windows(2).map(|pair| 0.5 * pair[1] + 0.5 * pair[0]).collect())
}

/// Same as [`conditional_expectation_step`], checked against the target slice index.
pub fn conditional_expectation_into(next_slice: &[f64], target_index: usize) -> Result<Vec<f64>> {
    if next_slice.len() != target_index + 2 {
        return Err(RbsdeError::LengthMismatch { expected: target_index + 2, actual: next_slice.len() });
    }
    conditional_expectation_step(next_slice)
}

/// Node probabilities `C(i, j) / 2^i` for every slice, built by the Pascal recursion
/// so large `N` never overflows.
#[derive(Debug, Clone)]
pub struct NodeMeasure {
    probs: Vec<Vec<f64>>,
}

impl NodeMeasure {
    pub fn new(grid: &TimeGrid) -> Self {
        let mut probs: Vec<Vec<f64>> = Vec::with_capacity(grid.steps() + 1);
        probs.push(vec![1.0]);
        for i in 1..=grid.steps() {
            let prev = &probs[i - 1];
            let mut next = vec![0.0; i + 1];
            for (j, &p) in prev.iter().enumerate() {
                next[j] += 0.5 * p;
                next[j + 1] += 0.5 * p;
            }
            probs.push(next);
        }
        Self { probs }
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        &self.probs[i]
    }

    /// `E[h(node_i)]` for one slice.
    pub fn expect_slice(&self, i: usize, values: &[f64]) -> f64 {
        self.probs[i].iter().zip(values).map(|(p, v)| p * v).sum()
    }
}
