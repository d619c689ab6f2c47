//! Time grid, Brownian lattice, path sampling and weighted norms.

mod grid;
mod lattice;
pub mod norms;
mod paths;

pub use grid::{build_time_grid, LatticeNode, TimeGrid};
pub use lattice::{conditional_expectation_into, conditional_expectation_step, LatticeProcess, NodeMeasure};
pub use norms::{weighted_h2_norm, weighted_s2_norm, CumulativeWeight};
pub use paths::{sample_lattice_paths, sample_paths, Estimate, LatticePath, PathSet, MAX_EXHAUSTIVE_STEPS};
