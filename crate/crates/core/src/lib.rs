//! Reflected backward SDEs with stochastic Lipschitz drivers on a recombining
//! binomial lattice.
//!
//! The solver is a Picard iteration whose inner step is a Snell-envelope
//! dynamic program on the lattice. Around it sit assumption checks, the
//! a-priori estimate diagnostics and independent oracles.

pub mod cli;
pub mod config;
pub mod driver;
pub mod error;
pub mod estimates;
pub mod oracle;
pub mod picard;
pub mod process;
pub mod snell;

pub use config::ProblemConfig;
pub use driver::{AssumptionReport, CoefficientProcess, DriverSpec, ProbeConfig, ProblemSpec};
pub use error::{NodeLocation, RbsdeError, Result};
pub use estimates::{lemma1_ratio_suite, lemma1_sides, EstimateReport};
pub use picard::{
    beta_distance, contraction_factor, default_beta, min_beta_for_factor, picard_solve, PicardConfig,
    PicardOutcome, PicardStatus,
};
pub use process::{LatticeProcess, PathSet, TimeGrid};
pub use snell::{solve_fixed_driver, SolutionTriple};
