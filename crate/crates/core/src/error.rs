use std::fmt;

use serde::Serialize;

/// A node of the recombining lattice, used to locate failures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeLocation {
    pub i: usize,
    pub j: usize,
    pub t: f64,
    pub w: f64,
}

impl fmt::Display for NodeLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node (i={}, j={}, t={}, w={})", self.i, self.j, self.t, self.w)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RbsdeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("slice length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("grid mismatch between processes")]
    GridMismatch,

    #[error("empty path set")]
    EmptyPaths,

    #[error("terminal value below obstacle at {location}: S_T = {obstacle}, xi = {terminal}")]
    TerminalBelowObstacle { location: NodeLocation, obstacle: f64, terminal: f64 },

    #[error("non-finite {what} at {location}")]
    NonFinite { what: &'static str, location: NodeLocation },

    #[error("brute-force reference limited to N <= {max}, got N = {steps}")]
    TooManySteps { steps: usize, max: usize },

    #[error(
        "merged lattice node disagrees in the path tree at {location} (gap {gap:e}); data is not Markovian"
    )]
    NonMarkovian { location: NodeLocation, gap: f64 },

    #[error("CRR risk-neutral probability {q} outside [0, 1]")]
    InvalidRiskNeutralProbability { q: f64 },

    #[error("problem configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RbsdeError>;
