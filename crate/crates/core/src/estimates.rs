//! Both sides of the a-priori bound
//!
//! ```text
//! E[sup e^{βA}|Y|² + ∫e^{βA}|Z|² + ∫e^{βA}a²|Y|² + K_T²]
//!     ≤ C_β E[e^{βA(T)}|ξ|² + ∫e^{βA}|f(·,0,0)|²/a² + sup e^{2βA}(S⁺)²]
//! ```
//!
//! `C_β` is not known in closed form, so only the ratio lhs/rhs is reported.

use serde::Serialize;

use crate::driver::{data_norms, DataNorms, ProblemSpec};
use crate::error::{RbsdeError, Result};
use crate::picard::{picard_solve, PicardConfig};
use crate::process::norms::{weighted_integral, weighted_running_sup};
use crate::process::PathSet;
use crate::snell::SolutionTriple;

/// Below this β the derivation of the bound needs `1 − 6/β > 0` and `β/2 − 6/β > 0`
/// which may fail.
pub const LEMMA_BETA_THRESHOLD: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LhsTerms {
    pub sup_y: f64,
    pub z_integral: f64,
    pub y_integral: f64,
    pub k_terminal_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`; `0` when both vanish and `+∞` (serialized as `null`) when only `rhs` does.
    pub ratio: f64,
    pub lhs_terms: LhsTerms,
    pub rhs_terms: DataNorms,
    pub exact: bool,
    pub warnings: Vec<String>,
}

/// Evaluates every term of both sides for `sol`, assumed to solve `problem`.
pub fn lemma1_sides(sol: &SolutionTriple, problem: &ProblemSpec, paths: &PathSet) -> Result<EstimateReport> {
    let grid = *problem.grid();
    if sol.grid() != &grid {
        return Err(RbsdeError::GridMismatch);
    }
    let beta = problem.beta();
    let weight = problem.weight();

    let sup_y = weighted_running_sup(&weight, beta, paths, |i, j| sol.y.get(i, j).powi(2))?;
    let z_integral = weighted_integral(&weight, beta, paths, |i, j| sol.z.get(i, j).powi(2))?;
    let y_integral =
        weighted_integral(&weight, beta, paths, |i, j| weight.a_sq().get(i, j) * sol.y.get(i, j).powi(2))?;
    let (_, k_terminal_sq) = sol.k_terminal_moments();

    let rhs_terms = data_norms(problem, paths)?;
    let lhs_terms = LhsTerms {
        sup_y: sup_y.value,
        z_integral: z_integral.value,
        y_integral: y_integral.value,
        k_terminal_sq,
    };
    let lhs = lhs_terms.sup_y + lhs_terms.z_integral + lhs_terms.y_integral + lhs_terms.k_terminal_sq;
    let rhs = rhs_terms.terminal_l2.value + rhs_terms.driver_h2.value + rhs_terms.obstacle_sup.value;
    let ratio = if rhs > 0.0 {
        lhs / rhs
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };

    let mut warnings = Vec::new();
    if beta <= LEMMA_BETA_THRESHOLD {
        warnings.push(format!(
            "beta = {beta} <= {LEMMA_BETA_THRESHOLD}: the conditions behind the a-priori bound may fail"
        ));
    }
    let exact = sup_y.exact
        && z_integral.exact
        && y_integral.exact
        && rhs_terms.terminal_l2.exact
        && rhs_terms.driver_h2.exact
        && rhs_terms.obstacle_sup.exact;
    Ok(EstimateReport { lhs, rhs, ratio, lhs_terms, rhs_terms, exact, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    /// Largest ratio over problems with `rhs > 0`; `None` if there are none.
    pub max_ratio: Option<f64>,
    /// Per-problem ratio, in input order.
    pub ratios: Vec<f64>,
    /// Indices of problems with `rhs = 0`, excluded from the maximum.
    pub zero_rhs: Vec<usize>,
}

/// Solves every problem with `config` and reports the largest lhs/rhs ratio.
pub fn lemma1_ratio_suite(problems: &[ProblemSpec], config: &PicardConfig) -> Result<SuiteReport> {
    let first = problems.first().ok_or_else(|| RbsdeError::InvalidArgument("empty problem suite".into()))?;
    let beta = first.beta();
    if problems.iter().any(|p| p.beta() != beta) {
        return Err(RbsdeError::InvalidArgument("suite problems must share beta".into()));
    }
    let mut ratios = Vec::with_capacity(problems.len());
    let mut zero_rhs = Vec::new();
    let mut max_ratio: Option<f64> = None;
    for (k, problem) in problems.iter().enumerate() {
        let outcome = picard_solve(problem, config)?;
        let paths = PathSet::auto(config.seed, config.paths, problem.grid())?;
        let report = lemma1_sides(&outcome.solution, problem, &paths)?;
        if report.rhs > 0.0 {
            max_ratio = Some(max_ratio.map_or(report.ratio, |m| m.max(report.ratio)));
        } else {
            zero_rhs.push(k);
        }
        ratios.push(report.ratio);
    }
    Ok(SuiteReport { max_ratio, ratios, zero_rhs })
}
