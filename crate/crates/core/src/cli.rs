//! Batch front end: problem JSON in, JSON and CSV artifacts out.
//!
//! Exit codes: `0` success, `1` validation or input failure, `2` Picard
//! iteration did not converge.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{DriverConfig, OracleKind, ProblemConfig};
use crate::driver::{validate, AssumptionReport, ProbeConfig, ProblemSpec};
use crate::error::{RbsdeError, Result};
use crate::estimates::{lemma1_sides, EstimateReport};
use crate::oracle::{
    brute_force_reference, crr_american_put, linear_bsde_value, AmericanPutSpec, MAX_BRUTE_FORCE_STEPS,
};
use crate::picard::{contraction_factor, picard_solve, picard_solve_with, IterationTrace, PicardConfig};
use crate::process::{NodeMeasure, PathSet};
use crate::snell::{skorokhod_residual, SolutionTriple};

#[derive(Debug, Parser)]
#[command(name = "rbsde", version, about = "Reflected BSDE solver with stochastic Lipschitz drivers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate, run the Picard iteration and write the solution artifacts.
    Solve(RunConfig),
    /// Run the assumption checks only.
    Check(RunConfig),
    /// Compare the pipeline against the oracle named in the problem file.
    Compare(RunConfig),
    /// Solve for each β and tabulate contraction diagnostics.
    SweepBeta {
        #[command(flatten)]
        run: RunConfig,
        /// Comma-separated β values.
        #[arg(long, value_delimiter = ',', default_value = "8,12,20,40")]
        betas: Vec<f64>,
    },
    /// Write the frozen oracle values used by the test suite.
    OracleFixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Problem JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub paths: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Failure = 1,
    NotConverged = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Problem, Picard settings and probe settings after flags override the file.
pub struct Prepared {
    pub config: ProblemConfig,
    pub problem: ProblemSpec,
    pub picard: PicardConfig,
    pub probe: ProbeConfig,
}

impl RunConfig {
    pub fn prepare(&self) -> Result<Prepared> {
        let mut config = ProblemConfig::from_path(&self.config).map_err(|e| match e {
            RbsdeError::Json(j) => RbsdeError::Config(format!("{}: {j}", self.config.display())),
            other => other,
        })?;
        if let Some(b) = self.beta {
            config.beta = Some(b);
        }
        if let Some(n) = self.steps {
            config.grid.steps = n;
        }
        let problem = config.to_problem()?;
        let mut picard = config.picard_config();
        if let Some(t) = self.tol {
            picard.tol = t;
        }
        if let Some(m) = self.max_iters {
            picard.max_iters = m;
        }
        if let Some(s) = self.seed {
            picard.seed = s;
        }
        if let Some(p) = self.paths {
            picard.paths = p;
        }
        let probe = ProbeConfig {
            seed: picard.seed,
            count: config.solver.probe_count.unwrap_or(ProbeConfig::default().count),
            half_width: config.solver.probe_box.unwrap_or(ProbeConfig::default().half_width),
            ..ProbeConfig::default()
        };
        Ok(Prepared { config, problem, picard, probe })
    }
}

impl Prepared {
    fn paths(&self) -> Result<PathSet> {
        PathSet::auto(self.picard.seed, self.picard.paths, self.problem.grid())
    }

    fn validate(&self) -> Result<AssumptionReport> {
        validate(&self.problem, &self.paths()?, &self.probe)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// `i,j,t,w,Y,Z,dK`, one row per node.
pub fn solution_csv(sol: &SolutionTriple) -> String {
    let grid = *sol.grid();
    let mut out = String::from("i,j,t,w,Y,Z,dK\n");
    for i in 0..=grid.steps() {
        for j in 0..=i {
            let _ = writeln!(
                out,
                "{i},{j},{},{},{},{},{}",
                grid.time(i),
                grid.brownian(i, j),
                sol.y.get(i, j),
                sol.z.get(i, j),
                sol.dk.get(i, j)
            );
        }
    }
    out
}

/// `iteration,distance,ratio`. Wall time is left out so reruns are byte-identical.
pub fn trace_csv(trace: &IterationTrace) -> String {
    let mut out = String::from("iteration,distance,ratio\n");
    for r in &trace.records {
        let ratio = r.ratio.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", r.iteration, r.distance, ratio);
    }
    out
}

#[derive(Debug, Serialize)]
pub struct SolveSummary {
    pub y_root: f64,
    pub k_terminal_mean: f64,
    pub iterations: usize,
    pub converged: bool,
    pub beta: f64,
    pub contraction_factor: f64,
    pub contraction_ratios: Vec<Option<f64>>,
    pub skorokhod_residual: f64,
    pub lemma1: EstimateReport,
    pub warnings: Vec<String>,
}

fn report_blocking(report: &AssumptionReport) {
    for e in report.entries.iter().filter(|e| e.blocking) {
        match e.location {
            Some(loc) => eprintln!("{} failed at {loc}: {}", e.assumption, e.detail),
            None => eprintln!("{} failed: {}", e.assumption, e.detail),
        }
    }
}

pub fn run_solve(run: &RunConfig) -> Result<ExitStatus> {
    let prep = run.prepare()?;
    fs::create_dir_all(&run.out)?;
    let report = prep.validate()?;
    write_json(&run.out.join("assumptions.json"), &report)?;
    if report.blocking {
        report_blocking(&report);
        return Ok(ExitStatus::Failure);
    }
    let outcome = picard_solve(&prep.problem, &prep.picard)?;
    let paths = prep.paths()?;
    let lemma1 = lemma1_sides(&outcome.solution, &prep.problem, &paths)?;
    let residual = skorokhod_residual(&outcome.solution, &prep.problem.obstacle_process())?;
    let mut warnings: Vec<String> =
        report.warnings().map(|e| format!("{}: {}", e.assumption, e.detail)).collect();
    warnings.extend(outcome.warnings.iter().cloned());
    warnings.extend(lemma1.warnings.iter().cloned());
    let summary = SolveSummary {
        y_root: outcome.solution.y_root(),
        k_terminal_mean: outcome.solution.k_terminal_moments().0,
        iterations: outcome.iterations(),
        converged: outcome.converged(),
        beta: prep.problem.beta(),
        contraction_factor: contraction_factor(prep.problem.beta())?,
        contraction_ratios: outcome.trace.records.iter().map(|r| r.ratio).collect(),
        skorokhod_residual: residual,
        lemma1,
        warnings,
    };
    write_json(&run.out.join("summary.json"), &summary)?;
    fs::write(run.out.join("solution.csv"), solution_csv(&outcome.solution))?;
    fs::write(run.out.join("trace.csv"), trace_csv(&outcome.trace))?;
    println!("Y_root = {}", summary.y_root);
    println!("iterations = {}, converged = {}", summary.iterations, summary.converged);
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if outcome.converged() { ExitStatus::Success } else { ExitStatus::NotConverged })
}

pub fn run_check(run: &RunConfig) -> Result<ExitStatus> {
    let prep = run.prepare()?;
    let report = prep.validate()?;
    fs::create_dir_all(&run.out)?;
    write_json(&run.out.join("assumptions.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.blocking {
        report_blocking(&report);
        return Ok(ExitStatus::Failure);
    }
    for e in report.warnings() {
        eprintln!("warning: {} ({})", e.assumption, e.detail);
    }
    Ok(ExitStatus::Success)
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub oracle: OracleKind,
    pub pipeline: f64,
    pub reference: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
    /// Largest node-wise gap over Y, Z and ΔK (brute-force comparisons only).
    pub max_node_gap: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

fn max_triple_gap(a: &SolutionTriple, b: &SolutionTriple) -> Result<f64> {
    Ok(a.y.max_abs_diff(&b.y)?.max(a.z.max_abs_diff(&b.z)?).max(a.dk.max_abs_diff(&b.dk)?))
}

pub fn compare(prep: &Prepared) -> Result<Comparison> {
    let settings = prep
        .config
        .compare
        .clone()
        .ok_or_else(|| RbsdeError::Config("problem file has no \"compare\" block".into()))?;
    let outcome = picard_solve(&prep.problem, &prep.picard)?;
    let pipeline = outcome.solution.y_root();
    let grid = *prep.problem.grid();
    let (reference, max_node_gap, tolerance) = match settings.oracle {
        OracleKind::Linear => {
            let r = match &prep.config.driver {
                DriverConfig::Linear { r, theta, .. } if theta.as_constant() == Some(0.0) => r.clone(),
                _ => {
                    return Err(RbsdeError::Config(
                        "linear oracle needs a linear driver with theta = 0".into(),
                    ))
                }
            };
            let xi_mean = NodeMeasure::new(&grid).expect_slice(grid.steps(), &prep.problem.terminal_slice());
            let value = linear_bsde_value(|t| r.eval(t), xi_mean, &grid);
            (value, None, settings.tolerance.unwrap_or(1e-3))
        }
        OracleKind::CrrPut => {
            let spec: AmericanPutSpec = prep.config.american_put().ok_or_else(|| {
                RbsdeError::Config(
                    "crr-put oracle needs put terminal and obstacle with equal parameters".into(),
                )
            })?;
            (crr_american_put(&spec)?, None, settings.tolerance.unwrap_or(0.01))
        }
        OracleKind::BruteForce => {
            if grid.steps() > MAX_BRUTE_FORCE_STEPS {
                return Err(RbsdeError::TooManySteps { steps: grid.steps(), max: MAX_BRUTE_FORCE_STEPS });
            }
            // Same number of Picard steps, path-tree solver inside.
            let forced = PicardConfig {
                tol: f64::MIN_POSITIVE,
                max_iters: outcome.iterations(),
                ..prep.picard.clone()
            };
            let reference = picard_solve_with(&prep.problem, &forced, brute_force_reference)?;
            let gap = max_triple_gap(&outcome.solution, &reference.solution)?;
            (reference.solution.y_root(), Some(gap), settings.tolerance.unwrap_or(1e-12))
        }
    };
    let abs_gap = (pipeline - reference).abs();
    let rel_gap = if reference != 0.0 { abs_gap / reference.abs() } else { abs_gap };
    let pass = match settings.oracle {
        OracleKind::Linear => abs_gap <= tolerance,
        OracleKind::CrrPut => rel_gap <= tolerance,
        OracleKind::BruteForce => max_node_gap.unwrap_or(f64::INFINITY) <= tolerance,
    };
    Ok(Comparison {
        oracle: settings.oracle,
        pipeline,
        reference,
        abs_gap,
        rel_gap,
        max_node_gap,
        tolerance,
        pass,
    })
}

pub fn run_compare(run: &RunConfig) -> Result<ExitStatus> {
    let prep = run.prepare()?;
    let report = prep.validate()?;
    if report.blocking {
        report_blocking(&report);
        return Ok(ExitStatus::Failure);
    }
    let cmp = compare(&prep)?;
    fs::create_dir_all(&run.out)?;
    write_json(&run.out.join("comparison.json"), &cmp)?;
    println!("{}", serde_json::to_string_pretty(&cmp)?);
    Ok(if cmp.pass { ExitStatus::Success } else { ExitStatus::Failure })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub contraction_factor: f64,
    pub max_ratio: Option<f64>,
    pub iterations: usize,
    pub y_root: f64,
    pub converged: bool,
    /// Factor ≥ 1 or no convergence.
    pub flagged: bool,
}

pub fn sweep_beta(prep: &Prepared, betas: &[f64]) -> Result<Vec<SweepRow>> {
    betas
        .iter()
        .map(|&beta| {
            let factor = contraction_factor(beta)?;
            let problem = prep.problem.with_beta(beta)?;
            let out = picard_solve(&problem, &prep.picard)?;
            Ok(SweepRow {
                beta,
                contraction_factor: factor,
                max_ratio: out.trace.max_ratio(3, 1e-14),
                iterations: out.iterations(),
                y_root: out.solution.y_root(),
                converged: out.converged(),
                flagged: factor >= 1.0 || !out.converged(),
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("beta,contraction_factor,max_ratio,iterations,y_root,converged,flagged\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.beta,
            r.contraction_factor,
            r.max_ratio.map(|v| v.to_string()).unwrap_or_default(),
            r.iterations,
            r.y_root,
            r.converged,
            r.flagged
        );
    }
    out
}

/// Largest minus smallest root value over converged rows.
pub fn y_root_spread(rows: &[SweepRow]) -> Option<f64> {
    let roots: Vec<f64> = rows.iter().filter(|r| r.converged).map(|r| r.y_root).collect();
    let max = roots.iter().copied().reduce(f64::max)?;
    let min = roots.iter().copied().reduce(f64::min)?;
    Some(max - min)
}

pub fn run_sweep(run: &RunConfig, betas: &[f64]) -> Result<ExitStatus> {
    if let Some(b) = betas.iter().find(|b| b.is_nan() || **b <= 0.0) {
        return Err(RbsdeError::InvalidArgument(format!("beta must be positive, got {b}")));
    }
    let prep = run.prepare()?;
    let report = prep.validate()?;
    if report.blocking {
        report_blocking(&report);
        return Ok(ExitStatus::Failure);
    }
    let rows = sweep_beta(&prep, betas)?;
    let csv = sweep_csv(&rows);
    fs::create_dir_all(&run.out)?;
    fs::write(run.out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    for r in rows.iter().filter(|r| r.flagged) {
        eprintln!(
            "warning: beta = {} flagged (factor {}, converged {})",
            r.beta, r.contraction_factor, r.converged
        );
    }
    if let Some(spread) = y_root_spread(&rows) {
        eprintln!("Y_root spread over converged rows: {spread:e}");
    }
    Ok(ExitStatus::Success)
}

#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct FrozenPut {
    pub spec: AmericanPutSpec,
    pub value: f64,
}

#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct OracleFixtures {
    pub american_put: Vec<FrozenPut>,
    pub linear_rate: f64,
    pub linear_horizon: f64,
    pub linear_steps: usize,
    pub linear_value: f64,
}

pub fn oracle_fixtures() -> Result<OracleFixtures> {
    let american_put = [500usize, 1000]
        .into_iter()
        .map(|steps| {
            let spec =
                AmericanPutSpec { spot: 100.0, strike: 100.0, rate: 0.06, sigma: 0.2, maturity: 0.5, steps };
            Ok(FrozenPut { value: crr_american_put(&spec)?, spec })
        })
        .collect::<Result<_>>()?;
    let grid = crate::process::TimeGrid::new(1.0, 200)?;
    Ok(OracleFixtures {
        american_put,
        linear_rate: 0.05,
        linear_horizon: 1.0,
        linear_steps: 200,
        linear_value: linear_bsde_value(|_| 0.05, 1.0, &grid),
    })
}

pub fn run(cli: &Cli) -> Result<ExitStatus> {
    match &cli.command {
        Command::Solve(run) => run_solve(run),
        Command::Check(run) => run_check(run),
        Command::Compare(run) => run_compare(run),
        Command::SweepBeta { run, betas } => run_sweep(run, betas),
        Command::OracleFixtures { out } => {
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            write_json(out, &oracle_fixtures()?)?;
            Ok(ExitStatus::Success)
        }
    }
}
