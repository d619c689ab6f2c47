//! Problem data and assumption checks.
//!
//! Coefficients are Markovian in the Brownian state: every evaluator takes
//! `(t, w)` and must be stateless so it can be shared across threads.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{NodeLocation, RbsdeError, Result};
use crate::process::norms::{weighted_integral, weighted_running_sup, weighted_terminal};
use crate::process::{CumulativeWeight, Estimate, LatticePath, LatticeProcess, PathSet, TimeGrid};

pub type StateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type TerminalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type DriverFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

pub(crate) fn location(grid: &TimeGrid, i: usize, j: usize) -> NodeLocation {
    NodeLocation { i, j, t: grid.time(i), w: grid.brownian(i, j) }
}

/// A nonnegative Lipschitz coefficient `μ(t, w)` or `γ(t, w)`.
#[derive(Clone)]
pub struct CoefficientProcess {
    eval: StateFn,
    deterministic: bool,
}

impl CoefficientProcess {
    pub fn constant(value: f64) -> Self {
        Self { eval: Arc::new(move |_, _| value), deterministic: true }
    }

    pub fn of_time(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { eval: Arc::new(move |t, _| f(t)), deterministic: true }
    }

    pub fn of_state(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { eval: Arc::new(f), deterministic: false }
    }

    pub fn eval(&self, t: f64, w: f64) -> f64 {
        (self.eval)(t, w)
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }
}

impl fmt::Debug for CoefficientProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientProcess")
            .field("deterministic", &self.deterministic)
            .finish_non_exhaustive()
    }
}

/// Driver `f(t, w, y, z)` with its stochastic Lipschitz coefficients and the floor `ε` on `a²`.
#[derive(Clone)]
pub struct DriverSpec {
    f: DriverFn,
    mu: CoefficientProcess,
    gamma: CoefficientProcess,
    epsilon: f64,
}

impl DriverSpec {
    pub fn new(
        f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
        mu: CoefficientProcess,
        gamma: CoefficientProcess,
        epsilon: f64,
    ) -> Self {
        Self { f: Arc::new(f), mu, gamma, epsilon }
    }

    /// `f = −(r(t)·y + θ(t)·z)` with `μ = |r|`, `γ = |θ|`.
    pub fn linear(
        r: impl Fn(f64) -> f64 + Send + Sync + 'static,
        theta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        epsilon: f64,
    ) -> Self {
        let r = Arc::new(r);
        let theta = Arc::new(theta);
        let (r1, t1) = (r.clone(), theta.clone());
        Self::new(
            move |t, _, y, z| -(r(t) * y + theta(t) * z),
            CoefficientProcess::of_time(move |t| r1(t).abs()),
            CoefficientProcess::of_time(move |t| t1(t).abs()),
            epsilon,
        )
    }

    /// A driver that ignores `(y, z)`.
    pub fn fixed(
        g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        mu: CoefficientProcess,
        gamma: CoefficientProcess,
        epsilon: f64,
    ) -> Self {
        Self::new(move |t, w, _, _| g(t, w), mu, gamma, epsilon)
    }

    pub fn eval(&self, t: f64, w: f64, y: f64, z: f64) -> f64 {
        (self.f)(t, w, y, z)
    }

    pub fn mu(&self) -> &CoefficientProcess {
        &self.mu
    }

    pub fn gamma(&self) -> &CoefficientProcess {
        &self.gamma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `a² = μ + γ²`.
    pub fn a_sq(&self, t: f64, w: f64) -> f64 {
        let g = self.gamma.eval(t, w);
        self.mu.eval(t, w) + g * g
    }

    pub fn is_deterministic(&self) -> bool {
        self.mu.is_deterministic() && self.gamma.is_deterministic()
    }

    pub fn weight(&self, grid: &TimeGrid) -> CumulativeWeight {
        CumulativeWeight::new(LatticeProcess::from_fn(*grid, |t, w| self.a_sq(t, w)), self.is_deterministic())
    }

    fn scaled(&self, lambda: f64) -> Self {
        let f = self.f.clone();
        Self {
            f: Arc::new(move |t, w, y, z| lambda * f(t, w, y / lambda, z / lambda)),
            mu: self.mu.clone(),
            gamma: self.gamma.clone(),
            epsilon: self.epsilon,
        }
    }
}

impl fmt::Debug for DriverSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriverSpec")
            .field("mu", &self.mu)
            .field("gamma", &self.gamma)
            .field("epsilon", &self.epsilon)
            .finish_non_exhaustive()
    }
}

/// Terminal value, driver, obstacle and weight parameter on a grid.
#[derive(Clone)]
pub struct ProblemSpec {
    grid: TimeGrid,
    driver: DriverSpec,
    terminal: TerminalFn,
    obstacle: StateFn,
    beta: f64,
}

impl ProblemSpec {
    pub fn new(
        grid: TimeGrid,
        driver: DriverSpec,
        terminal: impl Fn(f64) -> f64 + Send + Sync + 'static,
        obstacle: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        beta: f64,
    ) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(RbsdeError::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        if !(driver.epsilon.is_finite() && driver.epsilon > 0.0) {
            return Err(RbsdeError::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                driver.epsilon
            )));
        }
        Ok(Self { grid, driver, terminal: Arc::new(terminal), obstacle: Arc::new(obstacle), beta })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn driver(&self) -> &DriverSpec {
        &self.driver
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        let mut out = self.clone();
        if !(beta.is_finite() && beta > 0.0) {
            return Err(RbsdeError::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        out.beta = beta;
        Ok(out)
    }

    /// Same problem with the obstacle replaced.
    pub fn with_obstacle(&self, obstacle: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let mut out = self.clone();
        out.obstacle = Arc::new(obstacle);
        Ok(out)
    }

    pub fn terminal(&self, w: f64) -> f64 {
        (self.terminal)(w)
    }

    pub fn obstacle(&self, t: f64, w: f64) -> f64 {
        (self.obstacle)(t, w)
    }

    pub fn terminal_slice(&self) -> Vec<f64> {
        let n = self.grid.steps();
        (0..=n).map(|j| self.terminal(self.grid.brownian(n, j))).collect()
    }

    pub fn obstacle_process(&self) -> LatticeProcess {
        LatticeProcess::from_fn(self.grid, |t, w| self.obstacle(t, w))
    }

    /// `f(t, w, 0, 0)` on the lattice.
    pub fn driver_at_zero(&self) -> LatticeProcess {
        LatticeProcess::from_fn(self.grid, |t, w| self.driver.eval(t, w, 0.0, 0.0))
    }

    pub fn weight(&self) -> CumulativeWeight {
        self.driver.weight(&self.grid)
    }

    /// Problem with `ξ`, `S` and `f(·, 0, 0)` multiplied by `λ > 0`; the
    /// driver becomes `λ f(t, w, y/λ, z/λ)` so its Lipschitz coefficients are
    /// unchanged and the solution scales by `λ`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(RbsdeError::InvalidArgument(format!("scale must be positive, got {lambda}")));
        }
        let xi = self.terminal.clone();
        let s = self.obstacle.clone();
        Ok(Self {
            grid: self.grid,
            driver: self.driver.scaled(lambda),
            terminal: Arc::new(move |w| lambda * xi(w)),
            obstacle: Arc::new(move |t, w| lambda * s(t, w)),
            beta: self.beta,
        })
    }
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("grid", &self.grid)
            .field("driver", &self.driver)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

/// `A(t_i)` along a path: `A[0] = 0`, `A[i+1] = A[i] + a²(t_i, w_i)·dt`.
pub fn cumulative_a(path: &LatticePath, driver: &DriverSpec, grid: &TimeGrid) -> Vec<f64> {
    let dt = grid.dt();
    let mut out = Vec::with_capacity(path.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for node in path.node_sequence().iter().take(path.len()) {
        acc += driver.a_sq(node.time(grid), node.brownian(grid)) * dt;
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

/// `(y₁, z₁, y₂, z₂)` that breaks the Lipschitz bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzCounterexample {
    pub y1: f64,
    pub z1: f64,
    pub y2: f64,
    pub z2: f64,
    pub lhs: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionEntry {
    pub assumption: &'static str,
    pub status: CheckStatus,
    pub blocking: bool,
    pub violations: usize,
    pub worst_violation: f64,
    pub location: Option<NodeLocation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<LipschitzCounterexample>,
    pub detail: String,
}

impl AssumptionEntry {
    fn pass(assumption: &'static str, detail: String) -> Self {
        Self {
            assumption,
            status: CheckStatus::Pass,
            blocking: false,
            violations: 0,
            worst_violation: 0.0,
            location: None,
            counterexample: None,
            detail,
        }
    }
}

/// Squared norms of the data entering the a-priori estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DataNorms {
    /// `E[e^{βA(T)} ξ²]`
    pub terminal_l2: Estimate,
    /// `E Σ e^{βA} f(t,0,0)²/a² dt`
    pub driver_h2: Estimate,
    /// `E[sup e^{2βA(t)} (S_t⁺)²]`
    pub obstacle_sup: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub entries: Vec<AssumptionEntry>,
    pub norms: Option<DataNorms>,
    pub blocking: bool,
}

impl AssumptionReport {
    pub fn entry(&self, assumption: &str) -> Option<&AssumptionEntry> {
        self.entries.iter().find(|e| e.assumption == assumption)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &AssumptionEntry> {
        self.entries.iter().filter(|e| e.status == CheckStatus::Warn)
    }
}

/// Random probing of the Lipschitz bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub seed: u64,
    pub count: usize,
    pub half_width: f64,
    pub tolerance: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { seed: 0, count: 10_000, half_width: 10.0, tolerance: 1e-12 }
    }
}

/// Probes `|f(y₁,z₁) − f(y₂,z₂)| ≤ μ|y₁−y₂| + γ|z₁−z₂|` at random nodes and
/// points of the box. Violations are warnings, never blocking.
pub fn check_h1_lipschitz(driver: &DriverSpec, grid: &TimeGrid, probe: &ProbeConfig) -> AssumptionEntry {
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let h = probe.half_width;
    let mut violations = 0;
    let mut worst: Option<(f64, NodeLocation, LipschitzCounterexample)> = None;
    for _ in 0..probe.count.max(1) {
        let i = rng.gen_range(0..=grid.steps());
        let j = rng.gen_range(0..=i);
        let (t, w) = (grid.time(i), grid.brownian(i, j));
        let y1 = rng.gen_range(-h..=h);
        let z1 = rng.gen_range(-h..=h);
        let y2 = rng.gen_range(-h..=h);
        let z2 = rng.gen_range(-h..=h);
        let lhs = (driver.eval(t, w, y1, z1) - driver.eval(t, w, y2, z2)).abs();
        let bound = driver.mu.eval(t, w) * (y1 - y2).abs() + driver.gamma.eval(t, w) * (z1 - z2).abs();
        let excess = lhs - bound;
        if excess > probe.tolerance || lhs.is_nan() {
            violations += 1;
            let excess = if excess.is_nan() { f64::INFINITY } else { excess };
            if worst.as_ref().is_none_or(|(e, _, _)| excess > *e) {
                worst = Some((
                    excess,
                    location(grid, i, j),
                    LipschitzCounterexample { y1, z1, y2, z2, lhs, bound },
                ));
            }
        }
    }
    match worst {
        None => AssumptionEntry::pass(
            "H1",
            format!("{} probes in [-{h}, {h}]^2 satisfied the bound", probe.count.max(1)),
        ),
        Some((excess, loc, cx)) => AssumptionEntry {
            assumption: "H1",
            status: CheckStatus::Warn,
            blocking: false,
            violations,
            worst_violation: excess,
            location: Some(loc),
            counterexample: Some(cx),
            detail: format!("{violations} of {} probes exceeded mu|dy| + gamma|dz|", probe.count.max(1)),
        },
    }
}

/// Scans every node for `μ ≥ 0`, `γ ≥ 0`.
pub fn check_coefficients(driver: &DriverSpec, grid: &TimeGrid) -> AssumptionEntry {
    let mut violations = 0;
    let mut worst: Option<(f64, NodeLocation)> = None;
    for i in 0..=grid.steps() {
        for j in 0..=i {
            let (t, w) = (grid.time(i), grid.brownian(i, j));
            let m = driver.mu.eval(t, w).min(driver.gamma.eval(t, w));
            if m.is_nan() || m < 0.0 {
                violations += 1;
                let v = if m.is_nan() { f64::INFINITY } else { -m };
                if worst.is_none_or(|(e, _)| v > e) {
                    worst = Some((v, location(grid, i, j)));
                }
            }
        }
    }
    match worst {
        None => AssumptionEntry::pass("coefficients", "mu, gamma nonnegative at every node".into()),
        Some((v, loc)) => AssumptionEntry {
            assumption: "coefficients",
            status: CheckStatus::Fail,
            blocking: true,
            violations,
            worst_violation: v,
            location: Some(loc),
            counterexample: None,
            detail: format!("negative or non-finite mu/gamma at {violations} nodes"),
        },
    }
}

/// Exhaustive scan for `a² ≥ ε`. The reported location is the first node
/// (in time, then up-count order) attaining the minimum of `a²`.
pub fn check_h2_epsilon(driver: &DriverSpec, grid: &TimeGrid) -> AssumptionEntry {
    let mut violations = 0;
    let mut min: Option<(f64, NodeLocation)> = None;
    for i in 0..=grid.steps() {
        for j in 0..=i {
            let a2 = driver.a_sq(grid.time(i), grid.brownian(i, j));
            let a2 = if a2.is_nan() { f64::NEG_INFINITY } else { a2 };
            if a2 < driver.epsilon {
                violations += 1;
            }
            if min.is_none_or(|(m, _)| a2 < m) {
                min = Some((a2, location(grid, i, j)));
            }
        }
    }
    let (min_a2, loc) = min.expect("grid has at least one node");
    if violations == 0 {
        AssumptionEntry::pass("H2", format!("min a^2 = {min_a2} >= epsilon = {}", driver.epsilon))
    } else {
        AssumptionEntry {
            assumption: "H2",
            status: CheckStatus::Fail,
            blocking: true,
            violations,
            worst_violation: driver.epsilon - min_a2,
            location: Some(loc),
            counterexample: None,
            detail: format!(
                "a^2 below epsilon = {} at {violations} nodes; min a^2 = {min_a2}",
                driver.epsilon
            ),
        }
    }
}

/// Data norms for (H3)/(H4)/(H5) plus the blocking terminal-dominance and
/// finiteness checks.
pub fn check_h3_h4_h5(problem: &ProblemSpec, paths: &PathSet) -> Result<(Vec<AssumptionEntry>, DataNorms)> {
    let grid = *problem.grid();
    let n = grid.steps();
    let xi = problem.terminal_slice();
    let f0 = problem.driver_at_zero();
    let obstacle = problem.obstacle_process();
    let norms = data_norms(problem, paths)?;
    let DataNorms { terminal_l2, driver_h2, obstacle_sup } = norms;

    let finite_entry = |name: &'static str, value: f64, what: &str| {
        if value.is_finite() {
            AssumptionEntry::pass(name, format!("{what} = {value}"))
        } else {
            AssumptionEntry {
                assumption: name,
                status: CheckStatus::Fail,
                blocking: false,
                violations: 1,
                worst_violation: f64::INFINITY,
                location: None,
                counterexample: None,
                detail: format!("{what} is not finite"),
            }
        }
    };

    let mut h3 = finite_entry("H3", driver_h2.value, "||f(.,0,0)/a||^2 in H2(beta,a)");
    if let Some(node) = f0.first_non_finite() {
        h3.status = CheckStatus::Fail;
        h3.blocking = true;
        h3.location = Some(location(&grid, node.i, node.j));
        h3.detail = "f(t,w,0,0) is not finite".into();
    }

    let mut h4 = finite_entry("H4", terminal_l2.value, "||xi||^2 in L2(beta,a)");
    if let Some(j) = xi.iter().position(|v| !v.is_finite()) {
        h4.status = CheckStatus::Fail;
        h4.blocking = true;
        h4.location = Some(location(&grid, n, j));
        h4.detail = "terminal value is not finite".into();
    }

    let h5 = h5_entry(problem, &xi, &obstacle, obstacle_sup.value);

    Ok((vec![h3, h4, h5], norms))
}

/// The three data norms, evaluated per the lattice/path rules of the weighted norms.
pub fn data_norms(problem: &ProblemSpec, paths: &PathSet) -> Result<DataNorms> {
    let weight = problem.weight();
    let beta = problem.beta;
    let xi = problem.terminal_slice();
    let f0 = problem.driver_at_zero();
    let obstacle = problem.obstacle_process();
    Ok(DataNorms {
        terminal_l2: weighted_terminal(&weight, beta, paths, |j| xi[j] * xi[j])?,
        driver_h2: weighted_integral(&weight, beta, paths, |i, j| {
            f0.get(i, j).powi(2) / weight.a_sq().get(i, j)
        })?,
        obstacle_sup: weighted_running_sup(&weight, 2.0 * beta, paths, |i, j| {
            obstacle.get(i, j).max(0.0).powi(2)
        })?,
    })
}

fn h5_entry(problem: &ProblemSpec, xi: &[f64], obstacle: &LatticeProcess, sup_norm: f64) -> AssumptionEntry {
    let grid = *problem.grid();
    let n = grid.steps();
    if let Some(node) = obstacle.first_non_finite() {
        return AssumptionEntry {
            assumption: "H5",
            status: CheckStatus::Fail,
            blocking: true,
            violations: obstacle.nodes().filter(|(_, v)| !v.is_finite()).count(),
            worst_violation: f64::INFINITY,
            location: Some(location(&grid, node.i, node.j)),
            counterexample: None,
            detail: "obstacle is not finite".into(),
        };
    }
    let mut violations = 0;
    let mut worst: Option<(f64, usize)> = None;
    for (j, (&s, &x)) in obstacle.slice(n).iter().zip(xi).enumerate() {
        let gap = s - x;
        if gap > 1e-12 {
            violations += 1;
            if worst.is_none_or(|(g, _)| gap > g) {
                worst = Some((gap, j));
            }
        }
    }
    match worst {
        None => AssumptionEntry::pass(
            "H5",
            format!("S_T <= xi at every terminal node; E[sup e^(2 beta A) (S+)^2] = {sup_norm}"),
        ),
        Some((gap, j)) => AssumptionEntry {
            assumption: "H5",
            status: CheckStatus::Fail,
            blocking: true,
            violations,
            worst_violation: gap,
            location: Some(location(&grid, n, j)),
            counterexample: None,
            detail: format!("S_T > xi at {violations} terminal nodes"),
        },
    }
}

/// Runs every check. A blocking failure means the problem must not be solved.
pub fn validate(problem: &ProblemSpec, paths: &PathSet, probe: &ProbeConfig) -> Result<AssumptionReport> {
    let grid = *problem.grid();
    let mut entries = vec![
        check_coefficients(&problem.driver, &grid),
        check_h1_lipschitz(&problem.driver, &grid, probe),
        check_h2_epsilon(&problem.driver, &grid),
    ];
    let structural_ok = entries.iter().all(|e| !e.blocking);
    let norms = if structural_ok {
        let (more, norms) = check_h3_h4_h5(problem, paths)?;
        entries.extend(more);
        Some(norms)
    } else {
        // Weighted norms divide by a², so only the terminal dominance check runs.
        let xi = problem.terminal_slice();
        let obstacle = problem.obstacle_process();
        entries.push(h5_entry(problem, &xi, &obstacle, f64::NAN));
        None
    };
    let blocking = entries.iter().any(|e| e.blocking);
    Ok(AssumptionReport { entries, norms, blocking })
}
