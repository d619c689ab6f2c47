//! C ABI over the `rbsde` solver.
//!
//! Problems and solutions are opaque heap handles released with their `_free`
//! function. Every fallible call returns an [`RbsdeStatus`]; on failure the
//! message is available from [`rbsde_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rbsde::driver::validate;
use rbsde::estimates::lemma1_sides;
use rbsde::oracle::{crr_american_put, AmericanPutSpec};
use rbsde::picard::{contraction_factor, min_beta_for_factor};
use rbsde::{PathSet, PicardConfig, PicardOutcome, ProbeConfig, ProblemConfig, ProblemSpec, RbsdeError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbsdeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidArgument = 4,
    /// A blocking assumption check failed; nothing was solved.
    AssumptionViolation = 5,
    /// The solution handle is valid but the iteration hit its limit.
    NotConverged = 6,
    OutOfRange = 7,
    SolverError = 8,
    Panic = 9,
}

/// Parsed problem together with its solver settings.
pub struct RbsdeProblem {
    problem: ProblemSpec,
    picard: PicardConfig,
    probe: ProbeConfig,
}

pub struct RbsdeSolution {
    outcome: PicardOutcome,
    k_terminal_mean: f64,
    lemma1_ratio: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &RbsdeError) -> RbsdeStatus {
    match err {
        RbsdeError::Config(_) | RbsdeError::Json(_) => RbsdeStatus::InvalidConfig,
        RbsdeError::InvalidArgument(_)
        | RbsdeError::InvalidGrid(_)
        | RbsdeError::InvalidRiskNeutralProbability { .. }
        | RbsdeError::TooManySteps { .. } => RbsdeStatus::InvalidArgument,
        RbsdeError::TerminalBelowObstacle { .. } => RbsdeStatus::AssumptionViolation,
        _ => RbsdeStatus::SolverError,
    }
}

fn fail(err: RbsdeError) -> RbsdeStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn guard(f: impl FnOnce() -> RbsdeStatus) -> RbsdeStatus {
    clear_error();
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| {
        set_error("panic inside rbsde");
        RbsdeStatus::Panic
    })
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_error(concat!("`", stringify!($p), "` is null"));
            return RbsdeStatus::NullPointer;
        })+
    };
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next `rbsde_*` call on the same thread.
#[no_mangle]
pub extern "C" fn rbsde_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a problem JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rbsde_problem_from_json(
    json: *const c_char,
    out: *mut *mut RbsdeProblem,
) -> RbsdeStatus {
    guard(|| {
        non_null!(json, out);
        let Ok(text) = CStr::from_ptr(json).to_str() else {
            set_error("problem JSON is not valid UTF-8");
            return RbsdeStatus::InvalidUtf8;
        };
        let parsed = ProblemConfig::from_json_str(text).and_then(|config| {
            let problem = config.to_problem()?;
            let picard = config.picard_config();
            let d = ProbeConfig::default();
            let probe = ProbeConfig {
                seed: picard.seed,
                count: config.solver.probe_count.unwrap_or(d.count),
                half_width: config.solver.probe_box.unwrap_or(d.half_width),
                ..d
            };
            Ok(RbsdeProblem { problem, picard, probe })
        });
        match parsed {
            Ok(p) => {
                *out = Box::into_raw(Box::new(p));
                RbsdeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `problem` must come from [`rbsde_problem_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rbsde_problem_free(problem: *mut RbsdeProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Overrides the Picard tolerance and iteration limit.
///
/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rbsde_problem_set_solver(
    problem: *mut RbsdeProblem,
    tol: f64,
    max_iters: usize,
) -> RbsdeStatus {
    guard(|| {
        non_null!(problem);
        if tol.is_nan() || tol <= 0.0 || max_iters == 0 {
            set_error(format!("need tol > 0 and max_iters >= 1, got {tol} and {max_iters}"));
            return RbsdeStatus::InvalidArgument;
        }
        let p = &mut *problem;
        p.picard.tol = tol;
        p.picard.max_iters = max_iters;
        RbsdeStatus::Ok
    })
}

/// Runs the assumption checks. Returns [`RbsdeStatus::AssumptionViolation`]
/// with the located failure in the error message when a blocking check fails.
///
/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rbsde_problem_check(problem: *const RbsdeProblem) -> RbsdeStatus {
    guard(|| {
        non_null!(problem);
        check(&*problem)
    })
}

fn check(p: &RbsdeProblem) -> RbsdeStatus {
    let report = PathSet::auto(p.picard.seed, p.picard.paths, p.problem.grid())
        .and_then(|paths| validate(&p.problem, &paths, &p.probe));
    match report {
        Ok(r) if r.blocking => {
            let msg: Vec<String> = r
                .entries
                .iter()
                .filter(|e| e.blocking)
                .map(|e| match e.location {
                    Some(loc) => format!("{} failed at {loc}: {}", e.assumption, e.detail),
                    None => format!("{} failed: {}", e.assumption, e.detail),
                })
                .collect();
            set_error(msg.join("; "));
            RbsdeStatus::AssumptionViolation
        }
        Ok(_) => RbsdeStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Validates and solves. On [`RbsdeStatus::Ok`] or [`RbsdeStatus::NotConverged`]
/// `*out` receives a solution handle.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rbsde_solve(
    problem: *const RbsdeProblem,
    out: *mut *mut RbsdeSolution,
) -> RbsdeStatus {
    guard(|| {
        non_null!(problem, out);
        let p = &*problem;
        let status = check(p);
        if status != RbsdeStatus::Ok {
            return status;
        }
        let solved = rbsde::picard_solve(&p.problem, &p.picard).and_then(|outcome| {
            let paths = PathSet::auto(p.picard.seed, p.picard.paths, p.problem.grid())?;
            let lemma = lemma1_sides(&outcome.solution, &p.problem, &paths)?;
            Ok(RbsdeSolution {
                k_terminal_mean: outcome.solution.k_terminal_moments().0,
                lemma1_ratio: lemma.ratio,
                outcome,
            })
        });
        match solved {
            Ok(sol) => {
                let converged = sol.outcome.converged();
                *out = Box::into_raw(Box::new(sol));
                if converged {
                    RbsdeStatus::Ok
                } else {
                    set_error(format!("no convergence within {} iterations", p.picard.max_iters));
                    RbsdeStatus::NotConverged
                }
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `solution` must come from [`rbsde_solve`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rbsde_solution_free(solution: *mut RbsdeSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// # Safety
/// `solution` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rbsde_solution_y_root(solution: *const RbsdeSolution, out: *mut f64) -> RbsdeStatus {
    guard(|| {
        non_null!(solution, out);
        *out = (*solution).outcome.solution.y_root();
        RbsdeStatus::Ok
    })
}

/// `E[K_T]`.
///
/// # Safety
/// `solution` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rbsde_solution_k_terminal_mean(
    solution: *const RbsdeSolution,
    out: *mut f64,
) -> RbsdeStatus {
    guard(|| {
        non_null!(solution, out);
        *out = (*solution).k_terminal_mean;
        RbsdeStatus::Ok
    })
}

/// Ratio of the two sides of the a-priori estimate at the problem's β.
///
/// # Safety
/// `solution` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rbsde_solution_estimate_ratio(
    solution: *const RbsdeSolution,
    out: *mut f64,
) -> RbsdeStatus {
    guard(|| {
        non_null!(solution, out);
        *out = (*solution).lemma1_ratio;
        RbsdeStatus::Ok
    })
}

/// # Safety
/// `solution` must be a live handle; `iterations` and `converged` writable.
#[no_mangle]
pub unsafe extern "C" fn rbsde_solution_iterations(
    solution: *const RbsdeSolution,
    iterations: *mut usize,
    converged: *mut bool,
) -> RbsdeStatus {
    guard(|| {
        non_null!(solution, iterations, converged);
        let s = &*solution;
        *iterations = s.outcome.iterations();
        *converged = s.outcome.converged();
        RbsdeStatus::Ok
    })
}

/// Number of time steps `N`; valid nodes are `0 <= j <= i <= N`.
///
/// # Safety
/// `solution` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rbsde_solution_steps(
    solution: *const RbsdeSolution,
    out: *mut usize,
) -> RbsdeStatus {
    guard(|| {
        non_null!(solution, out);
        *out = (*solution).outcome.solution.grid().steps();
        RbsdeStatus::Ok
    })
}

/// `Y`, `Z` and `ΔK` at node `(i, j)`.
///
/// # Safety
/// `solution` must be a live handle; `y`, `z` and `dk` writable.
#[no_mangle]
pub unsafe extern "C" fn rbsde_solution_node(
    solution: *const RbsdeSolution,
    i: usize,
    j: usize,
    y: *mut f64,
    z: *mut f64,
    dk: *mut f64,
) -> RbsdeStatus {
    guard(|| {
        non_null!(solution, y, z, dk);
        let sol = &(*solution).outcome.solution;
        if i > sol.grid().steps() || j > i {
            set_error(format!("node ({i}, {j}) outside a grid with {} steps", sol.grid().steps()));
            return RbsdeStatus::OutOfRange;
        }
        *y = sol.y.get(i, j);
        *z = sol.z.get(i, j);
        *dk = sol.dk.get(i, j);
        RbsdeStatus::Ok
    })
}

/// `12/β² + 6/β`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rbsde_contraction_factor(beta: f64, out: *mut f64) -> RbsdeStatus {
    guard(|| {
        non_null!(out);
        match contraction_factor(beta) {
            Ok(v) => {
                *out = v;
                RbsdeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Smallest β whose contraction factor is at most `rho`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rbsde_min_beta_for_factor(rho: f64, out: *mut f64) -> RbsdeStatus {
    guard(|| {
        non_null!(out);
        match min_beta_for_factor(rho) {
            Ok(v) => {
                *out = v;
                RbsdeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// CRR binomial American put.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rbsde_crr_american_put(
    spot: f64,
    strike: f64,
    rate: f64,
    sigma: f64,
    maturity: f64,
    steps: usize,
    out: *mut f64,
) -> RbsdeStatus {
    guard(|| {
        non_null!(out);
        let spec = AmericanPutSpec { spot, strike, rate, sigma, maturity, steps };
        match crr_american_put(&spec) {
            Ok(v) => {
                *out = v;
                RbsdeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
