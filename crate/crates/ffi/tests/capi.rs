use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use rbsde_ffi::*;

const LINEAR: &str = r#"{
    "grid": {"T": 1.0, "N": 200}, "beta": 20.0, "epsilon": 0.05,
    "driver": {"kind": "linear", "r": 0.05},
    "terminal": {"kind": "constant", "value": 1.0},
    "obstacle": {"kind": "constant", "value": -10.0},
    "solver": {"tol": 1e-12}
}"#;

const H5: &str = r#"{
    "grid": {"T": 1.0, "N": 10}, "epsilon": 0.1,
    "driver": {"kind": "zero"},
    "terminal": {"kind": "zero"},
    "obstacle": {"kind": "constant", "value": 0.5}
}"#;

fn last_error() -> String {
    let p = rbsde_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn parse(json: &str) -> (RbsdeStatus, *mut RbsdeProblem) {
    let text = CString::new(json).unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { rbsde_problem_from_json(text.as_ptr(), &mut out) };
    (status, out)
}

#[test]
fn solve_round_trip() {
    let (status, problem) = parse(LINEAR);
    assert_eq!(status, RbsdeStatus::Ok);
    assert!(rbsde_last_error_message().is_null());
    let mut sol = ptr::null_mut();
    unsafe {
        assert_eq!(rbsde_solve(problem, &mut sol), RbsdeStatus::Ok);
        let (mut y, mut k, mut ratio) = (0.0, -1.0, -1.0);
        assert_eq!(rbsde_solution_y_root(sol, &mut y), RbsdeStatus::Ok);
        assert!((y - 0.951229).abs() < 1e-3);
        rbsde_solution_k_terminal_mean(sol, &mut k);
        assert_eq!(k, 0.0);
        rbsde_solution_estimate_ratio(sol, &mut ratio);
        assert!(ratio.is_finite() && ratio > 0.0);

        let (mut iters, mut converged) = (0usize, false);
        rbsde_solution_iterations(sol, &mut iters, &mut converged);
        assert!(converged && iters >= 2);

        let mut n = 0usize;
        rbsde_solution_steps(sol, &mut n);
        assert_eq!(n, 200);
        let (mut yy, mut z, mut dk) = (0.0, 0.0, 0.0);
        assert_eq!(rbsde_solution_node(sol, 200, 3, &mut yy, &mut z, &mut dk), RbsdeStatus::Ok);
        assert_eq!((yy, z, dk), (1.0, 0.0, 0.0));
        assert_eq!(rbsde_solution_node(sol, 3, 4, &mut yy, &mut z, &mut dk), RbsdeStatus::OutOfRange);
        assert!(last_error().contains("(3, 4)"));

        rbsde_solution_free(sol);
        rbsde_problem_free(problem);
    }
}

#[test]
fn not_converged_still_returns_solution() {
    let (_, problem) = parse(LINEAR);
    let mut sol = ptr::null_mut();
    unsafe {
        assert_eq!(rbsde_problem_set_solver(problem, 1e-12, 1), RbsdeStatus::Ok);
        assert_eq!(rbsde_problem_set_solver(problem, 0.0, 1), RbsdeStatus::InvalidArgument);
        assert_eq!(rbsde_solve(problem, &mut sol), RbsdeStatus::NotConverged);
        assert!(!sol.is_null());
        let mut y = 0.0;
        rbsde_solution_y_root(sol, &mut y);
        assert_eq!(y, 1.0);
        rbsde_solution_free(sol);
        rbsde_problem_free(problem);
    }
}

#[test]
fn assumption_violation_is_located() {
    let (status, problem) = parse(H5);
    assert_eq!(status, RbsdeStatus::Ok);
    let mut sol = ptr::null_mut();
    unsafe {
        assert_eq!(rbsde_problem_check(problem), RbsdeStatus::AssumptionViolation);
        assert!(last_error().contains("i=10"));
        assert_eq!(rbsde_solve(problem, &mut sol), RbsdeStatus::AssumptionViolation);
        assert!(sol.is_null());
        rbsde_problem_free(problem);
    }
}

#[test]
fn error_codes() {
    let (status, problem) = parse("{\"grid\": 3}");
    assert_eq!(status, RbsdeStatus::InvalidConfig);
    assert!(problem.is_null());
    assert!(!last_error().is_empty());

    let bad = [0xffu8, 0];
    let mut out = ptr::null_mut();
    let status = unsafe { rbsde_problem_from_json(bad.as_ptr().cast(), &mut out) };
    assert_eq!(status, RbsdeStatus::InvalidUtf8);

    let status = unsafe { rbsde_problem_from_json(ptr::null(), &mut out) };
    assert_eq!(status, RbsdeStatus::NullPointer);
    assert!(last_error().contains("json"));

    unsafe {
        rbsde_problem_free(ptr::null_mut());
        rbsde_solution_free(ptr::null_mut());
        assert_eq!(rbsde_solution_y_root(ptr::null(), &mut 0.0), RbsdeStatus::NullPointer);
    }
}

#[test]
fn scalar_helpers() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(rbsde_contraction_factor(12.0, &mut v), RbsdeStatus::Ok);
        assert!((v - 7.0 / 12.0).abs() < 1e-15);
        assert_eq!(rbsde_contraction_factor(0.0, &mut v), RbsdeStatus::InvalidArgument);
        assert_eq!(rbsde_min_beta_for_factor(1.0, &mut v), RbsdeStatus::Ok);
        assert!((v - 7.58257569495584).abs() < 1e-12);
        assert_eq!(rbsde_crr_american_put(100.0, 100.0, 0.06, 0.2, 0.5, 500, &mut v), RbsdeStatus::Ok);
        assert!((v - 4.491613370684426).abs() < 1e-9);
        assert_eq!(
            rbsde_crr_american_put(100.0, 100.0, 0.06, 0.2, 0.5, 0, &mut v),
            RbsdeStatus::InvalidArgument
        );
    }
}

/// Compiles `smoke.c` against the generated header and the static library.
#[test]
fn c_smoke_program() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("librbsde_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("converged=1"));
}
