//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Set `RBSDE_FREEZE_BASELINE=1` to rewrite the frozen estimate-ratio baseline
//! instead of checking against it.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use common::*;
use rbsde::cli::{sweep_beta, y_root_spread, OracleFixtures, RunConfig};
use rbsde::driver::{validate, ProbeConfig, ProblemSpec};
use rbsde::estimates::lemma1_sides;
use rbsde::oracle::{brute_force_reference, crr_american_put, linear_bsde_value, MAX_BRUTE_FORCE_STEPS};
use rbsde::picard::{beta_distance, default_beta, picard_solve_with, propagated_terminal_guess};
use rbsde::process::{LatticeProcess, PathSet};
use rbsde::snell::{skorokhod_residual, solve_fixed_driver, SolutionTriple};
use rbsde::{picard_solve, PicardConfig, PicardOutcome};
use serde::{Deserialize, Serialize};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn solve(p: &ProblemSpec, c: &PicardConfig) -> PicardOutcome {
    picard_solve(p, c).unwrap()
}

fn random_suite() -> Vec<RandomFixture> {
    (0..16).map(|s| random_fixture(1000 + s)).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let suite = random_suite();
    let mut worst = 0.0f64;
    for (k, f) in suite.iter().enumerate() {
        ensure(f.problem.grid().steps() <= MAX_BRUTE_FORCE_STEPS, || "fixture too large".into())?;
        let a = solve_fixed_driver(&f.g, &f.problem).map_err(|e| e.to_string())?;
        let b = brute_force_reference(&f.g, &f.problem).map_err(|e| e.to_string())?;
        let gap =
            a.y.max_abs_diff(&b.y)
                .unwrap()
                .max(a.z.max_abs_diff(&b.z).unwrap())
                .max(a.dk.max_abs_diff(&b.dk).unwrap());
        ensure(gap <= 1e-12, || format!("fixture {k}: node gap {gap:e}"))?;
        worst = worst.max(gap);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!("{} fixtures, max node gap {worst:e}, {secs:.2}s", suite.len()))
}

fn reflection_contract(sol: &SolutionTriple, problem: &ProblemSpec) -> Result<(), String> {
    let s = problem.obstacle_process();
    let grid = *problem.grid();
    let mut min_gap = f64::INFINITY;
    for i in 0..=grid.steps() {
        for j in 0..=i {
            min_gap = min_gap.min(sol.y.get(i, j) - s.get(i, j));
            ensure(sol.dk.get(i, j) >= 0.0, || format!("negative dK at ({i}, {j})"))?;
        }
    }
    ensure(min_gap >= -1e-12, || format!("min(Y - S) = {min_gap:e}"))?;
    let root_path = vec![0; grid.steps() + 1];
    ensure(sol.k_along(&root_path)[0] == 0.0, || "K at the root is not 0".into())?;
    let residual = skorokhod_residual(sol, &s).unwrap();
    let scale = 1.0 + sol.y.max_abs();
    ensure(residual <= 1e-10 * scale, || format!("Skorokhod sum {residual:e}"))
}

fn criterion_2() -> Outcome {
    let mut count = 0;
    for f in random_suite() {
        let sol = solve_fixed_driver(&f.g, &f.problem).unwrap();
        reflection_contract(&sol, &f.problem)?;
        let bf = brute_force_reference(&f.g, &f.problem).unwrap();
        reflection_contract(&bf, &f.problem)?;
        count += 2;
    }
    for name in VALID_SUITE {
        let l = load_problem(name);
        let out = solve(&l.problem, &l.picard);
        reflection_contract(&out.solution, &l.problem).map_err(|e| format!("{name}: {e}"))?;
        count += 1;
    }
    Ok(format!("{count} solver outputs checked"))
}

fn criterion_3() -> Outcome {
    let beta = default_beta();
    let tol = 1e-10;
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for name in DETERMINISTIC_SUITE {
        let l = load_problem(name);
        ensure(l.problem.driver().is_deterministic(), || format!("{name} is not deterministic"))?;
        let problem = l.problem.with_beta(beta).unwrap();
        let config = PicardConfig { tol, ..l.picard.clone() };
        let out = solve(&problem, &config);
        ensure(out.converged(), || format!("{name}: no convergence"))?;
        if let Some(r) = out.trace.max_ratio(3, 1e-14) {
            ensure(r <= 0.55, || format!("{name}: ratio {r}"))?;
            worst = worst.max(r);
        }
        let d1 = out.trace.records[0].distance;
        let bound = if d1 > tol { ((tol / d1).ln() / 0.55f64.ln()).ceil() as usize + 2 } else { 2 };
        ensure(out.iterations() <= bound, || {
            format!("{name}: {} iterations, bound {bound}", out.iterations())
        })?;
        lines.push(format!("{name}:{}/{bound}", out.iterations()));
    }
    Ok(format!("beta {beta:.6}, max ratio {worst:.3e}, iterations {}", lines.join(" ")))
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    for name in VALID_SUITE {
        let l = load_problem(name);
        let a = solve(&l.problem, &l.picard);
        let guess = propagated_terminal_guess(&l.problem).unwrap();
        let b = solve(&l.problem, &PicardConfig { initial: Some(guess), ..l.picard.clone() });
        ensure(a.converged() && b.converged(), || format!("{name}: no convergence"))?;
        let paths = PathSet::auto(l.picard.seed, l.picard.paths, l.problem.grid()).unwrap();
        let d =
            beta_distance((&a.solution.y, &a.solution.z), (&b.solution.y, &b.solution.z), &l.problem, &paths)
                .unwrap()
                .value;
        ensure(d <= 10.0 * l.picard.tol, || format!("{name}: distance {d:e}"))?;
        let (ka, kb) = (a.solution.k_terminal_moments().0, b.solution.k_terminal_moments().0);
        ensure((ka - kb).abs() <= 1e-6 * (1.0 + ka.abs()), || format!("{name}: K_T {ka} vs {kb}"))?;
        worst = worst.max(d);
    }
    let run = RunConfig {
        config: fixture_path("linear"),
        out: std::env::temp_dir(),
        beta: None,
        steps: None,
        tol: None,
        max_iters: None,
        seed: None,
        paths: None,
    };
    let prep = run.prepare().unwrap();
    let rows = sweep_beta(&prep, &[8.0, 12.0, 20.0, 40.0]).unwrap();
    ensure(rows.iter().all(|r| r.converged), || "a sweep row did not converge".into())?;
    let spread = y_root_spread(&rows).unwrap();
    ensure(spread <= 1e-6, || format!("sweep spread {spread:e}"))?;
    Ok(format!("max guess distance {worst:e}, sweep spread {spread:e}"))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let l = load_problem("linear");
    let out = solve(&l.problem, &l.picard);
    let secs = start.elapsed().as_secs_f64();
    let y = out.solution.y_root();
    let oracle = linear_bsde_value(|_| 0.05, 1.0, l.problem.grid());
    ensure((oracle - 0.951229).abs() < 1e-6, || format!("oracle {oracle}"))?;
    ensure((y - 0.951229).abs() <= 1e-3, || format!("Y_root {y}"))?;
    ensure(secs < 5.0, || format!("took {secs:.2}s"))?;
    Ok(format!("Y_root {y:.9}, {secs:.2}s"))
}

fn criterion_6() -> Outcome {
    let frozen: OracleFixtures =
        serde_json::from_str(&std::fs::read_to_string(test_fixture_path("oracle_values.json")).unwrap())
            .unwrap();
    let put = frozen.american_put.iter().find(|p| p.spec.steps == 500).ok_or("no frozen N = 500 value")?;
    ensure((put.value - 4.491613370684426).abs() < 1e-9, || format!("frozen value {}", put.value))?;
    let recomputed = crr_american_put(&put.spec).unwrap();
    ensure((recomputed - put.value).abs() < 1e-9, || format!("CRR drifted to {recomputed}"))?;

    let start = Instant::now();
    let l = load_problem("american_put");
    ensure(l.config.american_put() == Some(put.spec), || "fixture parameters differ".into())?;
    let out = solve(&l.problem, &l.picard);
    let secs = start.elapsed().as_secs_f64();
    let y = out.solution.y_root();
    let rel = (y - put.value).abs() / put.value;
    ensure(out.converged(), || "no convergence".into())?;
    ensure(rel <= 0.01, || format!("Y_root {y}, relative gap {rel:e}"))?;
    ensure(secs < 60.0, || format!("took {secs:.2}s"))?;
    Ok(format!("Y_root {y:.6} vs CRR {:.6}, relative gap {rel:.2e}, {secs:.2}s", put.value))
}

#[derive(Debug, Serialize, Deserialize)]
struct BaselineEntry {
    ratio: f64,
    /// `brute-force` when computed with the path-tree inner solver, `lattice` otherwise.
    source: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Baseline {
    beta: f64,
    max_ratio: f64,
    ratios: BTreeMap<String, BaselineEntry>,
}

const LEMMA_BETA: f64 = 20.0;

fn lemma_ratio(problem: &ProblemSpec, config: &PicardConfig, brute: bool) -> f64 {
    let out = if brute {
        picard_solve_with(problem, config, brute_force_reference).unwrap()
    } else {
        solve(problem, config)
    };
    let paths = PathSet::auto(config.seed, config.paths, problem.grid()).unwrap();
    lemma1_sides(&out.solution, problem, &paths).unwrap().ratio
}

fn freeze_baseline() -> Baseline {
    let mut ratios = BTreeMap::new();
    for name in VALID_SUITE {
        let l = load_problem(name);
        let problem = l.problem.with_beta(LEMMA_BETA).unwrap();
        let brute = problem.grid().steps() <= MAX_BRUTE_FORCE_STEPS;
        let ratio = lemma_ratio(&problem, &l.picard, brute);
        let source = if brute { "brute-force" } else { "lattice" };
        ratios.insert(name.to_string(), BaselineEntry { ratio, source: source.into() });
    }
    let max_ratio = ratios.values().map(|e| e.ratio).fold(0.0, f64::max);
    Baseline { beta: LEMMA_BETA, max_ratio, ratios }
}

fn criterion_7() -> Outcome {
    let path = test_fixture_path("lemma1_baseline.json");
    if std::env::var_os("RBSDE_FREEZE_BASELINE").is_some() {
        let text = serde_json::to_string_pretty(&freeze_baseline()).unwrap();
        std::fs::write(&path, text + "\n").unwrap();
    }
    let baseline: Baseline = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    ensure(baseline.beta == LEMMA_BETA, || "baseline beta differs".into())?;
    let linear12 = baseline.ratios.get("linear_n12").ok_or("no linear_n12 baseline")?;
    ensure(linear12.source == "brute-force" && linear12.ratio <= 50.0, || {
        format!("linear_n12 baseline {linear12:?}")
    })?;

    let mut max_ratio = 0.0f64;
    let mut worst_scale = 0.0f64;
    for name in VALID_SUITE {
        let l = load_problem(name);
        let problem = l.problem.with_beta(LEMMA_BETA).unwrap();
        let ratio = lemma_ratio(&problem, &l.picard, false);
        ensure(ratio.is_finite(), || format!("{name}: ratio {ratio}"))?;
        let frozen = baseline.ratios.get(name).ok_or_else(|| format!("{name}: no baseline"))?;
        ensure(ratio <= frozen.ratio * 1.05 + 1e-12, || {
            format!("{name}: ratio {ratio} above baseline {}", frozen.ratio)
        })?;
        for lambda in [0.5, 3.0, 10.0] {
            let scaled = problem.scaled(lambda).unwrap();
            let config = PicardConfig { tol: l.picard.tol * lambda * lambda, ..l.picard.clone() };
            let r = lemma_ratio(&scaled, &config, false);
            let rel = if ratio == 0.0 { r.abs() } else { (r - ratio).abs() / ratio };
            ensure(rel <= 1e-9, || format!("{name}: lambda {lambda} moved ratio by {rel:e}"))?;
            worst_scale = worst_scale.max(rel);
        }
        max_ratio = max_ratio.max(ratio);
    }
    ensure(max_ratio <= baseline.max_ratio * 1.05, || format!("max ratio {max_ratio}"))?;
    Ok(format!(
        "max ratio {max_ratio:.4} (baseline {:.4}), worst scale drift {worst_scale:.1e}",
        baseline.max_ratio
    ))
}

fn cli_blocks(name: &str, node: &str) -> Result<(), String> {
    let out_dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rbsde"))
        .arg("solve")
        .arg("--config")
        .arg(fixture_path(name))
        .arg("--out")
        .arg(out_dir.path())
        .output()
        .unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr);
    ensure(out.status.code() == Some(1), || format!("{name}: exit {:?}", out.status.code()))?;
    ensure(stderr.contains(node), || format!("{name}: stderr lacks {node}: {stderr}"))?;
    ensure(!out_dir.path().join("solution.csv").exists(), || format!("{name}: solved anyway"))
}

fn criterion_8() -> Outcome {
    let probe = ProbeConfig::default();
    let mut found = Vec::new();
    for (name, tag, expected) in [("h2_violation", "H2", (0, 0)), ("h5_violation", "H5", (10, 0))] {
        let l = load_problem(name);
        let paths = PathSet::auto(0, 1000, l.problem.grid()).unwrap();
        let report = validate(&l.problem, &paths, &probe).unwrap();
        ensure(report.blocking, || format!("{name}: not blocking"))?;
        let entry = report.entry(tag).ok_or_else(|| format!("{name}: no {tag} entry"))?;
        let loc = entry.location.ok_or_else(|| format!("{name}: no location"))?;
        ensure(entry.blocking && (loc.i, loc.j) == expected, || {
            format!("{name}: {tag} located at ({}, {})", loc.i, loc.j)
        })?;
        cli_blocks(name, &format!("i={}, j={}", expected.0, expected.1))?;
        found.push(format!("{tag} at {loc}"));
    }
    Ok(found.join("; "))
}

fn criterion_9() -> Outcome {
    let floor = -1e6;
    let cases: Vec<(&str, ProblemSpec, (LatticeProcess, LatticeProcess))> = {
        let linear = load_problem("linear");
        let grid = *linear.problem.grid();
        let bf = load_problem("brute_force");
        let bgrid = *bf.problem.grid();
        let sr = load_problem("stochastic_rate");
        let sgrid = *sr.problem.grid();
        let lin = |p: &ProblemSpec| p.clone();
        vec![
            ("linear", lin(&linear.problem), linear_backward(grid, |_, _| 0.05, |_| 0.0, |_| 1.0)),
            (
                "brute_force",
                bf.problem.clone(),
                linear_backward(bgrid, |t, _| 0.1 + 0.2 * t, |_| 0.3, |w| 0.5 - 0.4 * w),
            ),
            (
                "stochastic_rate",
                sr.problem.clone(),
                linear_backward(sgrid, |_, w| 0.02 + 0.05 * w.abs(), |_| 0.0, |w| 1.0 + 0.3 * w),
            ),
        ]
    };
    let mut worst = 0.0f64;
    for (name, problem, (y_ref, z_ref)) in cases {
        let p = problem.with_obstacle(move |_, _| floor).unwrap();
        let config = PicardConfig { tol: 1e-24, max_iters: 500, ..PicardConfig::default() };
        let out = solve(&p, &config);
        ensure(out.converged(), || format!("{name}: no convergence"))?;
        let gap =
            out.solution.y.max_abs_diff(&y_ref).unwrap().max(out.solution.z.max_abs_diff(&z_ref).unwrap());
        ensure(gap <= 1e-9, || format!("{name}: gap {gap:e}"))?;
        ensure(out.solution.dk.max_abs() == 0.0, || format!("{name}: K is not identically 0"))?;
        worst = worst.max(gap);
    }
    Ok(format!("max (Y, Z) gap {worst:e}, K = 0"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("brute-force equivalence", criterion_1),
        ("reflection contract", criterion_2),
        ("contraction rate", criterion_3),
        ("uniqueness", criterion_4),
        ("linear-driver oracle", criterion_5),
        ("american put", criterion_6),
        ("a-priori estimate ratio", criterion_7),
        ("assumption gate", criterion_8),
        ("degeneration", criterion_9),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
