#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbsde::driver::{CoefficientProcess, DriverSpec, ProblemSpec};
use rbsde::process::{conditional_expectation_into, LatticeProcess, TimeGrid};
use rbsde::{PicardConfig, ProblemConfig};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.json"))
}

pub fn test_fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

pub fn load(name: &str) -> ProblemConfig {
    ProblemConfig::from_path(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Shipped fixtures that pass the blocking assumption checks.
pub const VALID_SUITE: [&str; 9] = [
    "linear",
    "coarse_linear",
    "linear_n12",
    "american_put",
    "reflection",
    "stochastic_rate",
    "brute_force",
    "zero",
    "lipschitz_violation",
];

/// Fixtures whose Lipschitz coefficients do not depend on the state.
pub const DETERMINISTIC_SUITE: [&str; 6] =
    ["linear", "coarse_linear", "linear_n12", "american_put", "reflection", "brute_force"];

pub struct Loaded {
    pub name: String,
    pub config: ProblemConfig,
    pub problem: ProblemSpec,
    pub picard: PicardConfig,
}

pub fn load_problem(name: &str) -> Loaded {
    let config = load(name);
    let problem = config.to_problem().unwrap();
    let picard = config.picard_config();
    Loaded { name: name.to_string(), config, problem, picard }
}

/// A Markovian fixed-driver problem drawn from `seed`: smooth random `g`,
/// `ξ` and `S` with the obstacle clipped to `ξ` at maturity.
pub struct RandomFixture {
    pub problem: ProblemSpec,
    pub g: LatticeProcess,
}

pub fn random_fixture(seed: u64) -> RandomFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = rng.gen_range(1..=12);
    let horizon = rng.gen_range(0.25..2.0);
    let grid = TimeGrid::new(horizon, steps).unwrap();
    let g_c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let x_c: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let s_c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let xi = move |w: f64| x_c[0] + x_c[1] * w + x_c[2] * w.sin();
    let raw_s = move |t: f64, w: f64| s_c[0] + s_c[1] * w + s_c[2] * t + s_c[3] * (w * w);
    let obstacle = move |t: f64, w: f64| {
        if t == horizon {
            raw_s(t, w).min(xi(w))
        } else {
            raw_s(t, w)
        }
    };
    let g = LatticeProcess::from_fn(grid, |t, w| g_c[0] + g_c[1] * w + g_c[2] * t + g_c[3] * w.cos());
    let table = g.clone();
    let driver = DriverSpec::fixed(
        move |t, w| {
            let i = (t / grid.dt()).round() as usize;
            let j = ((w / grid.sqrt_dt() + i as f64) / 2.0).round() as usize;
            table.get(i, j)
        },
        CoefficientProcess::constant(0.5),
        CoefficientProcess::constant(0.0),
        0.5,
    );
    RandomFixture { problem: ProblemSpec::new(grid, driver, xi, obstacle, 20.0).unwrap(), g }
}

/// Backward recursion for the non-reflected linear equation
/// `f = −(r(t, w)·y + θ(t)·z)`, solved implicitly in `y` at each node.
pub fn linear_backward(
    grid: TimeGrid,
    r: impl Fn(f64, f64) -> f64,
    theta: impl Fn(f64) -> f64,
    xi: impl Fn(f64) -> f64,
) -> (LatticeProcess, LatticeProcess) {
    let n = grid.steps();
    let dt = grid.dt();
    let mut y = LatticeProcess::zeros(grid);
    let mut z = LatticeProcess::zeros(grid);
    for j in 0..=n {
        y.set(n, j, xi(grid.brownian(n, j)));
    }
    for i in (0..n).rev() {
        let mean = conditional_expectation_into(y.slice(i + 1), i).unwrap();
        let t = grid.time(i);
        for (j, m) in mean.iter().enumerate() {
            let zij = (y.get(i + 1, j + 1) - y.get(i + 1, j)) / (2.0 * grid.sqrt_dt());
            let w = grid.brownian(i, j);
            z.set(i, j, zij);
            y.set(i, j, (m - theta(t) * zij * dt) / (1.0 + r(t, w) * dt));
        }
    }
    (y, z)
}
