//! Fixed-driver reflected problem on the lattice.
//!
//! For a driver `g` that does not depend on `(y, z)` the solution is the
//! Snell envelope of `∫_0^· g ds + S 1_{·<T} + ξ 1_{·=T}` shifted back by the
//! running integral. On the lattice this is one backward sweep:
//!
//! ```text
//! c   = ½ (Y_up + Y_down) + g·dt
//! Y   = max(S, c)
//! ΔK  = (S − c)⁺
//! Z   = (Y_up − Y_down) / (2√dt)
//! ```

use crate::driver::{location, ProblemSpec};
use crate::error::{RbsdeError, Result};
use crate::process::{conditional_expectation_into, LatticeProcess, NodeMeasure, TimeGrid};

/// Largest `N` accepted by [`brute_force_reference`].
pub const MAX_BRUTE_FORCE_STEPS: usize = 12;

/// Discrete `(Y, Z, K)`. `K` is stored as per-node increments: `ΔK` at node
/// `(i, j)` is the push applied over `[t_i, t_{i+1})`, so `K` along a path is
/// `K_0 = 0`, `K_{i+1} = K_i + ΔK_i`. `Z` and `ΔK` are zero on the terminal slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTriple {
    pub y: LatticeProcess,
    pub z: LatticeProcess,
    pub dk: LatticeProcess,
}

impl SolutionTriple {
    pub fn grid(&self) -> &TimeGrid {
        self.y.grid()
    }

    pub fn y_root(&self) -> f64 {
        self.y.root()
    }

    /// Accumulated `K` along the path with up-counts `js`.
    pub fn k_along(&self, js: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(js.len());
        let mut k = 0.0;
        out.push(k);
        for (i, &j) in js.iter().enumerate().take(js.len().saturating_sub(1)) {
            k += self.dk.get(i, j);
            out.push(k);
        }
        out
    }

    /// `(E[K_T], E[K_T²])`, exact on the lattice.
    pub fn k_terminal_moments(&self) -> (f64, f64) {
        let n = self.grid().steps();
        let mut m1 = vec![0.0; n + 1];
        let mut m2 = vec![0.0; n + 1];
        for i in (0..n).rev() {
            let dk = self.dk.slice(i);
            let mut n1 = Vec::with_capacity(i + 1);
            let mut n2 = Vec::with_capacity(i + 1);
            for j in 0..=i {
                let e1 = 0.5 * (m1[j] + m1[j + 1]);
                let e2 = 0.5 * (m2[j] + m2[j + 1]);
                n1.push(dk[j] + e1);
                n2.push(dk[j] * dk[j] + 2.0 * dk[j] * e1 + e2);
            }
            m1 = n1;
            m2 = n2;
        }
        (m1[0], m2[0])
    }
}

/// Backward Snell sweep for the frozen driver `g`.
pub fn solve_fixed_driver(g: &LatticeProcess, problem: &ProblemSpec) -> Result<SolutionTriple> {
    let grid = *problem.grid();
    if g.grid() != &grid {
        return Err(RbsdeError::GridMismatch);
    }
    if let Some(node) = g.first_non_finite() {
        return Err(RbsdeError::NonFinite { what: "driver", location: location(&grid, node.i, node.j) });
    }
    let n = grid.steps();
    let dt = grid.dt();
    let two_sqrt_dt = 2.0 * grid.sqrt_dt();

    let terminal = problem.terminal_slice();
    for (j, &xi) in terminal.iter().enumerate() {
        let w = grid.brownian(n, j);
        let s = problem.obstacle(grid.horizon(), w);
        if !xi.is_finite() {
            return Err(RbsdeError::NonFinite { what: "terminal value", location: location(&grid, n, j) });
        }
        if s > xi + 1e-12 {
            return Err(RbsdeError::TerminalBelowObstacle {
                location: location(&grid, n, j),
                obstacle: s,
                terminal: xi,
            });
        }
    }

    let mut y = LatticeProcess::zeros(grid);
    let mut z = LatticeProcess::zeros(grid);
    let mut dk = LatticeProcess::zeros(grid);
    y.slice_mut(n).copy_from_slice(&terminal);

    for i in (0..n).rev() {
        let t = grid.time(i);
        let (y_now, y_next) = {
            let next = y.slice(i + 1).to_vec();
            (conditional_expectation_into(&next, i)?, next)
        };
        for j in 0..=i {
            let s = problem.obstacle(t, grid.brownian(i, j));
            if !s.is_finite() {
                return Err(RbsdeError::NonFinite { what: "obstacle", location: location(&grid, i, j) });
            }
            let c = y_now[j] + g.get(i, j) * dt;
            let (value, push) = if s > c { (s, s - c) } else { (c, 0.0) };
            if !value.is_finite() {
                return Err(RbsdeError::NonFinite { what: "Y", location: location(&grid, i, j) });
            }
            y.set(i, j, value);
            dk.set(i, j, push);
            z.set(i, j, (y_next[j + 1] - y_next[j]) / two_sqrt_dt);
        }
    }
    Ok(SolutionTriple { y, z, dk })
}

/// `E[Σ_i |Y_i − S_i| ΔK_i]`, summed exactly against the node measure.
/// Zero whenever `ΔK > 0` forces `Y = S`.
pub fn skorokhod_residual(sol: &SolutionTriple, obstacle: &LatticeProcess) -> Result<f64> {
    let grid = *sol.grid();
    if obstacle.grid() != &grid {
        return Err(RbsdeError::GridMismatch);
    }
    let measure = NodeMeasure::new(&grid);
    let mut total = 0.0;
    for i in 0..=grid.steps() {
        let slice: Vec<f64> =
            (0..=i).map(|j| (sol.y.get(i, j) - obstacle.get(i, j)).abs() * sol.dk.get(i, j)).collect();
        total += measure.expect_slice(i, &slice);
    }
    Ok(total)
}

/// Optimal stopping on the full (non-recombining) path tree.
///
/// Every prefix of up/down moves is a separate node. The value of stopping
/// at step `i` is `G_i + S_i` (or `G_N + ξ` at the horizon) where
/// `G_i = Σ_{k<i} g_k dt` is path-dependent, and backward induction takes the
/// best of stopping and continuing at every prefix. The Doob–Meyer increment
/// `ΔK_i = V_i − E[V_{i+1} | F_i]`, the representation coefficient of the
/// martingale part, and `Y = V − G` are then folded back onto the lattice,
/// checking that all prefixes reaching the same lattice node agree.
pub fn brute_force_reference(g: &LatticeProcess, problem: &ProblemSpec) -> Result<SolutionTriple> {
    let grid = *problem.grid();
    let n = grid.steps();
    if n > MAX_BRUTE_FORCE_STEPS {
        return Err(RbsdeError::TooManySteps { steps: n, max: MAX_BRUTE_FORCE_STEPS });
    }
    if g.grid() != &grid {
        return Err(RbsdeError::GridMismatch);
    }
    let dt = grid.dt();
    let sqrt_dt = grid.sqrt_dt();
    let up_count = |code: usize| code.count_ones() as usize;

    // Running integral of g, level by level. Children of `code` at level i are
    // `code` (down) and `code | 1 << i` (up).
    let mut running: Vec<Vec<f64>> = vec![vec![0.0]];
    for i in 0..n {
        let prev = &running[i];
        let mut next = vec![0.0; 1 << (i + 1)];
        for (code, &acc) in prev.iter().enumerate() {
            let inc = g.get(i, up_count(code)) * dt;
            next[code] = acc + inc;
            next[code | (1 << i)] = acc + inc;
        }
        running.push(next);
    }

    let terminal_of = |code: usize| problem.terminal(grid.brownian(n, up_count(code)));
    let mut value: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    value[n] = (0..1usize << n)
        .map(|code| {
            let s = problem.obstacle(grid.horizon(), grid.brownian(n, up_count(code)));
            let xi = terminal_of(code);
            if s > xi + 1e-12 {
                Err(RbsdeError::TerminalBelowObstacle {
                    location: location(&grid, n, up_count(code)),
                    obstacle: s,
                    terminal: xi,
                })
            } else {
                Ok(running[n][code] + xi)
            }
        })
        .collect::<Result<_>>()?;

    let mut tree_dk: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut tree_z: Vec<Vec<f64>> = vec![Vec::new(); n];
    for i in (0..n).rev() {
        let t = grid.time(i);
        let size = 1usize << i;
        let mut v = vec![0.0; size];
        let mut dk = vec![0.0; size];
        let mut z = vec![0.0; size];
        for code in 0..size {
            let down = value[i + 1][code];
            let up = value[i + 1][code | (1 << i)];
            let continuation = 0.5 * (up + down);
            let stop = running[i][code] + problem.obstacle(t, grid.brownian(i, up_count(code)));
            v[code] = if stop > continuation { stop } else { continuation };
            dk[code] = v[code] - continuation;
            z[code] = (up - down) / (2.0 * sqrt_dt);
        }
        value[i] = v;
        tree_dk[i] = dk;
        tree_z[i] = z;
    }

    let fold = |level: usize, values: &dyn Fn(usize) -> f64| -> Result<Vec<f64>> {
        let mut out: Vec<Option<f64>> = vec![None; level + 1];
        for code in 0..1usize << level {
            let j = up_count(code);
            let v = values(code);
            match out[j] {
                None => out[j] = Some(v),
                Some(first) => {
                    let gap = (v - first).abs();
                    if gap > 1e-9 * (1.0 + first.abs()) {
                        return Err(RbsdeError::NonMarkovian { location: location(&grid, level, j), gap });
                    }
                }
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every up-count is reached")).collect())
    };

    let mut y = Vec::with_capacity(n + 1);
    let mut z = Vec::with_capacity(n + 1);
    let mut dk = Vec::with_capacity(n + 1);
    for i in 0..=n {
        y.push(fold(i, &|code| value[i][code] - running[i][code])?);
        if i < n {
            z.push(fold(i, &|code| tree_z[i][code])?);
            dk.push(fold(i, &|code| tree_dk[i][code])?);
        } else {
            z.push(vec![0.0; n + 1]);
            dk.push(vec![0.0; n + 1]);
        }
    }
    Ok(SolutionTriple {
        y: LatticeProcess::from_slices(grid, y)?,
        z: LatticeProcess::from_slices(grid, z)?,
        dk: LatticeProcess::from_slices(grid, dk)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{CoefficientProcess, DriverSpec};

    fn unit_driver() -> DriverSpec {
        DriverSpec::fixed(
            |_, _| 0.0,
            CoefficientProcess::constant(1.0),
            CoefficientProcess::constant(0.0),
            0.5,
        )
    }

    fn spec(
        n: usize,
        xi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        s: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> ProblemSpec {
        ProblemSpec::new(TimeGrid::new(1.0, n).unwrap(), unit_driver(), xi, s, 1.0).unwrap()
    }

    fn assert_close(a: &LatticeProcess, b: &LatticeProcess, tol: f64) {
        let gap = a.max_abs_diff(b).unwrap();
        assert!(gap <= tol, "gap {gap:e}");
    }

    #[test]
    fn constant_martingale_above_obstacle() {
        let p = spec(10, |_| 1.0, |_, _| -1.0);
        let sol = solve_fixed_driver(&LatticeProcess::zeros(*p.grid()), &p).unwrap();
        assert!(sol.y.nodes().all(|(_, v)| v == 1.0));
        assert!(sol.z.nodes().all(|(_, v)| v == 0.0));
        assert!(sol.dk.nodes().all(|(_, v)| v == 0.0));
    }

    #[test]
    fn constant_driver_integrates_deterministically() {
        let c = 0.7;
        let p = spec(50, |_| 0.0, |_, _| -1e6);
        let g = LatticeProcess::constant(*p.grid(), c);
        let sol = solve_fixed_driver(&g, &p).unwrap();
        let expected = LatticeProcess::from_fn(*p.grid(), |t, _| c * (1.0 - t));
        assert_close(&sol.y, &expected, 1e-12);
        assert_eq!(sol.z.max_abs(), 0.0);
        assert_eq!(sol.dk.max_abs(), 0.0);
    }

    #[test]
    fn decreasing_obstacle_is_tracked() {
        let n = 100;
        let p = spec(n, |_| 0.0, |t, _| 1.0 - t);
        let sol = solve_fixed_driver(&LatticeProcess::zeros(*p.grid()), &p).unwrap();
        let dt = p.grid().dt();
        for i in 0..n {
            for j in 0..=i {
                assert!((sol.y.get(i, j) - (1.0 - p.grid().time(i))).abs() < 1e-12);
                assert!((sol.dk.get(i, j) - dt).abs() < 1e-12);
            }
        }
        let (k_mean, k_sq) = sol.k_terminal_moments();
        assert!((k_mean - 1.0).abs() < 1e-10);
        assert!((k_sq - 1.0).abs() < 1e-10);
    }

    #[test]
    fn linear_terminal_gives_unit_z() {
        let p = spec(16, |w| w, |_, _| -1e6);
        let sol = solve_fixed_driver(&LatticeProcess::zeros(*p.grid()), &p).unwrap();
        for i in 0..16 {
            for &z in sol.z.slice(i) {
                assert!((z - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn terminal_dominance_enforced() {
        let p = spec(4, |w| w, |_, w| w + 0.1);
        let err = solve_fixed_driver(&LatticeProcess::zeros(*p.grid()), &p).unwrap_err();
        match err {
            RbsdeError::TerminalBelowObstacle { location, .. } => {
                assert_eq!((location.i, location.j), (4, 0))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_driver_located() {
        let p = spec(4, |_| 0.0, |_, _| -1.0);
        let mut g = LatticeProcess::zeros(*p.grid());
        g.set(2, 1, f64::NAN);
        match solve_fixed_driver(&g, &p).unwrap_err() {
            RbsdeError::NonFinite { what, location } => {
                assert_eq!(what, "driver");
                assert_eq!((location.i, location.j), (2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn skorokhod_examples() {
        let p = spec(6, |w| (0.3 * w).max(0.0), |t, w| 0.5 - t + 0.3 * w);
        let s = p.obstacle_process();
        let mut sol = solve_fixed_driver(&LatticeProcess::zeros(*p.grid()), &p).unwrap();
        assert_eq!(skorokhod_residual(&sol, &s).unwrap(), 0.0);

        // Plant a push at the root, where Y − S = 0.5.
        let mut shifted = sol.clone();
        shifted.y.set(0, 0, s.get(0, 0) + 0.5);
        shifted.dk.set(0, 0, shifted.dk.get(0, 0) + 1.0);
        assert!(skorokhod_residual(&shifted, &s).unwrap() >= 0.5);

        sol = SolutionTriple {
            y: LatticeProcess::zeros(*p.grid()),
            z: LatticeProcess::zeros(*p.grid()),
            dk: LatticeProcess::zeros(*p.grid()),
        };
        assert_eq!(skorokhod_residual(&sol, &LatticeProcess::zeros(*p.grid())).unwrap(), 0.0);
    }

    #[test]
    fn brute_force_matches_examples() {
        let cases: Vec<(ProblemSpec, f64)> = vec![
            (spec(4, |_| 1.0, |_, _| -1.0), 0.0),
            (spec(4, |_| 0.0, |_, _| -1e6), 0.7),
            (spec(4, |_| 0.0, |t, _| 1.0 - t), 0.0),
        ];
        for (p, c) in cases {
            let g = LatticeProcess::constant(*p.grid(), c);
            let a = solve_fixed_driver(&g, &p).unwrap();
            let b = brute_force_reference(&g, &p).unwrap();
            assert_close(&a.y, &b.y, 1e-12);
            assert_close(&a.z, &b.z, 1e-12);
            assert_close(&a.dk, &b.dk, 1e-12);
        }
    }

    #[test]
    fn brute_force_without_reflection_is_expectation() {
        let p = spec(8, |w| w.max(0.0), |_, _| -10.0);
        let g = LatticeProcess::zeros(*p.grid());
        let b = brute_force_reference(&g, &p).unwrap();
        let measure = NodeMeasure::new(p.grid());
        let expected = measure.expect_slice(8, &p.terminal_slice());
        assert!((b.y_root() - expected).abs() < 1e-14);
    }

    #[test]
    fn single_step_reflection() {
        let p = spec(1, |w| w, |t, _| if t == 0.0 { 0.4 } else { -5.0 });
        let g = LatticeProcess::zeros(*p.grid());
        let b = brute_force_reference(&g, &p).unwrap();
        assert_eq!(b.y_root(), 0.4);
        assert!((b.dk.get(0, 0) - 0.4).abs() < 1e-15);
        let a = solve_fixed_driver(&g, &p).unwrap();
        assert_eq!(a.y_root(), 0.4);
    }

    #[test]
    fn brute_force_rejects_large_grids() {
        let p = spec(13, |_| 0.0, |_, _| -1.0);
        assert!(matches!(
            brute_force_reference(&LatticeProcess::zeros(*p.grid()), &p),
            Err(RbsdeError::TooManySteps { .. })
        ));
    }
}
