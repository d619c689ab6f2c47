use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{RbsdeError, Result};

use super::grid::{LatticeNode, TimeGrid};

/// A lattice path as a sequence of fair up (`true`) / down (`false`) moves.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatticePath {
    moves: Vec<bool>,
}

impl LatticePath {
    pub fn new(moves: Vec<bool>) -> Self {
        Self { moves }
    }

    pub fn moves(&self) -> &[bool] {
        &self.moves
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    /// The `N + 1` nodes visited, starting at the root.
    pub fn node_sequence(&self) -> Vec<LatticeNode> {
        let mut out = Vec::with_capacity(self.moves.len() + 1);
        let mut node = LatticeNode::ROOT;
        out.push(node);
        for &up in &self.moves {
            node = if up { node.up() } else { node.down() };
            out.push(node);
        }
        out
    }

    /// Up-move count at each time index.
    pub fn up_counts(&self) -> Vec<usize> {
        let mut js = Vec::with_capacity(self.moves.len() + 1);
        let mut j = 0;
        js.push(j);
        for &up in &self.moves {
            j += usize::from(up);
            js.push(j);
        }
        js
    }
}

/// `count` independent fair paths of `steps` moves from a ChaCha8 stream.
/// The same seed reproduces the same paths bit for bit on every platform.
pub fn sample_paths(seed: u64, count: usize, steps: usize) -> Result<Vec<LatticePath>> {
    if count == 0 {
        return Err(RbsdeError::InvalidArgument("path count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut paths = Vec::with_capacity(count);
    for _ in 0..count {
        let mut moves = Vec::with_capacity(steps);
        let mut bits = 0u64;
        for k in 0..steps {
            if k % 64 == 0 {
                bits = rng.next_u64();
            }
            moves.push(bits & 1 == 1);
            bits >>= 1;
        }
        paths.push(LatticePath::new(moves));
    }
    Ok(paths)
}

pub fn sample_lattice_paths(seed: u64, count: usize, grid: &TimeGrid) -> Result<Vec<LatticePath>> {
    sample_paths(seed, count, grid.steps())
}

/// Expectation over paths: either every path of the tree with weight `2^-N`,
/// or an explicit Monte Carlo sample.
#[derive(Debug, Clone)]
pub enum PathSet {
    Exhaustive { steps: usize },
    Sampled(Vec<LatticePath>),
}

/// Largest `N` for which [`PathSet::Exhaustive`] is allowed.
pub const MAX_EXHAUSTIVE_STEPS: usize = 24;

/// Estimate of an expectation and its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub exact: bool,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0, exact: true }
    }
}

impl PathSet {
    pub fn exhaustive(grid: &TimeGrid) -> Result<Self> {
        if grid.steps() > MAX_EXHAUSTIVE_STEPS {
            return Err(RbsdeError::TooManySteps { steps: grid.steps(), max: MAX_EXHAUSTIVE_STEPS });
        }
        Ok(PathSet::Exhaustive { steps: grid.steps() })
    }

    pub fn sampled(seed: u64, count: usize, grid: &TimeGrid) -> Result<Self> {
        Ok(PathSet::Sampled(sample_lattice_paths(seed, count, grid)?))
    }

    /// Enumerates the whole tree when it has no more than `count` paths,
    /// otherwise samples `count` paths from `seed`.
    pub fn auto(seed: u64, count: usize, grid: &TimeGrid) -> Result<Self> {
        let n = grid.steps();
        if n <= MAX_EXHAUSTIVE_STEPS && (1usize << n) <= count {
            Ok(PathSet::Exhaustive { steps: n })
        } else {
            Self::sampled(seed, count, grid)
        }
    }

    pub fn steps(&self) -> Option<usize> {
        match self {
            PathSet::Exhaustive { steps } => Some(*steps),
            PathSet::Sampled(paths) => paths.first().map(LatticePath::len),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PathSet::Exhaustive { steps } => 1usize << steps,
            PathSet::Sampled(paths) => paths.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_exhaustive(&self) -> bool {
        matches!(self, PathSet::Exhaustive { .. })
    }

    pub(crate) fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.is_empty() {
            return Err(RbsdeError::EmptyPaths);
        }
        match self.steps() {
            Some(n) if n == grid.steps() => Ok(()),
            _ => Err(RbsdeError::GridMismatch),
        }
    }

    /// Averages `f(up_counts)` over the path set. Summation is sequential in
    /// path order, so results are reproducible bit for bit.
    pub fn average(&self, mut f: impl FnMut(&[usize]) -> f64) -> Result<Estimate> {
        if self.is_empty() {
            return Err(RbsdeError::EmptyPaths);
        }
        match self {
            PathSet::Exhaustive { steps } => {
                let n = *steps;
                let total = 1usize << n;
                let mut js = vec![0usize; n + 1];
                let mut sum = 0.0;
                for code in 0..total {
                    for i in 0..n {
                        js[i + 1] = js[i] + ((code >> i) & 1);
                    }
                    sum += f(&js);
                }
                Ok(Estimate::exact(sum / total as f64))
            }
            PathSet::Sampled(paths) => {
                let m = paths.len() as f64;
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for p in paths {
                    let v = f(&p.up_counts());
                    sum += v;
                    sum_sq += v * v;
                }
                let mean = sum / m;
                let std_error = if paths.len() > 1 {
                    let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
                    (var / m).sqrt()
                } else {
                    f64::INFINITY
                };
                Ok(Estimate { value: mean, std_error, exact: false })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_sampling_is_reproducible() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let a = sample_lattice_paths(7, 3, &g).unwrap();
        let b = sample_lattice_paths(7, 3, &g).unwrap();
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|p| p.len() == 2));
        assert_eq!(a, b);
    }

    #[test]
    fn empty_grid_gives_root_path() {
        let p = sample_paths(7, 1, 0).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0].is_empty());
        assert_eq!(p[0].node_sequence(), vec![LatticeNode::ROOT]);
    }

    #[test]
    fn zero_count_rejected() {
        assert!(sample_paths(1, 0, 3).is_err());
    }

    #[test]
    fn first_move_is_fair() {
        // 3-sigma band for Binomial(10^4, 1/2): 0.5 ± 0.015.
        for seed in [0u64, 1, 7, 42, 12345] {
            let p = sample_paths(seed, 10_000, 1).unwrap();
            let ups = p.iter().filter(|p| p.moves()[0]).count() as f64 / 1e4;
            assert!((0.47..=0.53).contains(&ups), "seed {seed}: {ups}");
        }
    }

    #[test]
    fn node_sequence_steps_by_one() {
        let p = sample_paths(3, 5, 40).unwrap();
        for path in &p {
            let nodes = path.node_sequence();
            assert_eq!(nodes[0], LatticeNode::ROOT);
            for w in nodes.windows(2) {
                assert_eq!(w[1].i, w[0].i + 1);
                assert!(w[1].j == w[0].j || w[1].j == w[0].j + 1);
            }
        }
    }

    #[test]
    fn exhaustive_average_of_terminal_brownian_square_is_horizon() {
        let g = TimeGrid::new(1.5, 10).unwrap();
        let set = PathSet::exhaustive(&g).unwrap();
        let e = set.average(|js| g.brownian(10, js[10]).powi(2)).unwrap();
        assert!(e.exact);
        assert!((e.value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn auto_switches_on_count() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        assert!(PathSet::auto(1, 1024, &g).unwrap().is_exhaustive());
        assert!(!PathSet::auto(1, 1023, &g).unwrap().is_exhaustive());
    }
}
