//! Periodic square lattice with Moore neighborhoods and one shared weight
//! per undirected edge.
//!
//! Cells are indexed row-major. Each cell owns the edges to its E, S, SE and
//! SW neighbors, so the weight array has exactly `4 * side²` entries and every
//! undirected edge is stored once.

use rand::RngCore;

use crate::draws::{shuffle, uniform_index};

use crate::model::{CoevParams, Placement, SeedingSpec, Strategy};

/// Neighbor directions in their fixed iteration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    NorthWest,
    North,
    NorthEast,
    West,
    East,
    SouthWest,
    South,
    SouthEast,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::NorthWest,
        Direction::North,
        Direction::NorthEast,
        Direction::West,
        Direction::East,
        Direction::SouthWest,
        Direction::South,
        Direction::SouthEast,
    ];

    /// (row, column) offset.
    pub fn offset(self) -> (isize, isize) {
        match self {
            Direction::NorthWest => (-1, -1),
            Direction::North => (-1, 0),
            Direction::NorthEast => (-1, 1),
            Direction::West => (0, -1),
            Direction::East => (0, 1),
            Direction::SouthWest => (1, -1),
            Direction::South => (1, 0),
            Direction::SouthEast => (1, 1),
        }
    }

    /// Which cell stores the edge in this direction (`true` = the origin
    /// cell itself) and in which of its four slots.
    fn storage(self) -> (bool, usize) {
        match self {
            Direction::East => (true, SLOT_E),
            Direction::South => (true, SLOT_S),
            Direction::SouthEast => (true, SLOT_SE),
            Direction::SouthWest => (true, SLOT_SW),
            Direction::West => (false, SLOT_E),
            Direction::North => (false, SLOT_S),
            Direction::NorthWest => (false, SLOT_SE),
            Direction::NorthEast => (false, SLOT_SW),
        }
    }
}

const SLOT_E: usize = 0;
const SLOT_S: usize = 1;
const SLOT_SE: usize = 2;
const SLOT_SW: usize = 3;

pub const MIN_SIDE: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LatticeError {
    #[error("lattice side must be at least {MIN_SIDE} (got {0})")]
    InvalidSide(usize),
    #[error("cells {0} and {1} are not Moore neighbors")]
    NotAdjacent(usize, usize),
    #[error("expected {expected} strategies, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("malformed text grid: {0}")]
    Malformed(String),
}

/// Toroidal neighbor of `x` in direction `dir`.
#[inline]
pub fn neighbor_of(side: usize, x: usize, dir: Direction) -> usize {
    let (dr, dc) = dir.offset();
    let s = side as isize;
    let r = (x / side) as isize;
    let c = (x % side) as isize;
    let nr = (r + dr).rem_euclid(s) as usize;
    let nc = (c + dc).rem_euclid(s) as usize;
    nr * side + nc
}

/// The eight Moore neighbors of `x` in NW, N, NE, W, E, SW, S, SE order.
pub fn neighbors(side: usize, x: usize) -> [usize; 8] {
    debug_assert!(x < side * side, "cell {x} outside a {side}x{side} lattice");
    Direction::ALL.map(|d| neighbor_of(side, x, d))
}

#[derive(Clone, Debug)]
pub struct Grid {
    side: usize,
    strategies: Vec<Strategy>,
    weights: Vec<f64>,
    neighbors: Vec<[u32; 8]>,
    edges: Vec<[u32; 8]>,
    counts: [usize; 3],
    coev: CoevParams,
}

impl Grid {
    /// A lattice with the given strategies and every weight at 1.0.
    pub fn from_strategies(
        side: usize,
        strategies: Vec<Strategy>,
        coev: CoevParams,
    ) -> Result<Self, LatticeError> {
        if side < MIN_SIDE {
            return Err(LatticeError::InvalidSide(side));
        }
        let n = side * side;
        if strategies.len() != n {
            return Err(LatticeError::WrongLength {
                expected: n,
                got: strategies.len(),
            });
        }
        assert!(n <= u32::MAX as usize / 4, "lattice too large");

        let mut neighbor_table = Vec::with_capacity(n);
        let mut edge_table = Vec::with_capacity(n);
        for x in 0..n {
            let mut nb = [0u32; 8];
            let mut ed = [0u32; 8];
            for (k, dir) in Direction::ALL.into_iter().enumerate() {
                let y = neighbor_of(side, x, dir);
                let (own, slot) = dir.storage();
                let owner = if own { x } else { y };
                nb[k] = y as u32;
                ed[k] = (4 * owner + slot) as u32;
            }
            neighbor_table.push(nb);
            edge_table.push(ed);
        }

        let mut counts = [0usize; 3];
        for s in &strategies {
            counts[s.code() as usize] += 1;
        }

        Ok(Grid {
            side,
            strategies,
            weights: vec![1.0; 4 * n],
            neighbors: neighbor_table,
            edges: edge_table,
            counts,
            coev,
        })
    }

    /// A monomorphic lattice.
    pub fn uniform(side: usize, s: Strategy, coev: CoevParams) -> Result<Self, LatticeError> {
        Self::from_strategies(side, vec![s; side * side], coev)
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn population(&self) -> usize {
        self.strategies.len()
    }

    #[inline]
    pub fn coev(&self) -> CoevParams {
        self.coev
    }

    #[inline]
    pub fn strategies(&self) -> &[Strategy] {
        &self.strategies
    }

    #[inline]
    pub fn strategy(&self, x: usize) -> Strategy {
        self.strategies[x]
    }

    pub fn set_strategy(&mut self, x: usize, s: Strategy) {
        let old = self.strategies[x];
        self.counts[old.code() as usize] -= 1;
        self.counts[s.code() as usize] += 1;
        self.strategies[x] = s;
    }

    /// Population counts indexed by strategy code.
    #[inline]
    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    /// All `4N` edge weights in storage order.
    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean_weight(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.weights.len() as f64
    }

    pub fn neighbors(&self, x: usize) -> [usize; 8] {
        self.neighbors[x].map(|y| y as usize)
    }

    #[inline]
    pub(crate) fn neighbor_row(&self, x: usize) -> &[u32; 8] {
        &self.neighbors[x]
    }

    #[inline]
    pub(crate) fn edge_row(&self, x: usize) -> &[u32; 8] {
        &self.edges[x]
    }

    #[inline]
    pub(crate) fn weight_at(&self, edge: usize) -> f64 {
        self.weights[edge]
    }

    #[inline]
    pub(crate) fn weight_at_mut(&mut self, edge: usize) -> &mut f64 {
        &mut self.weights[edge]
    }

    /// Weights of `x`'s eight links in neighbor order.
    #[inline]
    pub fn link_weights(&self, x: usize) -> [f64; 8] {
        self.edges[x].map(|e| self.weights[e as usize])
    }

    /// Position of `y` in `x`'s neighbor list.
    pub fn direction_to(&self, x: usize, y: usize) -> Option<usize> {
        self.neighbors[x].iter().position(|&n| n as usize == y)
    }

    fn edge_index(&self, x: usize, y: usize) -> Result<usize, LatticeError> {
        self.direction_to(x, y)
            .map(|k| self.edges[x][k] as usize)
            .ok_or(LatticeError::NotAdjacent(x, y))
    }

    pub fn edge_weight(&self, x: usize, y: usize) -> Result<f64, LatticeError> {
        Ok(self.weights[self.edge_index(x, y)?])
    }

    /// Stores `w` on the edge between `x` and `y`, clamped into `[1-δ, 1+δ]`.
    pub fn set_edge_weight(&mut self, x: usize, y: usize, w: f64) -> Result<(), LatticeError> {
        let e = self.edge_index(x, y)?;
        self.weights[e] = self.coev.clamp(w);
        Ok(())
    }

    /// Number of stored weights outside `[1-δ, 1+δ]`.
    pub fn weight_bound_violations(&self) -> usize {
        let (lo, hi) = (self.coev.lower_bound(), self.coev.upper_bound());
        self.weights.iter().filter(|&&w| !(lo..=hi).contains(&w)).count()
    }

    /// Recount the population from scratch.
    pub fn recount(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for s in &self.strategies {
            counts[s.code() as usize] += 1;
        }
        counts
    }
}

/// Builds the initial lattice for `seeding`, all weights at 1.0.
pub fn build_lattice<R: RngCore + ?Sized>(
    side: usize,
    seeding: SeedingSpec,
    coev: CoevParams,
    rng: &mut R,
) -> Result<Grid, LatticeError> {
    if side < MIN_SIDE {
        return Err(LatticeError::InvalidSide(side));
    }
    let n = side * side;
    let strategies = match seeding {
        SeedingSpec::Unbiased => (0..n)
            .map(|_| Strategy::from_code(uniform_index(rng, 3) as u8).unwrap())
            .collect(),
        SeedingSpec::BiasedFraction { abstainer_fraction } => {
            let abstainers = ((abstainer_fraction * n as f64).round() as usize).min(n);
            let mut cells = vec![Strategy::Abstainer; abstainers];
            cells.extend(split_cooperators_defectors(n - abstainers, rng));
            shuffle(&mut cells, rng);
            cells
        }
        SeedingSpec::SingleAbstainer { placement } => {
            let centre = (side / 2) * side + side / 2;
            let at = match placement {
                Placement::CenterCell => centre,
                Placement::RandomCell => uniform_index(rng, n),
            };
            let mut rest = split_cooperators_defectors(n - 1, rng);
            shuffle(&mut rest, rng);
            rest.insert(at, Strategy::Abstainer);
            rest
        }
        SeedingSpec::AllAbstainersExceptPair => {
            let mut cells = vec![Strategy::Abstainer; n];
            let c = uniform_index(rng, n);
            let mut d = uniform_index(rng, n - 1);
            if d >= c {
                d += 1;
            }
            cells[c] = Strategy::Cooperator;
            cells[d] = Strategy::Defector;
            cells
        }
    };
    Grid::from_strategies(side, strategies, coev)
}

/// `count` strategies split evenly between C and D; an odd leftover goes to
/// either side on one coin flip.
fn split_cooperators_defectors<R: RngCore + ?Sized>(count: usize, rng: &mut R) -> Vec<Strategy> {
    let half = count / 2;
    let mut out = Vec::with_capacity(count);
    out.extend(std::iter::repeat(Strategy::Cooperator).take(half));
    out.extend(std::iter::repeat(Strategy::Defector).take(half));
    if count % 2 == 1 {
        out.push(if uniform_index(rng, 2) == 0 {
            Strategy::Cooperator
        } else {
            Strategy::Defector
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Strategy;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_pcg::Pcg64Mcg;

    fn coev() -> CoevParams {
        CoevParams::new(0.72, 0.8)
    }

    /// Row-major torus arithmetic written out by hand.
    fn oracle_neighbors(side: usize, x: usize) -> Vec<usize> {
        let r = x / side;
        let c = x % side;
        let up = (r + side - 1) % side;
        let down = (r + 1) % side;
        let left = (c + side - 1) % side;
        let right = (c + 1) % side;
        vec![
            up * side + left,
            up * side + c,
            up * side + right,
            r * side + left,
            r * side + right,
            down * side + left,
            down * side + c,
            down * side + right,
        ]
    }

    #[test]
    fn neighbors_of_corner_on_3x3() {
        assert_eq!(neighbors(3, 0), [8, 6, 7, 2, 1, 5, 3, 4]);
    }

    #[test]
    fn neighbors_wrap_on_102() {
        let nb = neighbors(102, 0);
        assert!(nb.contains(&101));
        assert!(nb.contains(&10_403));
        assert_eq!(nb[0], 10_403);
        assert_eq!(nb[1], 10_302);
        assert_eq!(nb[3], 101);
        assert_eq!(nb.to_vec(), oracle_neighbors(102, 0));
    }

    #[test]
    fn every_edge_stored_once() {
        for side in [3, 4, 7] {
            let g = Grid::uniform(side, Strategy::Cooperator, coev()).unwrap();
            let n = side * side;
            let mut hits = vec![0usize; 4 * n];
            for x in 0..n {
                for &e in g.edge_row(x) {
                    hits[e as usize] += 1;
                }
            }
            // each edge is seen from both endpoints
            assert!(hits.iter().all(|&h| h == 2), "side {side}: {hits:?}");
        }
    }

    #[test]
    fn fresh_weights_are_one() {
        let g = Grid::uniform(5, Strategy::Defector, coev()).unwrap();
        for x in 0..25 {
            for y in g.neighbors(x) {
                assert_eq!(g.edge_weight(x, y).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn set_clamps_and_is_symmetric() {
        let mut g = Grid::uniform(5, Strategy::Defector, coev()).unwrap();
        g.set_edge_weight(6, 7, 1.9).unwrap();
        assert_eq!(g.edge_weight(6, 7).unwrap(), 1.8);
        assert_eq!(g.edge_weight(7, 6).unwrap(), 1.8);
        g.set_edge_weight(7, 6, -3.0).unwrap();
        assert_eq!(g.edge_weight(6, 7).unwrap(), 1.0 - 0.8);
        g.set_edge_weight(0, 24, 1.25).unwrap();
        assert_eq!(g.edge_weight(24, 0).unwrap(), 1.25);
    }

    #[test]
    fn non_adjacent_is_an_error() {
        let mut g = Grid::uniform(5, Strategy::Defector, coev()).unwrap();
        assert_eq!(g.edge_weight(0, 12), Err(LatticeError::NotAdjacent(0, 12)));
        assert!(g.set_edge_weight(0, 0, 1.0).is_err());
    }

    #[test]
    fn side_below_three_is_rejected() {
        let mut rng = Pcg64Mcg::seed_from_u64(1);
        assert_eq!(
            build_lattice(2, SeedingSpec::Unbiased, coev(), &mut rng).unwrap_err(),
            LatticeError::InvalidSide(2)
        );
    }

    #[test]
    fn single_abstainer_at_centre_of_3x3() {
        let mut rng = Pcg64Mcg::seed_from_u64(3);
        let g = build_lattice(
            3,
            SeedingSpec::SingleAbstainer {
                placement: Placement::CenterCell,
            },
            coev(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(g.strategy(4), Strategy::Abstainer);
        assert_eq!(g.counts(), [4, 4, 1]);
    }

    #[test]
    fn biased_fraction_counts_are_exact() {
        let mut rng = Pcg64Mcg::seed_from_u64(9);
        let g = build_lattice(
            10,
            SeedingSpec::BiasedFraction {
                abstainer_fraction: 0.90,
            },
            coev(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(g.counts(), [5, 5, 90]);
    }

    #[test]
    fn biased_fraction_odd_remainder() {
        // 25 cells, 5 abstainers: 20 left, even; 4 abstainers: 21 left, odd
        let mut rng = Pcg64Mcg::seed_from_u64(11);
        let g = build_lattice(
            5,
            SeedingSpec::BiasedFraction {
                abstainer_fraction: 0.16,
            },
            coev(),
            &mut rng,
        )
        .unwrap();
        let [c, d, a] = g.counts();
        assert_eq!(a, 4);
        assert_eq!(c + d, 21);
        assert_eq!(c.abs_diff(d), 1);
    }

    #[test]
    fn all_abstainers_except_pair() {
        for seed in 0..20 {
            let mut rng = Pcg64Mcg::seed_from_u64(seed);
            let g = build_lattice(4, SeedingSpec::AllAbstainersExceptPair, coev(), &mut rng)
                .unwrap();
            assert_eq!(g.counts(), [1, 1, 14]);
        }
    }

    #[test]
    fn unbiased_counts_near_a_third() {
        let mut rng = Pcg64Mcg::seed_from_u64(2024);
        let g = build_lattice(102, SeedingSpec::Unbiased, coev(), &mut rng).unwrap();
        let n = 102.0 * 102.0;
        let sigma = (n * (1.0 / 3.0) * (2.0 / 3.0)) as f64;
        for c in g.counts() {
            assert!((c as f64 - n / 3.0).abs() < 5.0 * sigma.sqrt(), "{c}");
        }
    }

    proptest! {
        #[test]
        fn neighbors_match_oracle_and_are_symmetric(side in 3usize..40, pick in 0usize..1600) {
            let x = pick % (side * side);
            let nb = neighbors(side, x);
            prop_assert_eq!(nb.to_vec(), oracle_neighbors(side, x));
            prop_assert!(!nb.contains(&x));
            for y in nb {
                prop_assert!(neighbors(side, y).contains(&x));
            }
        }

        #[test]
        fn weights_stay_in_bounds(
            side in 3usize..8,
            small in 0.0f64..=1.0,
            writes in proptest::collection::vec((0usize..64, 0usize..8, -3.0f64..5.0), 1..50),
        ) {
            let mut g = Grid::uniform(side, Strategy::Cooperator, CoevParams::new(small, small)).unwrap();
            for (cell, dir, w) in writes {
                let x = cell % (side * side);
                let y = g.neighbors(x)[dir];
                g.set_edge_weight(x, y, w).unwrap();
                prop_assert_eq!(g.edge_weight(y, x).unwrap(), g.edge_weight(x, y).unwrap());
            }
            prop_assert_eq!(g.weight_bound_violations(), 0);
        }
    }
}
