//! The coevolutionary update: payoffs, weighted utilities, link-weight
//! adaptation and proportional imitation, composed into elementary and
//! Monte Carlo steps.
//!
//! RNG consumption per elementary step is fixed: one draw for the focal
//! cell, one for the neighbor to compare with, and one Bernoulli draw only
//! when that neighbor is strictly better off.

use rand::RngCore;

use crate::draws::{uniform_index, unit_f64};

use crate::lattice::{Grid, LatticeError};
use crate::model::{CoevParams, GameParams, Strategy};

/// Absolute tolerance for the three-way comparison of a link's utility
/// against the focal agent's mean utility.
pub const TIE_EPSILON: f64 = 1e-12;

/// Row player's payoff.
#[inline]
pub fn payoff(sx: Strategy, sy: Strategy, game: &GameParams) -> f64 {
    use Strategy::*;
    match (sx, sy) {
        (Abstainer, _) | (_, Abstainer) => game.loner(),
        (Cooperator, Cooperator) => GameParams::REWARD,
        (Cooperator, Defector) => GameParams::SUCKER,
        (Defector, Cooperator) => game.temptation(),
        (Defector, Defector) => GameParams::PUNISHMENT,
    }
}

/// Per-link utilities of one agent in neighbor order, with their sum and
/// mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtilityView {
    pub per_neighbor: [f64; 8],
    pub total: f64,
    pub mean: f64,
}

/// Outcome of one imitation attempt.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adoption {
    pub adopted: bool,
    pub source: usize,
    /// Adoption probability; 0 when the neighbor was not better off.
    pub probability: f64,
}

/// What one elementary step did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub cell: usize,
    /// Strategy of `cell` before the step.
    pub previous: Strategy,
    pub adoption: Adoption,
}

/// Weight times payoff for the edge `x`–`y`.
pub fn utility(grid: &Grid, x: usize, y: usize, game: &GameParams) -> Result<f64, LatticeError> {
    Ok(grid.edge_weight(x, y)? * payoff(grid.strategy(x), grid.strategy(y), game))
}

/// Precomputed update rule for one parameter set.
#[derive(Clone, Copy, Debug)]
pub struct Engine {
    table: [[f64; 3]; 3],
    big_delta: f64,
    lower: f64,
    upper: f64,
    normalizer: f64,
}

impl Engine {
    pub fn new(game: &GameParams, coev: &CoevParams) -> Self {
        let mut table = [[0.0; 3]; 3];
        for a in Strategy::ALL {
            for b in Strategy::ALL {
                table[a.code() as usize][b.code() as usize] = payoff(a, b, game);
            }
        }
        Engine {
            table,
            big_delta: coev.big_delta,
            lower: coev.lower_bound(),
            upper: coev.upper_bound(),
            normalizer: 8.0 * (game.temptation() - GameParams::PUNISHMENT),
        }
    }

    pub fn accumulated_utility(&self, grid: &Grid, x: usize) -> UtilityView {
        let row = &self.table[grid.strategy(x).code() as usize];
        let nb = grid.neighbor_row(x);
        let ed = grid.edge_row(x);
        let mut per_neighbor = [0.0; 8];
        let mut total = 0.0;
        for k in 0..8 {
            let u = grid.weight_at(ed[k] as usize) * row[grid.strategy(nb[k] as usize).code() as usize];
            per_neighbor[k] = u;
            total += u;
        }
        UtilityView {
            per_neighbor,
            total,
            mean: total / 8.0,
        }
    }

    /// Same summation as [`Engine::accumulated_utility`], total only.
    #[inline]
    pub fn total_utility(&self, grid: &Grid, x: usize) -> f64 {
        let row = &self.table[grid.strategy(x).code() as usize];
        let nb = grid.neighbor_row(x);
        let ed = grid.edge_row(x);
        let mut total = 0.0;
        for k in 0..8 {
            total += grid.weight_at(ed[k] as usize) * row[grid.strategy(nb[k] as usize).code() as usize];
        }
        total
    }

    /// Moves each of `x`'s links one step toward or away from the mean,
    /// all decisions taken against the same pre-update snapshot.
    pub fn update_link_weights(&self, grid: &mut Grid, x: usize) {
        if self.big_delta == 0.0 {
            return;
        }
        let view = self.accumulated_utility(grid, x);
        let ed = *grid.edge_row(x);
        for k in 0..8 {
            let u = view.per_neighbor[k];
            let step = if u > view.mean + TIE_EPSILON {
                self.big_delta
            } else if u < view.mean - TIE_EPSILON {
                -self.big_delta
            } else {
                continue;
            };
            let w = grid.weight_at_mut(ed[k] as usize);
            *w = (*w + step).max(self.lower).min(self.upper);
        }
    }

    pub fn attempt_strategy_adoption<R: RngCore + ?Sized>(
        &self,
        grid: &mut Grid,
        x: usize,
        rng: &mut R,
    ) -> Adoption {
        let own = self.total_utility(grid, x);
        let k = uniform_index(rng, 8);
        let y = grid.neighbor_row(x)[k] as usize;
        let other = self.total_utility(grid, y);
        if other <= own {
            return Adoption {
                adopted: false,
                source: y,
                probability: 0.0,
            };
        }
        let probability = ((other - own) / self.normalizer).clamp(0.0, 1.0);
        let adopted = unit_f64(rng) < probability;
        if adopted {
            let s = grid.strategy(y);
            grid.set_strategy(x, s);
        }
        Adoption {
            adopted,
            source: y,
            probability,
        }
    }

    /// One random agent: link update, then imitation attempt.
    #[inline]
    pub fn elementary_step<R: RngCore + ?Sized>(&self, grid: &mut Grid, rng: &mut R) -> StepRecord {
        let x = uniform_index(rng, grid.population());
        let previous = grid.strategy(x);
        self.update_link_weights(grid, x);
        let adoption = self.attempt_strategy_adoption(grid, x, rng);
        StepRecord {
            cell: x,
            previous,
            adoption,
        }
    }

    /// `N` elementary steps.
    pub fn mc_step<R: RngCore + ?Sized>(&self, grid: &mut Grid, rng: &mut R) {
        for _ in 0..grid.population() {
            self.elementary_step(grid, rng);
        }
    }
}

pub fn accumulated_utility(grid: &Grid, x: usize, game: &GameParams) -> UtilityView {
    Engine::new(game, &grid.coev()).accumulated_utility(grid, x)
}

pub fn update_link_weights(grid: &mut Grid, x: usize, game: &GameParams, coev: &CoevParams) {
    Engine::new(game, coev).update_link_weights(grid, x)
}

pub fn attempt_strategy_adoption<R: RngCore + ?Sized>(
    grid: &mut Grid,
    x: usize,
    game: &GameParams,
    rng: &mut R,
) -> Adoption {
    Engine::new(game, &grid.coev()).attempt_strategy_adoption(grid, x, rng)
}

pub fn elementary_step<R: RngCore + ?Sized>(
    grid: &mut Grid,
    game: &GameParams,
    coev: &CoevParams,
    rng: &mut R,
) -> StepRecord {
    Engine::new(game, coev).elementary_step(grid, rng)
}

pub fn mc_step<R: RngCore + ?Sized>(grid: &mut Grid, game: &GameParams, coev: &CoevParams, rng: &mut R) {
    Engine::new(game, coev).mc_step(grid, rng)
}
