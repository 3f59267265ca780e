//! Reachable link-weight values under `w ↦ clamp(w ± Δ)` starting from 1.

use std::cmp::Ordering;
use std::collections::{BTreeSet, VecDeque};

use crate::model::CoevParams;

/// Values closer than this are the same state.
pub const DEDUP_TOLERANCE: f64 = 1e-9;

/// Upper limit on the number of distinct states explored.
pub const STATE_CAP: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum StateSpaceError {
    #[error("more than {STATE_CAP} reachable weight states for big_delta={big_delta}, small_delta={small_delta}")]
    TooManyStates { big_delta: f64, small_delta: f64 },
    #[error("invalid parameters: need 0 <= big_delta <= small_delta <= 1 (got {big_delta}, {small_delta})")]
    InvalidParams { big_delta: f64, small_delta: f64 },
}

/// Sorted distinct weights reachable from 1.0.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightStateSet {
    pub values: Vec<f64>,
}

impl WeightStateSet {
    pub fn count(&self) -> usize {
        self.values.len()
    }

    /// Index of the stored value within tolerance of `w`.
    pub fn find(&self, w: f64) -> Option<usize> {
        find_near(&self.values, w).ok()
    }
}

/// `Ok(i)` when `sorted[i]` is within tolerance of `w`, else the insertion point.
fn find_near(sorted: &[f64], w: f64) -> Result<usize, usize> {
    let i = sorted.partition_point(|&v| v < w - DEDUP_TOLERANCE);
    match sorted.get(i) {
        Some(&v) if (v - w).abs() <= DEDUP_TOLERANCE => Ok(i),
        _ => Err(i),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Breadth-first closure of `{1.0}` under the clamped ±Δ moves.
///
/// A zero amplitude pins every weight at 1 whatever the step, so `(Δ, 0)` is
/// accepted and yields the single state.
pub fn reachable_weights(coev: &CoevParams) -> Result<WeightStateSet, StateSpaceError> {
    let (big, small) = (coev.big_delta, coev.small_delta);
    if small == 0.0 && (0.0..=1.0).contains(&big) {
        return Ok(WeightStateSet { values: vec![1.0] });
    }
    if !(0.0 <= big && big <= small && small <= 1.0) {
        return Err(StateSpaceError::InvalidParams {
            big_delta: big,
            small_delta: small,
        });
    }
    let mut seen = BTreeSet::from([Key(1.0)]);
    let mut queue = VecDeque::from([1.0]);
    while let Some(w) = queue.pop_front() {
        for next in [coev.clamp(w + big), coev.clamp(w - big)] {
            let near = Key(next - DEDUP_TOLERANCE)..=Key(next + DEDUP_TOLERANCE);
            if seen.range(near).next().is_some() {
                continue;
            }
            if seen.len() == STATE_CAP {
                return Err(StateSpaceError::TooManyStates {
                    big_delta: big,
                    small_delta: small,
                });
            }
            seen.insert(Key(next));
            queue.push_back(next);
        }
    }
    Ok(WeightStateSet {
        values: seen.into_iter().map(|k| k.0).collect(),
    })
}

pub fn count_states(coev: &CoevParams) -> Result<usize, StateSpaceError> {
    reachable_weights(coev).map(|s| s.count())
}
