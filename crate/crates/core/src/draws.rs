//! Random draws with a fixed cost: every draw consumes exactly one 64-bit
//! output of the generator, so trajectories depend only on the generator
//! stream and never on rejection loops.

use rand::RngCore;
use rand_pcg::Pcg64Mcg;

/// Generator used for every run, seeded with `seed_from_u64`.
pub type SimRng = Pcg64Mcg;

/// Uniform index in `0..n` by 128-bit multiply-shift.
#[inline]
pub fn uniform_index<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Uniform real in `[0, 1)` from the top 53 bits.
#[inline]
pub fn unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Fisher–Yates shuffle, one draw per position from the back.
pub fn shuffle<T, R: RngCore + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = uniform_index(rng, i + 1);
        items.swap(i, j);
    }
}
