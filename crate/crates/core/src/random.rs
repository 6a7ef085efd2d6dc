//! Seeded, platform-independent randomness.
//!
//! Every random choice in the crate goes through [`Rng`] (xoshiro256++ seeded with
//! `seed_from_u64`, i.e. SplitMix64 expansion) and draws bounded integers as `u64`, so
//! results do not depend on pointer width.

use rand::{Rng as _, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Uniform integer in `[0, bound)`.
#[inline]
pub fn below(rng: &mut Rng, bound: u64) -> u64 {
    rng.gen_range(0..bound)
}

/// `k` distinct indices from `[0, n)`, uniformly without replacement, in draw order
/// (partial Fisher-Yates).
pub fn sample_indices(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "cannot sample {k} of {n}");
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + below(rng, (n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// Uniform `f64` in `[0, 1)` from the top 53 bits.
#[inline]
pub fn unit_f64(rng: &mut Rng) -> f64 {
    (rng.gen::<u64>() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_distinct_and_reproducible() {
        let a = sample_indices(&mut rng(7), 100, 40);
        let b = sample_indices(&mut rng(7), 100, 40);
        assert_eq!(a, b);
        let mut s = a.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 40);
        assert!(a.iter().all(|&i| i < 100));
    }

    #[test]
    fn known_stream() {
        // Pins the generator so a dependency bump that changes the stream is caught.
        let mut r = rng(0);
        let first: Vec<u64> = (0..3).map(|_| below(&mut r, 1000)).collect();
        assert_eq!(first, vec![324, 382, 359]);
    }
}
