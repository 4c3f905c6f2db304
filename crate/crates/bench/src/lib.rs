//! Shared fixtures for the criterion benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rrho::{synth, WeightedPointSet};

/// A reproducible pair of random point sets in `[0, 1]^d`.
pub fn fixture(n: usize, m: usize, d: usize, seed: u64) -> (WeightedPointSet, WeightedPointSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (synth::random_set(&mut rng, n, d), synth::random_set(&mut rng, m, d))
}
