//! Seeded random instances for tests, validation suites and benchmarks.

use rand::Rng;

use crate::points::WeightedPointSet;

/// `k` points uniform in `[0, 1]^d` with masses uniform in `[0.5, 1.5]`
/// before normalization.
pub fn random_set<R: Rng>(rng: &mut R, k: usize, d: usize) -> WeightedPointSet {
    let coords: Vec<f64> = (0..k * d).map(|_| rng.gen::<f64>()).collect();
    let masses: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..1.5)).collect();
    WeightedPointSet::from_flat(coords, masses, d).expect("positive masses")
}

/// Random masses on a fixed support.
pub fn random_masses_on<R: Rng>(rng: &mut R, support: &WeightedPointSet) -> WeightedPointSet {
    let masses: Vec<f64> = (0..support.len()).map(|_| rng.gen_range(0.5..1.5)).collect();
    support.with_masses(masses).expect("positive masses")
}

/// Pair of random sets with sizes drawn from `1..=max_n`, `1..=max_m` and
/// dimension from `1..=max_d`.
pub fn random_pair<R: Rng>(rng: &mut R, max_n: usize, max_m: usize, max_d: usize) -> (WeightedPointSet, WeightedPointSet) {
    let n = rng.gen_range(1..=max_n);
    let m = rng.gen_range(1..=max_m);
    let d = rng.gen_range(1..=max_d);
    (random_set(rng, n, d), random_set(rng, m, d))
}
