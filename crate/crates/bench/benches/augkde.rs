use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rrho::{AugmentedKdeTree, BackendKind, SmoothKernel, ThresholdSampling, TreeConfig};

fn config(eps: f64) -> TreeConfig {
    TreeConfig {
        s2: 2.0,
        kernel: SmoothKernel::new(3.0, 0.05, 0.1),
        backend: BackendKind::Exact,
        eps,
        delta: 0.1,
        sampling: ThresholdSampling::Stratified,
        anchor: 1e-3,
        adaptive_anchor: true,
        seed: 1,
        tag: 0,
    }
}

fn augkde(c: &mut Criterion) {
    let mut group = c.benchmark_group("augkde");
    group.sample_size(20);
    for n in [256, 1024, 4096] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let coords: Vec<f64> = (0..2 * n).map(|_| rng.gen()).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mult = vec![1.0 / n as f64; n];
        group.bench_with_input(BenchmarkId::new("build", n), &n, |b, _| {
            b.iter(|| AugmentedKdeTree::build(&coords, 2, &weights, &mult, config(0.25)).unwrap())
        });
        let tree = AugmentedKdeTree::build(&coords, 2, &weights, &mult, config(0.25)).unwrap();
        let mut k = 0;
        group.bench_with_input(BenchmarkId::new("query", n), &n, |b, _| {
            b.iter(|| {
                k += 1;
                tree.query(&[0.5, 0.5], -0.2, k).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, augkde);
criterion_main!(benches);
