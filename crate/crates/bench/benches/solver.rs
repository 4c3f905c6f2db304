use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rrho::{compute_distance, Engine, Mode};
use rrho_bench::fixture;

fn solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("compute_distance");
    group.sample_size(10);
    for n in [16, 64, 256] {
        let (mu, nu) = fixture(n, n, 2, 1);
        for engine in [Engine::Exact, Engine::Sampling] {
            group.bench_with_input(BenchmarkId::new(engine.to_string(), n), &n, |b, _| {
                b.iter(|| compute_distance(&mu, &nu, 1.5, 0.25, Mode::Practical, engine, 0).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, solver);
criterion_main!(benches);
