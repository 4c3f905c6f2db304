//! Timing sweep behind `rrho bench`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rrho::{compute_distance, synth, Engine, Mode};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub rho: f64,
    pub eps: f64,
    pub engine: Engine,
    pub mode: Mode,
    pub iterations: u64,
    pub evaluations: u64,
    pub estimate: f64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub sizes: Vec<usize>,
    pub rhos: Vec<f64>,
    pub dim: usize,
    pub eps: f64,
    pub engine: Engine,
    pub mode: Mode,
    pub seed: u64,
}

/// Runs every `(n, rho)` pair on a fresh `n x n` instance and writes one CSV
/// row per run as it finishes.
pub fn run<W: Write>(spec: &BenchSpec, out: W) -> anyhow::Result<Vec<BenchRow>> {
    let mut writer = csv::Writer::from_writer(out);
    let mut rows = Vec::new();
    for &n in &spec.sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ n as u64);
        let mu = synth::random_set(&mut rng, n, spec.dim);
        let nu = synth::random_set(&mut rng, n, spec.dim);
        for &rho in &spec.rhos {
            let (_, report) = compute_distance(&mu, &nu, rho, spec.eps, spec.mode, spec.engine, spec.seed)?;
            let row = BenchRow {
                n,
                m: n,
                d: spec.dim,
                rho,
                eps: spec.eps,
                engine: spec.engine,
                mode: spec.mode,
                iterations: report.iterations,
                evaluations: report.evaluations,
                estimate: report.estimate,
                wall_time_ms: report.wall_time.as_secs_f64() * 1e3,
            };
            writer.serialize(&row)?;
            writer.flush()?;
            rows.push(row);
        }
    }
    Ok(rows)
}
