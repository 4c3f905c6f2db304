//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rrho::{exact_emd, sinkhorn, synth, ProblemInstance, WeightedPointSet};
use rrho_cli::io::write_point_set;
use rrho_cli::report::without_timing;
use rrho_cli::suites::{self, ConvergenceSpec, RunRecord};

const SEED: u64 = 20240607;

struct Line {
    id: u32,
    pass: bool,
    text: String,
}

fn report(lines: &mut Vec<Line>, id: u32, pass: bool, text: String) {
    println!("{} criterion {id}: {text}", if pass { "PASS" } else { "FAIL" });
    lines.push(Line { id, pass, text });
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn accuracy(lines: &mut Vec<Line>, id: u32, runs: &[RunRecord], need: usize, limit: Duration, took: Duration) {
    let hits = runs.iter().filter(|r| r.within()).count();
    let worst = runs.iter().map(RunRecord::error).fold(0.0, f64::max);
    report(
        lines,
        id,
        hits >= need && took < limit,
        format!(
            "{hits}/{} within eps*r (need {need}), worst error {worst:.4}*r, {:.2}s (limit {}s)",
            runs.len(),
            secs(took),
            limit.as_secs()
        ),
    );
}

fn criteria_1_7_8(lines: &mut Vec<Line>) {
    let start = Instant::now();
    let runs = suites::convergence_runs(&ConvergenceSpec::small(SEED)).expect("criterion 1 runs");
    let took = start.elapsed();
    accuracy(lines, 1, &runs, 95, Duration::from_secs(60), took);

    let worst = runs.iter().map(|r| r.penalty_excess).fold(f64::NEG_INFINITY, f64::max);
    report(
        lines,
        7,
        worst <= 1e-6,
        format!("max (penalty - 4 R^rho) over iterates with g >= 0: {worst:.3e} r^rho (allowed 1e-6)"),
    );

    let updates: u64 = runs.iter().map(|r| r.updates).sum();
    let min_inc = runs.iter().map(|r| r.min_increase).fold(f64::INFINITY, f64::min);
    report(lines, 8, min_inc > 0.0, format!("{updates} update steps, smallest increase of g {min_inc:.3e} r^rho"));
}

fn criterion_2(lines: &mut Vec<Line>) {
    let start = Instant::now();
    let runs = suites::convergence_runs(&ConvergenceSpec::sampling(SEED)).expect("criterion 2 runs");
    let took = start.elapsed();
    accuracy(lines, 2, &runs, 45, Duration::from_secs(300), took);
}

fn outcome_line(lines: &mut Vec<Line>, id: u32, outcome: &rrho_cli::Outcome) {
    for f in &outcome.failures {
        println!("    {f}");
    }
    report(lines, id, outcome.all_passed(), outcome.to_string());
}

fn criterion_6(lines: &mut Vec<Line>) {
    let (u, v) = suites::kde_statistics(SEED, 100_000, 200).expect("kde statistics");
    for f in u.failures.iter().chain(&v.failures) {
        println!("    {f}");
    }
    report(lines, 6, u.all_passed() && v.all_passed(), format!("{u}; {v}"));
}

fn criterion_9(lines: &mut Vec<Line>) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_sink = f64::NEG_INFINITY;
    let mut sink_ok = 0;
    for _ in 0..50 {
        let (mu, nu) = synth::random_pair(&mut rng, 6, 6, 3);
        let inst = ProblemInstance::raw(mu, nu).unwrap();
        let emd = exact_emd(&inst).unwrap().value;
        let snk = sinkhorn(&inst, 1e-3 * inst.r, 1e-10, 1_000_000).unwrap().value;
        let allowed = 1e-3 * inst.r * ((inst.n() * inst.m()) as f64).ln() + 1e-6;
        worst_sink = worst_sink.max((snk - emd).abs() - allowed);
        if (snk - emd).abs() <= allowed {
            sink_ok += 1;
        }
    }
    let mut perm_ok = 0;
    let total = 500;
    let mut worst_perm: f64 = 0.0;
    for _ in 0..total {
        let d = rng.gen_range(1..=3);
        let pts = |rng: &mut ChaCha8Rng| (0..2).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect::<Vec<Vec<f64>>>();
        let (xs, ys) = (pts(&mut rng), pts(&mut rng));
        let dd = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let best = (0.5 * (dd(&xs[0], &ys[0]) + dd(&xs[1], &ys[1]))).min(0.5 * (dd(&xs[0], &ys[1]) + dd(&xs[1], &ys[0])));
        let inst = ProblemInstance::raw(WeightedPointSet::uniform(xs).unwrap(), WeightedPointSet::uniform(ys).unwrap()).unwrap();
        let emd = exact_emd(&inst).unwrap().value;
        worst_perm = worst_perm.max((emd - best).abs());
        if (emd - best).abs() <= 1e-12 {
            perm_ok += 1;
        }
    }
    report(
        lines,
        9,
        sink_ok == 50 && perm_ok == total,
        format!(
            "sinkhorn within bound on {sink_ok}/50 (worst margin {worst_sink:.3e}); emd = permutation optimum on {perm_ok}/{total} (worst {worst_perm:.1e})"
        ),
    );
}

fn criterion_10(lines: &mut Vec<Line>) {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let small = (synth::random_set(&mut rng, 40, 3), synth::random_set(&mut rng, 30, 3));
    let large = (synth::random_set(&mut rng, 130, 2), synth::random_set(&mut rng, 128, 2));
    let write = |name: &str, set: &WeightedPointSet| {
        let p = dir.path().join(name);
        write_point_set(set, &p).unwrap();
        p
    };
    let cases = [
        (write("a.csv", &small.0), write("b.csv", &small.1), "sampling"),
        (write("c.csv", &large.0), write("d.csv", &large.1), "exact"),
    ];
    let run = |mu: &Path, nu: &Path, engine: &str, threads: &str| -> serde_json::Value {
        let out = Command::new(env!("CARGO_BIN_EXE_rrho"))
            .args(["dist", "--rho", "1.5", "--eps", "0.25", "--seed", "11", "--engine", engine])
            .arg("--mu")
            .arg(mu)
            .arg("--nu")
            .arg(nu)
            .env("RRHO_THREADS", threads)
            .output()
            .expect("run rrho");
        assert!(out.status.code().is_some_and(|c| c == 0 || c == 2), "{}", String::from_utf8_lossy(&out.stderr));
        without_timing(&String::from_utf8(out.stdout).unwrap()).unwrap()
    };
    let mut identical = true;
    let mut count = 0;
    for (mu, nu, engine) in &cases {
        let reference = run(mu, nu, engine, "1");
        for threads in ["1", "1", "4", "4", "4"] {
            count += 1;
            identical &= run(mu, nu, engine, threads) == reference;
        }
    }
    report(lines, 10, identical, format!("{count} repeated runs over 2 inputs with RRHO_THREADS in {{1, 4}}: identical = {identical}"));
}

fn main() {
    let mut lines = Vec::new();
    criteria_1_7_8(&mut lines);
    criterion_2(&mut lines);
    outcome_line(&mut lines, 3, &suites::sandwich(SEED, 200).expect("sandwich"));
    outcome_line(&mut lines, 4, &suites::triangle(SEED, 100).expect("triangle"));
    outcome_line(&mut lines, 5, &suites::gradcheck(SEED, 20, 100).expect("gradcheck"));
    criterion_6(&mut lines);
    criterion_9(&mut lines);
    criterion_10(&mut lines);

    lines.sort_by_key(|l| l.id);
    let failed: Vec<&Line> = lines.iter().filter(|l| !l.pass).collect();
    println!("acceptance: {}/{} criteria passed", lines.len() - failed.len(), lines.len());
    if !failed.is_empty() {
        for l in failed {
            println!("  failed {}: {}", l.id, l.text);
        }
        std::process::exit(1);
    }
}
