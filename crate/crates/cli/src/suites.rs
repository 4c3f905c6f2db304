//! Seeded validation suites behind `rrho validate`.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rrho::augkde::{AugmentedKdeTree, BackendKind, ThresholdSampling, TreeConfig};
use rrho::dual::{dual_objective, grad_alpha_exact, grad_beta_exact, sandwich_bounds};
use rrho::{
    derive_params, exact_emd, exact_rrho, holder_pair, preprocess, solve_with, synth, DualState, Engine, Mode,
    ProblemInstance, SmoothKernel, SolveOptions, Update, WeightedPointSet,
};
use serde::Serialize;

/// Dual gap asked of the exact oracle in every suite.
pub const ORACLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Sandwich,
    Triangle,
    Gradcheck,
    KdeUnbiased,
    KdeVariance,
    Convergence,
}

impl Suite {
    pub const ALL: [Suite; 6] =
        [Suite::Sandwich, Suite::Triangle, Suite::Gradcheck, Suite::KdeUnbiased, Suite::KdeVariance, Suite::Convergence];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Sandwich => "sandwich",
            Suite::Triangle => "triangle",
            Suite::Gradcheck => "gradcheck",
            Suite::KdeUnbiased => "kde-unbiased",
            Suite::KdeVariance => "kde-variance",
            Suite::Convergence => "convergence",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}` (expected one of: {})", Suite::ALL.map(Suite::name).join(", ")))
    }
}

/// Pass count plus the worst observed value of the suite's metric.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub suite: String,
    pub passed: usize,
    pub total: usize,
    pub metric: String,
    pub worst: f64,
    pub failures: Vec<String>,
}

impl Outcome {
    fn new(suite: &str, metric: &str) -> Self {
        Self { suite: suite.into(), passed: 0, total: 0, metric: metric.into(), worst: 0.0, failures: Vec::new() }
    }

    fn record(&mut self, ok: bool, value: f64, what: impl FnOnce() -> String) {
        self.total += 1;
        if ok {
            self.passed += 1;
        } else if self.failures.len() < 10 {
            self.failures.push(what());
        }
        if value > self.worst || value.is_nan() {
            self.worst = value;
        }
    }

    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}/{} passed, {} = {:.3e}", self.suite, self.passed, self.total, self.metric, self.worst)
    }
}

/// Runs a suite at its default size.
pub fn run(suite: Suite, seed: u64) -> rrho::Result<Outcome> {
    match suite {
        Suite::Sandwich => sandwich(seed, 200),
        Suite::Triangle => triangle(seed, 100),
        Suite::Gradcheck => gradcheck(seed, 20, 100),
        Suite::KdeUnbiased => kde_statistics(seed, 100_000, 200).map(|(u, _)| u),
        Suite::KdeVariance => kde_statistics(seed, 100_000, 200).map(|(_, v)| v),
        Suite::Convergence => {
            let runs = convergence_runs(&ConvergenceSpec::small(seed))?;
            Ok(accuracy_outcome(&runs))
        }
    }
}

const RHOS: [f64; 4] = [1.1, 1.25, 1.5, 2.0];

/// `EMD <= R_rho <= sup(1/(mu nu))^((rho-1)/rho) EMD` on random instances,
/// followed by 20 uniform 4x4 instances at `rho = 1.01`.
pub fn sandwich(seed: u64, count: usize) -> rrho::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Outcome::new("sandwich", "max violation / r");
    for k in 0..count {
        let (mu, nu) = synth::random_pair(&mut rng, 6, 6, 4);
        let rho = RHOS[k % RHOS.len()];
        check_sandwich(&mut out, mu, nu, rho)?;
    }
    for _ in 0..20 {
        let d = rng.gen_range(1..=3);
        let pts = |rng: &mut ChaCha8Rng| (0..4).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
        let mu = WeightedPointSet::uniform(pts(&mut rng))?;
        let nu = WeightedPointSet::uniform(pts(&mut rng))?;
        check_sandwich(&mut out, mu, nu, 1.01)?;
    }
    Ok(out)
}

fn check_sandwich(out: &mut Outcome, mu: WeightedPointSet, nu: WeightedPointSet, rho: f64) -> rrho::Result<()> {
    let inst = ProblemInstance::raw(mu, nu)?;
    let hp = holder_pair(rho)?;
    let emd = exact_emd(&inst)?.value;
    let rr = exact_rrho(&inst, &hp, ORACLE_TOL)?.value;
    let (lo, hi) = sandwich_bounds(emd, inst.mu.masses(), inst.nu.masses(), rho);
    let slack = 1e-7 * inst.r;
    let violation = ((lo - rr).max(rr - hi) / inst.r).max(0.0);
    out.record(rr >= lo - slack && rr <= hi + slack, violation, || {
        format!("rho={rho} n={} m={}: emd={emd} rrho={rr} upper={hi}", inst.n(), inst.m())
    });
    Ok(())
}

/// Symmetry on random pairs, identity of indiscernibles and the triangle
/// inequality on random triples sharing one support.
pub fn triangle(seed: u64, count: usize) -> rrho::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Outcome::new("triangle", "max violation / r");
    for k in 0..count {
        let hp = holder_pair(RHOS[k % RHOS.len()])?;
        let (a, b) = synth::random_pair(&mut rng, 6, 6, 3);
        let ab = ProblemInstance::raw(a.clone(), b.clone())?;
        let ba = ProblemInstance::raw(b, a)?;
        let (x, y) = (exact_rrho(&ab, &hp, ORACLE_TOL)?.value, exact_rrho(&ba, &hp, ORACLE_TOL)?.value);
        let asym = (x - y).abs() / ab.r;
        out.record(asym <= 1e-9, asym, || format!("symmetry rho={}: {x} vs {y}", hp.rho));

        let k_pts = rng.gen_range(2..=6);
        let d = rng.gen_range(1..=3);
        let support = synth::random_set(&mut rng, k_pts, d);
        let mu = synth::random_masses_on(&mut rng, &support);
        let nu = synth::random_masses_on(&mut rng, &support);
        let xi = synth::random_masses_on(&mut rng, &support);
        let value = |p: &WeightedPointSet, q: &WeightedPointSet| -> rrho::Result<(f64, f64)> {
            let inst = ProblemInstance::raw(p.clone(), q.clone())?;
            Ok((exact_rrho(&inst, &hp, ORACLE_TOL)?.value, inst.r))
        };
        let (same, r) = value(&mu, &mu)?;
        out.record(same <= 1e-8 * r, same / r, || format!("identity rho={}: {same}", hp.rho));
        let (mx, _) = value(&mu, &xi)?;
        let (mn, _) = value(&mu, &nu)?;
        let (nx, _) = value(&nu, &xi)?;
        let violation = ((mx - mn - nx) / r).max(0.0);
        out.record(mx <= mn + nx + 1e-7 * r, violation, || format!("triangle rho={}: {mx} > {mn} + {nx}", hp.rho));
    }
    Ok(out)
}

/// Analytic dual gradients against central differences at `points` random
/// dual iterates on each of `instances` random instances. The error of one
/// gradient is `max_k |fd_k - g_k| / max_k |g_k|`.
pub fn gradcheck(seed: u64, instances: usize, points: usize) -> rrho::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Outcome::new("gradcheck", "max relative error");
    let h = 1e-6;
    for k in 0..instances {
        let hp = holder_pair([1.25, 4.0 / 3.0, 1.5, 2.0][k % 4])?;
        let (mu, nu) = synth::random_pair(&mut rng, 8, 8, 4);
        let inst = ProblemInstance::raw(mu, nu)?.normalized();
        let (n, m) = (inst.n(), inst.m());
        let mut done = 0;
        while done < points {
            let st = DualState {
                alpha: (0..n).map(|_| rng.gen_range(-0.2..0.6)).collect(),
                beta: (0..m).map(|_| rng.gen_range(-0.4..0.4)).collect(),
                iteration: 0,
            };
            let smooth = st.alpha.iter().all(|a| st.beta.iter().all(|b| (a - b).abs() > 1e-3));
            if !smooth {
                continue;
            }
            done += 1;
            let eta = grad_alpha_exact(&inst, &st, &hp);
            let xi = grad_beta_exact(&inst, &st, &hp);
            let mut analytic: Vec<f64> = (0..n).map(|i| inst.mu.mass(i) * (1.0 - eta[i])).collect();
            analytic.extend((0..m).map(|j| -inst.nu.mass(j) * (1.0 - xi[j])));
            let mut numeric = Vec::with_capacity(n + m);
            for v in 0..n + m {
                let bump = |delta: f64| {
                    let mut s = st.clone();
                    if v < n {
                        s.alpha[v] += delta;
                    } else {
                        s.beta[v - n] += delta;
                    }
                    dual_objective(&inst, &s, &hp)
                };
                numeric.push((bump(h) - bump(-h)) / (2.0 * h));
            }
            let scale = analytic.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let diff = analytic.iter().zip(&numeric).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            let rel = if scale > 0.0 { diff / scale } else { diff };
            out.record(rel <= 1e-5, rel, || format!("rho={} n={n} m={m}: relative error {rel:e}", hp.rho));
        }
    }
    Ok(out)
}

/// Unbiasedness (mean within three standard errors of the exact sum) and
/// variance (`Var <= eps * E^2`) of single augmented-KDE estimates, for
/// `s2 in {1, 2}` and both threshold schemes.
pub fn kde_statistics(seed: u64, reps: u64, n: usize) -> rrho::Result<(Outcome, Outcome)> {
    let eps = 0.25;
    let mut unbiased = Outcome::new("kde-unbiased", "max |mean - exact| / SE");
    let mut variance = Outcome::new("kde-variance", "max Var / (eps E^2)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 3;
    let coords: Vec<f64> = (0..n * d).map(|_| rng.gen::<f64>()).collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mult: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5) / n as f64).collect();
    let y: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
    let beta = -0.3;
    for s2 in [1.0, 2.0] {
        for sampling in [ThresholdSampling::Iid, ThresholdSampling::Stratified] {
            let config = TreeConfig {
                s2,
                kernel: SmoothKernel::new(3.0, 0.05, 0.1),
                backend: BackendKind::Exact,
                eps,
                delta: 0.1,
                sampling,
                anchor: 1e-3,
                adaptive_anchor: true,
                seed,
                tag: s2 as u64,
            };
            let tree = AugmentedKdeTree::build(&coords, d, &weights, &mult, config)?;
            let exact = tree.exact_value(&y, beta);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for rep in 0..reps {
                let v = tree.query_once(&y, beta, 0, rep)? - exact;
                sum += v;
                sum_sq += v * v;
            }
            let count = reps as f64;
            let bias = sum / count;
            let var = (sum_sq / count - bias * bias).max(0.0) * count / (count - 1.0);
            let se = (var / count).sqrt();
            let label = format!("s2={s2} {sampling:?}");
            let z = if se > 0.0 { bias.abs() / se } else if bias.abs() <= 1e-12 * exact { 0.0 } else { f64::INFINITY };
            unbiased.record(z <= 3.0, z, || format!("{label}: mean off by {bias:e} with SE {se:e}"));
            let ratio = var / (eps * exact * exact);
            variance.record(ratio <= 1.0, ratio, || format!("{label}: Var {var:e} > eps E^2 = {:e}", eps * exact * exact));
        }
    }
    Ok((unbiased, variance))
}

/// Parameters of a batch of solver runs compared against the exact oracle.
#[derive(Debug, Clone)]
pub struct ConvergenceSpec {
    pub seed: u64,
    pub count: usize,
    pub max_n: usize,
    pub max_d: usize,
    pub eps: f64,
    pub engine: Engine,
    pub mode: Mode,
}

impl ConvergenceSpec {
    /// 100 instances with `n, m <= 8`, `d <= 4`, `eps = 0.1`, exact engine.
    pub fn small(seed: u64) -> Self {
        Self { seed, count: 100, max_n: 8, max_d: 4, eps: 0.1, engine: Engine::Exact, mode: Mode::Practical }
    }

    /// 50 instances with `n, m <= 64`, `eps = 0.25`, sampling engine.
    pub fn sampling(seed: u64) -> Self {
        Self { seed, count: 50, max_n: 64, max_d: 4, eps: 0.25, engine: Engine::Sampling, mode: Mode::Practical }
    }
}

/// One solver run and what the trajectory looked like.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rho: f64,
    pub n: usize,
    pub m: usize,
    pub r: f64,
    pub estimate: f64,
    pub exact: f64,
    pub eps: f64,
    pub elapsed: Duration,
    pub iterations: u64,
    /// Largest `penalty - 4 R^rho` over iterates with `g >= 0`, in units of `r^rho`.
    pub penalty_excess: f64,
    /// Smallest increase of `g` across an update, in units of `r^rho`.
    pub min_increase: f64,
    pub updates: u64,
}

impl RunRecord {
    pub fn error(&self) -> f64 {
        (self.estimate - self.exact).abs() / self.r
    }

    pub fn within(&self) -> bool {
        self.error() <= self.eps
    }
}

/// Solves `spec.count` random instances and compares each estimate with the
/// oracle value on the raw input. With the exact engine the trajectory is
/// also checked against the oracle value of the preprocessed instance.
pub fn convergence_runs(spec: &ConvergenceSpec) -> rrho::Result<Vec<RunRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rhos = [1.25, 1.5, 2.0];
    let mut out = Vec::with_capacity(spec.count);
    for k in 0..spec.count {
        let rho = rhos[k % rhos.len()];
        let (mu, nu) = synth::random_pair(&mut rng, spec.max_n, spec.max_n, spec.max_d);
        let run_seed = rng.gen::<u64>();
        let hp = holder_pair(rho)?;
        let raw = ProblemInstance::raw(mu.clone(), nu.clone())?;
        let exact = exact_rrho(&raw, &hp, ORACLE_TOL)?.value;

        let start = Instant::now();
        let p0 = derive_params(rho, spec.eps, mu.len(), nu.len(), spec.mode, None)?;
        let inst = preprocess(&mu, &nu, &p0)?;
        let params = p0.fit(&inst)?;
        let track = spec.engine == Engine::Exact;
        let mut history: Vec<(f64, f64, Option<Update>)> = Vec::new();
        let mut observer = |p: &rrho::Progress<'_>| {
            if let (Some(g), Some(pen)) = (p.objective, p.penalty) {
                history.push((g, pen, p.update));
            }
        };
        let opts = SolveOptions { observer: if track { Some(&mut observer) } else { None }, ..Default::default() };
        let report = solve_with(&inst, &hp, &params, spec.engine, run_seed, opts)?;
        let elapsed = start.elapsed();

        let (mut penalty_excess, mut min_increase, mut updates) = (f64::NEG_INFINITY, f64::INFINITY, 0);
        if track {
            let lifted = exact_rrho(&inst.normalized(), &hp, ORACLE_TOL)?.value;
            let bound = 4.0 * lifted.powf(rho);
            for (g, pen, _) in &history {
                if *g >= 0.0 {
                    penalty_excess = penalty_excess.max(pen - bound);
                }
            }
            for w in history.windows(2) {
                if w[0].2.is_some() {
                    updates += 1;
                    min_increase = min_increase.min(w[1].0 - w[0].0);
                }
            }
        }
        out.push(RunRecord {
            rho,
            n: mu.len(),
            m: nu.len(),
            r: raw.r,
            estimate: report.estimate,
            exact,
            eps: spec.eps,
            elapsed,
            iterations: report.iterations,
            penalty_excess,
            min_increase,
            updates,
        });
    }
    Ok(out)
}

pub fn accuracy_outcome(runs: &[RunRecord]) -> Outcome {
    let mut out = Outcome::new("convergence", "max |estimate - exact| / r");
    for run in runs {
        out.record(run.within(), run.error(), || {
            format!("rho={} n={} m={}: estimate {} vs exact {}", run.rho, run.n, run.m, run.estimate, run.exact)
        });
    }
    out
}
