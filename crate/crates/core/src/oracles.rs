//! Reference solvers for small instances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dual::{DualState, PairTable};
use crate::error::{Error, Result};
use crate::params::HolderPair;
use crate::points::Coupling;
use crate::preprocess::ProblemInstance;

const ORACLE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Certificate {
    /// Optimal dual pair (units `r^rho`) with the coupling it induces.
    Dual { alpha: Vec<f64>, beta: Vec<f64>, coupling: Coupling },
    /// Optimal flow of a min-cost-flow solve.
    Flow(Coupling),
    /// Plan returned by matrix scaling.
    Coupling(Coupling),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub certificate: Certificate,
    pub solver_tol: f64,
    pub iterations: usize,
}

impl OracleResult {
    pub fn coupling(&self) -> &Coupling {
        match &self.certificate {
            Certificate::Dual { coupling, .. } => coupling,
            Certificate::Flow(c) | Certificate::Coupling(c) => c,
        }
    }
}

fn check_size(inst: &ProblemInstance) -> Result<()> {
    let size = inst.n() * inst.m();
    if size > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge(size));
    }
    Ok(())
}

const MIN_BARRIER: f64 = 1e-8;
const BUDGET: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Exit {
    Reached,
    /// No further progress at working precision.
    Stalled,
    Budget,
}

/// Concave objective `g` plus a log barrier on zero-distance pairs.
struct BarrierProblem<'a> {
    table: &'a PairTable,
    zero_pairs: Vec<(usize, usize)>,
}

impl BarrierProblem<'_> {
    fn value(&self, z: &[f64], mu_b: f64) -> f64 {
        let (n, _) = (self.table.n, self.table.m);
        let (a, b) = z.split_at(n);
        let mut bar = 0.0;
        for &(i, j) in &self.zero_pairs {
            let slack = b[j] - a[i];
            if !(slack > 0.0) {
                return f64::NEG_INFINITY;
            }
            bar += slack.ln();
        }
        let g = self.table.objective(a, b);
        if !g.is_finite() {
            return f64::NEG_INFINITY;
        }
        g + mu_b * bar
    }

    /// Gradient and (negated) Hessian of the barrier objective.
    fn derivatives(&self, z: &[f64], mu_b: f64) -> (DVector<f64>, DMatrix<f64>) {
        let t = self.table;
        let (n, m) = (t.n, t.m);
        let (a, b) = z.split_at(n);
        let hp = t.hp;
        let k1 = hp.s_c_s();
        let k2 = hp.s_c_s() * (hp.s - 1.0);
        let mut grad = DVector::zeros(n + m);
        let mut neg_h = DMatrix::zeros(n + m, n + m);
        for i in 0..n {
            grad[i] += t.mu[i];
        }
        for j in 0..m {
            grad[n + j] -= t.nu[j];
        }
        for i in 0..n {
            for j in 0..m {
                let w = t.inv_ds(i, j);
                let tij = a[i] - b[j];
                if !w.is_finite() || tij <= 0.0 {
                    continue;
                }
                let mass = t.mu[i] * t.nu[j] * w;
                let g = k1 * mass * hp.pow_s1(tij);
                let h = k2 * mass * crate::params::pow_nonneg(tij, hp.s - 2.0);
                grad[i] -= g;
                grad[n + j] += g;
                neg_h[(i, i)] += h;
                neg_h[(n + j, n + j)] += h;
                neg_h[(i, n + j)] -= h;
                neg_h[(n + j, i)] -= h;
            }
        }
        for &(i, j) in &self.zero_pairs {
            let slack = b[j] - a[i];
            let g = mu_b / slack;
            let h = mu_b / (slack * slack);
            grad[i] -= g;
            grad[n + j] += g;
            neg_h[(i, i)] += h;
            neg_h[(n + j, n + j)] += h;
            neg_h[(i, n + j)] -= h;
            neg_h[(n + j, i)] -= h;
        }
        (grad, neg_h)
    }

    /// Levenberg-Marquardt ascent on the barrier objective. Returns the
    /// number of iterations used and how the loop ended.
    fn maximize(&self, z: &mut Vec<f64>, mu_b: f64, target: f64, bound: f64, budget: usize) -> (usize, Exit) {
        let mut f = self.value(z, mu_b);
        let mut lambda: f64 = 1.0;
        for it in 0..budget {
            let (grad, neg_h) = self.derivatives(z, mu_b);
            let spread = z.iter().copied().fold(f64::NEG_INFINITY, f64::max) - z.iter().copied().fold(f64::INFINITY, f64::min);
            let gap = grad.lp_norm(1) * (bound + spread);
            if gap <= target {
                return (it, Exit::Reached);
            }
            let diag_max = (0..neg_h.nrows()).map(|k| neg_h[(k, k)]).fold(0.0, f64::max);
            let floor = 1e-15 * (1.0 + diag_max);
            lambda = lambda.max(floor);
            loop {
                let mut sys = neg_h.clone();
                for k in 0..sys.nrows() {
                    sys[(k, k)] += lambda;
                }
                let Some(chol) = sys.cholesky() else {
                    lambda *= 4.0;
                    continue;
                };
                let d = chol.solve(&grad);
                let pred = grad.dot(&d) - 0.5 * d.dot(&(&neg_h * &d));
                let trial: Vec<f64> = z.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
                let f2 = self.value(&trial, mu_b);
                if !(pred > 1e-300) {
                    return (it, Exit::Stalled);
                }
                if pred <= 1e-11 * (1.0 + f.abs()) {
                    // Objective differences are at rounding level; judge by the gradient.
                    if f2.is_finite() && self.derivatives(&trial, mu_b).0.lp_norm(1) < grad.lp_norm(1) {
                        *z = trial;
                        f = f2;
                        lambda = (lambda / 4.0).max(floor);
                        break;
                    }
                    lambda *= 4.0;
                    if lambda > 1e30 {
                        return (it, Exit::Stalled);
                    }
                    continue;
                }
                let ratio = if f2.is_finite() { (f2 - f) / pred } else { f64::NEG_INFINITY };
                if ratio > 1e-4 {
                    *z = trial;
                    f = f2;
                    if ratio > 0.75 {
                        lambda = (lambda / 4.0).max(floor);
                    } else if ratio < 0.25 {
                        lambda *= 2.0;
                    }
                    break;
                }
                lambda *= 4.0;
                if lambda > 1e30 {
                    return (it, Exit::Stalled);
                }
            }
        }
        (budget, Exit::Budget)
    }
}

/// High-precision `R_rho(mu, nu)` by maximizing the dual.
///
/// Zero-distance pairs turn into constraints `alpha_i <= beta_j`, handled by a
/// log barrier driven to zero. `tol` is the target dual gap in units of
/// `r^rho`. Below a barrier weight of `1e-8` further stages are best effort,
/// so with zero-distance pairs the reported `solver_tol` can exceed `tol`.
pub fn exact_rrho(inst: &ProblemInstance, hp: &HolderPair, tol: f64) -> Result<OracleResult> {
    check_size(inst)?;
    let norm = inst.normalized();
    let table = PairTable::new(&norm, *hp);
    let (n, m) = (norm.n(), norm.m());
    let mut zero_pairs = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if !table.inv_ds(i, j).is_finite() {
                zero_pairs.push((i, j));
            }
        }
    }
    let sup = 1.0 / (norm.mu.min_mass() * norm.nu.min_mass());
    let bound = 4f64.powf(1.0 / hp.s) / 2.0 * sup.powf((hp.rho - 1.0) / hp.rho);
    let problem = BarrierProblem { table: &table, zero_pairs };

    let mut z = vec![0.0; n + m];
    let mut iterations = 0;
    let mut mu_b = 0.0;
    let budget_error = || Error::NonConvergence(format!("no convergence within {BUDGET} iterations"));
    if problem.zero_pairs.is_empty() {
        let (it, exit) = problem.maximize(&mut z, 0.0, tol, bound, BUDGET);
        if exit == Exit::Budget {
            return Err(budget_error());
        }
        iterations += it;
    } else {
        for v in z[n..].iter_mut() {
            *v = 0.1;
        }
        mu_b = 1e-2;
        let count = problem.zero_pairs.len() as f64;
        let floor = (0.5 * tol / count).max(1e-12);
        let dual_value = |z: &[f64]| table.objective(&z[..n], &z[n..]);
        let mut stage = 0;
        loop {
            let last = mu_b * count <= 0.5 * tol;
            let target = if last { 0.5 * tol } else { 1e-2 * mu_b };
            let refining = mu_b < 0.5 * MIN_BARRIER;
            let saved = z.clone();
            let (it, exit) = problem.maximize(&mut z, mu_b, target, bound, if refining { 200 } else { BUDGET });
            iterations += it;
            let keep = match exit {
                Exit::Reached => true,
                Exit::Stalled => !refining || dual_value(&z) > dual_value(&saved),
                Exit::Budget if stage > 2 => false,
                Exit::Budget => return Err(budget_error()),
            };
            if !keep {
                // Fall back to the last stage that reached its target.
                z = saved;
                mu_b *= 10.0;
                break;
            }
            if last || mu_b <= 1.5 * floor {
                break;
            }
            mu_b *= 0.1;
            stage += 1;
        }
    }

    let (a, b) = z.split_at(n);
    let g = table.objective(a, b);
    let state = DualState { alpha: a.to_vec(), beta: b.to_vec(), iteration: iterations as u64 };
    let mut coupling = Coupling::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let w = table.inv_ds(i, j);
            let v = if w.is_finite() {
                let t = a[i] - b[j];
                if t > 0.0 {
                    hp.s_c_s() * table.mu[i] * table.nu[j] * hp.pow_s1(t) * w
                } else {
                    0.0
                }
            } else {
                mu_b / (b[j] - a[i])
            };
            coupling.set(i, j, v);
        }
    }
    let scale = inst.r.powf(hp.rho);
    Ok(OracleResult {
        value: g.max(0.0).powf(1.0 / hp.rho) * inst.r,
        certificate: Certificate::Dual {
            alpha: state.alpha.iter().map(|v| v * scale).collect(),
            beta: state.beta.iter().map(|v| v * scale).collect(),
            coupling,
        },
        solver_tol: tol.max(mu_b * problem.zero_pairs.len() as f64),
        iterations,
    })
}

/// `R_rho` on a 2x2 instance by ternary search over the one free coupling entry.
pub fn ternary_2x2(inst: &ProblemInstance, hp: &HolderPair) -> Result<f64> {
    if inst.n() != 2 || inst.m() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: inst.n().max(inst.m()) });
    }
    let (mu, nu) = (inst.mu.masses(), inst.nu.masses());
    let rho = hp.rho;
    let d = [[inst.distance(0, 0), inst.distance(0, 1)], [inst.distance(1, 0), inst.distance(1, 1)]];
    let objective = |t: f64| {
        let g = [[t, mu[0] - t], [nu[0] - t, mu[1] - nu[0] + t]];
        let mut acc = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let gij = g[i][j].max(0.0);
                if gij > 0.0 && d[i][j] > 0.0 {
                    let w = mu[i] * nu[j];
                    acc += w * (gij / w * d[i][j]).powf(rho);
                }
            }
        }
        acc
    };
    let (mut lo, mut hi) = ((nu[0] - mu[1]).max(0.0), mu[0].min(nu[0]));
    while hi - lo > 1e-12 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if objective(a) <= objective(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    Ok(objective(0.5 * (lo + hi)).powf(1.0 / rho))
}

/// Earth mover's distance by successive shortest augmenting paths with
/// node potentials on the complete bipartite graph.
pub fn exact_emd(inst: &ProblemInstance) -> Result<OracleResult> {
    check_size(inst)?;
    let (n, m) = (inst.n(), inst.m());
    let cost: Vec<f64> = (0..n * m).map(|k| inst.distance(k / m, k % m)).collect();
    let mut supply = inst.mu.masses().to_vec();
    let mut demand = inst.nu.masses().to_vec();
    let mut flow = vec![0.0; n * m];
    let mut pot = vec![0.0; n + m];
    let tiny = 1e-15;
    let mut iterations = 0;
    let v = n + m;
    loop {
        let remaining: f64 = supply.iter().filter(|&&s| s > tiny).sum();
        if remaining <= 1e-13 || demand.iter().all(|&d| d <= tiny) {
            break;
        }
        iterations += 1;
        let mut dist = vec![f64::INFINITY; v];
        let mut prev = vec![usize::MAX; v];
        let mut done = vec![false; v];
        for i in 0..n {
            if supply[i] > tiny {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for k in 0..v {
                if !done[k] && dist[k] < best {
                    best = dist[k];
                    u = k;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < n {
                for j in 0..m {
                    let w = n + j;
                    if done[w] {
                        continue;
                    }
                    let rc = (cost[u * m + j] + pot[u] - pot[w]).max(0.0);
                    if dist[u] + rc < dist[w] {
                        dist[w] = dist[u] + rc;
                        prev[w] = u;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if done[i] || flow[i * m + j] <= tiny {
                        continue;
                    }
                    let rc = (-cost[i * m + j] + pot[u] - pot[i]).max(0.0);
                    if dist[u] + rc < dist[i] {
                        dist[i] = dist[u] + rc;
                        prev[i] = u;
                    }
                }
            }
        }
        let mut sink = usize::MAX;
        let mut best = f64::INFINITY;
        for j in 0..m {
            if demand[j] > tiny && dist[n + j] < best {
                best = dist[n + j];
                sink = n + j;
            }
        }
        if sink == usize::MAX {
            return Err(Error::NonConvergence("no augmenting path with remaining supply".into()));
        }
        for k in 0..v {
            pot[k] += dist[k].min(best);
        }
        // Walk back to the source, collecting the bottleneck.
        let mut amount = demand[sink - n];
        let mut node = sink;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if p >= n {
                amount = amount.min(flow[node * m + (p - n)]);
            }
            node = p;
        }
        amount = amount.min(supply[node]);
        let source = node;
        let mut node = sink;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if p < n {
                flow[p * m + (node - n)] += amount;
            } else {
                flow[node * m + (p - n)] -= amount;
            }
            node = p;
        }
        supply[source] -= amount;
        demand[sink - n] -= amount;
        if iterations > 100 * (n + m) * (n + m) + 1000 {
            return Err(Error::NonConvergence("augmenting path budget exhausted".into()));
        }
    }
    let value = flow.iter().zip(&cost).map(|(f, c)| f * c).sum();
    for f in flow.iter_mut() {
        *f = f.max(0.0);
    }
    Ok(OracleResult {
        value,
        certificate: Certificate::Flow(Coupling { n, m, entries: flow }),
        solver_tol: 1e-12,
        iterations,
    })
}

fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let mx = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + vals.map(|v| (v - mx).exp()).sum::<f64>().ln()
}

/// Entropy-regularized transport by alternating matrix scaling.
///
/// Returns `SNK_eta = <gamma, D> - eta H(gamma)` at the scaled plan, with
/// `H(gamma) = -sum gamma ln gamma`. Runs in the log domain when
/// `eta < 0.05 r`.
pub fn sinkhorn(inst: &ProblemInstance, eta: f64, tol: f64, max_iter: usize) -> Result<OracleResult> {
    check_size(inst)?;
    if !(eta > 0.0) {
        return Err(Error::OverrideNonPositive("eta"));
    }
    let (n, m) = (inst.n(), inst.m());
    let (mu, nu) = (inst.mu.masses(), inst.nu.masses());
    let cost: Vec<f64> = (0..n * m).map(|k| inst.distance(k / m, k % m)).collect();
    let mut plan = vec![0.0; n * m];
    let mut iterations = 0;

    if eta < 0.05 * inst.r {
        let mut f = vec![0.0; n];
        let mut g = vec![0.0; m];
        loop {
            iterations += 1;
            for i in 0..n {
                let lse = log_sum_exp((0..m).map(|j| (g[j] - cost[i * m + j]) / eta));
                f[i] = eta * mu[i].ln() - eta * lse;
            }
            for j in 0..m {
                let lse = log_sum_exp((0..n).map(|i| (f[i] - cost[i * m + j]) / eta));
                g[j] = eta * nu[j].ln() - eta * lse;
            }
            for i in 0..n {
                for j in 0..m {
                    plan[i * m + j] = ((f[i] + g[j] - cost[i * m + j]) / eta).exp();
                }
            }
            let err = row_error(&plan, mu, m);
            if err <= tol || iterations >= max_iter {
                break;
            }
        }
    } else {
        let kernel: Vec<f64> = cost.iter().map(|c| (-c / eta).exp()).collect();
        if kernel.iter().any(|&k| k == 0.0) {
            return Err(Error::NumericalUnderflow(format!("Gibbs kernel underflows at eta = {eta:e}")));
        }
        let mut u = vec![1.0; n];
        let mut v = vec![1.0; m];
        loop {
            iterations += 1;
            for i in 0..n {
                let kv: f64 = (0..m).map(|j| kernel[i * m + j] * v[j]).sum();
                u[i] = mu[i] / kv;
            }
            for j in 0..m {
                let ku: f64 = (0..n).map(|i| kernel[i * m + j] * u[i]).sum();
                v[j] = nu[j] / ku;
            }
            for i in 0..n {
                for j in 0..m {
                    plan[i * m + j] = u[i] * kernel[i * m + j] * v[j];
                }
            }
            if !plan.iter().all(|p| p.is_finite()) {
                return Err(Error::NumericalUnderflow("scaling vectors overflowed".into()));
            }
            let err = row_error(&plan, mu, m);
            if err <= tol || iterations >= max_iter {
                break;
            }
        }
    }
    let transport: f64 = plan.iter().zip(&cost).map(|(p, c)| p * c).sum();
    let neg_entropy: f64 = plan.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum();
    Ok(OracleResult {
        value: transport + eta * neg_entropy,
        certificate: Certificate::Coupling(Coupling { n, m, entries: plan }),
        solver_tol: tol,
        iterations,
    })
}

fn row_error(plan: &[f64], mu: &[f64], m: usize) -> f64 {
    plan.chunks_exact(m).zip(mu).map(|(row, w)| (row.iter().sum::<f64>() - w).abs()).sum()
}
