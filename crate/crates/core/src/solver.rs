//! Sign-step dual ascent.
//!
//! Each iteration estimates `eta` and `xi`. If `sum_i mu_i |1 - eta_i|` is at
//! least `eps2`, every `alpha_i` moves by `lambda * sign(1 - eta_i)`; otherwise,
//! if `sum_j nu_j |xi_j - 1|` is at least `eps2`, every `beta_j` moves by
//! `lambda * sign(xi_j - 1)`; otherwise the loop stops and the estimate is
//! `(sum mu alpha - sum nu beta - omega)^(1/rho)` with `omega` the estimated
//! penalty.
//!
//! In paper mode `lambda` is fixed. In practical mode the step adapts between
//! `lambda` and `lambda_max`: a trial step is kept only if the directional
//! derivative at the trial point is still positive (which, by concavity,
//! certifies that `g` increased), otherwise it is halved; accepted steps
//! double the next trial. Steps are powers of two times `lambda`, so `alpha`
//! and `beta` stay on the `lambda` lattice.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augkde::{default_anchor, AugmentedKdeTree, BackendKind, ThresholdSampling, TreeConfig};
use crate::dual::{DualState, PairTable};
use crate::error::Result;
use crate::kde::{DistancePromise, SmoothKernel};
use crate::params::{HolderPair, SolverParams};
use crate::points::max_cross_distance;
use crate::preprocess::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Gradients and penalty by direct O(nm) summation.
    #[default]
    Exact,
    /// Gradients and penalty through augmented KDE trees.
    Sampling,
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Engine::Exact => "exact",
            Engine::Sampling => "sampling",
        })
    }
}

impl std::str::FromStr for Engine {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Engine::Exact),
            "sampling" => Ok(Engine::Sampling),
            other => Err(format!("unknown engine `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Update {
    Alpha,
    Beta,
}

/// Snapshot handed to the progress hook. Dual quantities are in units of
/// `r^rho`.
#[derive(Debug)]
pub struct Progress<'a> {
    pub iteration: u64,
    pub sum_alpha: f64,
    pub sum_beta: f64,
    /// The update about to be applied, if any.
    pub update: Option<Update>,
    /// Exact `g`, exact engine only.
    pub objective: Option<f64>,
    /// Exact penalty, exact engine only.
    pub penalty: Option<f64>,
    pub state: &'a DualState,
}

#[derive(Default)]
pub struct SolveOptions<'a> {
    pub sampling: ThresholdSampling,
    pub observer: Option<&'a mut dyn FnMut(&Progress<'_>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    /// Approximation of `R_rho`, in units of length.
    pub estimate: f64,
    /// `sum mu alpha - sum nu beta - omega`, rescaled to absolute units (`r^rho`).
    pub dual_value: f64,
    pub penalty: f64,
    pub iterations: u64,
    pub termination: Termination,
    pub alpha_updates: u64,
    pub beta_updates: u64,
    /// Gradient evaluations including rejected trial steps.
    pub evaluations: u64,
    pub final_sum_alpha: f64,
    pub final_sum_beta: f64,
    pub params: SolverParams,
    pub r: f64,
    pub seed: u64,
    pub engine: Engine,
    #[serde(skip)]
    pub wall_time: Duration,
    /// Final dual iterate, in units of `r^rho`.
    pub state: DualState,
}

/// Evaluates `eta`, `xi` and the penalty for one instance with a fixed
/// engine. Works in the units of the instance it is given.
pub struct Estimator<'a> {
    inst: &'a ProblemInstance,
    hp: HolderPair,
    engine: Engine,
    table: Option<PairTable>,
    kernel: SmoothKernel,
    promise: DistancePromise,
    anchor: f64,
    delta_call: f64,
    seed: u64,
    sampling: ThresholdSampling,
}

const PAR_QUERIES: usize = 64;

impl<'a> Estimator<'a> {
    pub fn new(
        inst: &'a ProblemInstance,
        params: &SolverParams,
        engine: Engine,
        seed: u64,
        sampling: ThresholdSampling,
    ) -> Self {
        let hp = params.holder();
        let sigma_r = inst.sigma_actual * inst.r;
        let kernel = SmoothKernel::new(hp.s, params.eps0, sigma_r);
        let (table, promise) = match engine {
            Engine::Exact => (Some(PairTable::new(inst, hp)), DistancePromise { min: sigma_r, phi: 1.0 }),
            Engine::Sampling => {
                let far = max_cross_distance(&inst.mu, &inst.nu);
                (None, DistancePromise { min: sigma_r, phi: (far / sigma_r).max(1.0) })
            }
        };
        let calls = (params.max_iters as f64) * (inst.n() + inst.m() + 1) as f64;
        let anchor = default_anchor(params.eps0, sigma_r, inst.n().max(inst.m()), promise.phi, hp.s, params.eps1);
        Self {
            inst,
            hp,
            engine,
            table,
            kernel,
            promise,
            anchor,
            delta_call: params.delta / calls.max(1.0),
            seed,
            sampling,
        }
    }

    fn tree_config(&self, s2: f64, eps1: f64, tag: u64) -> TreeConfig {
        TreeConfig {
            s2,
            kernel: self.kernel,
            backend: BackendKind::Sampling { eps: eps1, delta: self.delta_call, promise: self.promise },
            eps: eps1,
            delta: self.delta_call,
            sampling: self.sampling,
            anchor: self.anchor,
            adaptive_anchor: true,
            seed: self.seed,
            tag,
        }
    }

    fn run_queries<F>(&self, count: usize, f: F) -> Result<Vec<f64>>
    where
        F: Fn(usize) -> Result<f64> + Sync + Send,
    {
        if count >= PAR_QUERIES {
            (0..count).into_par_iter().map(f).collect()
        } else {
            (0..count).map(f).collect()
        }
    }

    /// Estimates of `eta_i`; `call` keys the random streams.
    pub fn est_alpha(&self, state: &DualState, eps1: f64, tau: f64, call: u64) -> Result<Vec<f64>> {
        if let Some(t) = &self.table {
            return Ok(t.grads(&state.alpha, &state.beta).0);
        }
        let neg_beta: Vec<f64> = state.beta.iter().map(|b| -b).collect();
        let tree = AugmentedKdeTree::build(
            self.inst.nu.coords(),
            self.inst.nu.dim(),
            &neg_beta,
            self.inst.nu.masses(),
            self.tree_config(self.hp.s - 1.0, eps1, 3 * call),
        )?;
        let scale = self.hp.s_c_s();
        self.run_queries(self.inst.n(), |i| {
            let v = scale * tree.query(self.inst.mu.point(i), -state.alpha[i], i as u64)?;
            Ok(if v < tau { 0.0 } else { v })
        })
    }

    /// Estimates of `xi_j`.
    pub fn est_beta(&self, state: &DualState, eps1: f64, tau: f64, call: u64) -> Result<Vec<f64>> {
        if let Some(t) = &self.table {
            return Ok(t.grads(&state.alpha, &state.beta).1);
        }
        let tree = AugmentedKdeTree::build(
            self.inst.mu.coords(),
            self.inst.mu.dim(),
            &state.alpha,
            self.inst.mu.masses(),
            self.tree_config(self.hp.s - 1.0, eps1, 3 * call + 1),
        )?;
        let scale = self.hp.s_c_s();
        self.run_queries(self.inst.m(), |j| {
            let v = scale * tree.query(self.inst.nu.point(j), state.beta[j], j as u64)?;
            Ok(if v < tau { 0.0 } else { v })
        })
    }

    /// Both gradient estimates. The exact engine shares one pass.
    pub fn est_grads(&self, state: &DualState, eps1: f64, tau: f64, call: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        if let Some(t) = &self.table {
            return Ok(t.grads(&state.alpha, &state.beta));
        }
        Ok((self.est_alpha(state, eps1, tau, call)?, self.est_beta(state, eps1, tau, call)?))
    }

    /// Estimate of the penalty `C_s sum_ij mu_i nu_j (t_ij / D_ij)^s`.
    pub fn est_penalty(&self, state: &DualState, eps1: f64, call: u64) -> Result<f64> {
        if let Some(t) = &self.table {
            return Ok(t.penalty(&state.alpha, &state.beta));
        }
        let tree = AugmentedKdeTree::build(
            self.inst.mu.coords(),
            self.inst.mu.dim(),
            &state.alpha,
            self.inst.mu.masses(),
            self.tree_config(self.hp.s, eps1, 3 * call + 2),
        )?;
        let per_query = self.run_queries(self.inst.m(), |j| tree.query(self.inst.nu.point(j), state.beta[j], j as u64))?;
        let sum: f64 = per_query.iter().zip(self.inst.nu.masses()).map(|(x, nu)| nu * x).sum();
        Ok(self.hp.c_s * sum)
    }

    pub fn engine(&self) -> Engine {
        self.engine
    }

    pub fn table(&self) -> Option<&PairTable> {
        self.table.as_ref()
    }
}

/// Runs the ascent with default options.
pub fn solve(inst: &ProblemInstance, hp: &HolderPair, params: &SolverParams, engine: Engine, seed: u64) -> Result<SolverReport> {
    solve_with(inst, hp, params, engine, seed, SolveOptions::default())
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Runs the ascent on `inst` (internally rescaled to `r = 1`).
pub fn solve_with(
    inst: &ProblemInstance,
    hp: &HolderPair,
    params: &SolverParams,
    engine: Engine,
    seed: u64,
    mut opts: SolveOptions<'_>,
) -> Result<SolverReport> {
    let start = Instant::now();
    let norm = inst.normalized();
    let est = Estimator::new(&norm, params, engine, seed, opts.sampling);
    let (n, m) = (norm.n(), norm.m());
    let mu = norm.mu.masses();
    let nu = norm.nu.masses();
    let (eps1, eps2, tau) = (params.eps1, params.eps2, params.tau);
    let lam_min = params.lambda;
    let lam_max = params.lambda_max.max(lam_min);

    let mut st = DualState::zeros(n, m);
    let mut call = 0u64;
    let (mut eta, mut xi) = est.est_grads(&st, eps1, tau, call)?;
    let mut evaluations = 1u64;
    let (mut step_a, mut step_b) = (lam_max, lam_max);
    let (mut alpha_updates, mut beta_updates) = (0u64, 0u64);
    let mut termination = Termination::Converged;

    let (mut sa, mut sb);
    loop {
        sa = mu.iter().zip(&eta).map(|(w, e)| w * (1.0 - e).abs()).sum::<f64>();
        sb = nu.iter().zip(&xi).map(|(w, x)| w * (x - 1.0).abs()).sum::<f64>();
        let update = if sa >= eps2 {
            Some(Update::Alpha)
        } else if sb >= eps2 {
            Some(Update::Beta)
        } else {
            None
        };
        if let Some(obs) = opts.observer.as_mut() {
            let (objective, penalty) = match est.table() {
                Some(t) => (Some(t.objective(&st.alpha, &st.beta)), Some(t.penalty(&st.alpha, &st.beta))),
                None => (None, None),
            };
            obs(&Progress { iteration: st.iteration, sum_alpha: sa, sum_beta: sb, update, objective, penalty, state: &st });
        }
        let Some(update) = update else { break };
        if st.iteration >= params.max_iters {
            termination = Termination::MaxIters;
            break;
        }
        match update {
            Update::Alpha => {
                let dir: Vec<f64> = eta.iter().map(|e| sign(1.0 - e)).collect();
                loop {
                    let mut trial = st.clone();
                    for (a, d) in trial.alpha.iter_mut().zip(&dir) {
                        *a += step_a * d;
                    }
                    call += 1;
                    evaluations += 1;
                    let (e2, x2) = est.est_grads(&trial, eps1, tau, call)?;
                    let slope: f64 = mu.iter().zip(&e2).zip(&dir).map(|((w, e), d)| w * (1.0 - e) * d).sum();
                    if slope > 0.0 || step_a <= lam_min {
                        st = trial;
                        eta = e2;
                        xi = x2;
                        break;
                    }
                    step_a = (step_a * 0.5).max(lam_min);
                }
                step_a = (step_a * 2.0).min(lam_max);
                alpha_updates += 1;
            }
            Update::Beta => {
                let dir: Vec<f64> = xi.iter().map(|x| sign(x - 1.0)).collect();
                loop {
                    let mut trial = st.clone();
                    for (b, d) in trial.beta.iter_mut().zip(&dir) {
                        *b += step_b * d;
                    }
                    call += 1;
                    evaluations += 1;
                    let (e2, x2) = est.est_grads(&trial, eps1, tau, call)?;
                    let slope: f64 = nu.iter().zip(&x2).zip(&dir).map(|((w, x), d)| w * (x - 1.0) * d).sum();
                    if slope > 0.0 || step_b <= lam_min {
                        st = trial;
                        eta = e2;
                        xi = x2;
                        break;
                    }
                    step_b = (step_b * 0.5).max(lam_min);
                }
                step_b = (step_b * 2.0).min(lam_max);
                beta_updates += 1;
            }
        }
        st.iteration += 1;
    }

    call += 1;
    let omega = est.est_penalty(&st, eps1, call)?;
    let linear: f64 = mu.iter().zip(&st.alpha).map(|(w, a)| w * a).sum::<f64>()
        - nu.iter().zip(&st.beta).map(|(w, b)| w * b).sum::<f64>();
    let dual_norm = linear - omega;
    let scale = inst.r.powf(hp.rho);
    Ok(SolverReport {
        estimate: dual_norm.max(0.0).powf(1.0 / hp.rho) * inst.r,
        dual_value: dual_norm * scale,
        penalty: omega * scale,
        iterations: st.iteration,
        termination,
        alpha_updates,
        beta_updates,
        evaluations,
        final_sum_alpha: sa,
        final_sum_beta: sb,
        params: params.clone(),
        r: inst.r,
        seed,
        engine,
        wall_time: start.elapsed(),
        state: st,
    })
}

/// Derives parameters, preprocesses, re-anchors the parameters and solves.
pub fn compute_distance(
    mu: &crate::points::WeightedPointSet,
    nu: &crate::points::WeightedPointSet,
    rho: f64,
    eps: f64,
    mode: crate::params::Mode,
    engine: Engine,
    seed: u64,
) -> Result<(ProblemInstance, SolverReport)> {
    let p0 = crate::params::derive_params(rho, eps, mu.len(), nu.len(), mode, None)?;
    let inst = crate::preprocess::preprocess(mu, nu, &p0)?;
    let params = p0.fit(&inst)?;
    let report = solve(&inst, &params.holder(), &params, engine, seed)?;
    Ok((inst, report))
}
