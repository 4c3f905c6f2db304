//! The dual objective, its gradients, the penalty term and couplings, all by
//! direct summation.
//!
//! With `t_ij = (alpha_i - beta_j)^+` and `D_ij = |x_i - y_j|`:
//!
//! ```text
//! g(alpha, beta) = sum_i mu_i alpha_i - sum_j nu_j beta_j - C_s sum_ij mu_i nu_j (t_ij / D_ij)^s
//! eta_i = s C_s sum_j nu_j t_ij^(s-1) / D_ij^s      (dg/dalpha_i = mu_i (1 - eta_i))
//! xi_j  = s C_s sum_i mu_i t_ij^(s-1) / D_ij^s      (dg/dbeta_j  = -nu_j (1 - xi_j))
//! ```
//!
//! A pair with `D_ij = 0` contributes nothing while `t_ij = 0` and an
//! infinite penalty otherwise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{pow_nonneg, HolderPair};
use crate::points::Coupling;
use crate::preprocess::ProblemInstance;

/// Dual variables, in units of `r^rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub iteration: u64,
}

impl DualState {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self { alpha: vec![0.0; n], beta: vec![0.0; m], iteration: 0 }
    }
}

const DENSE_LIMIT: usize = 1_000_000;
const PAR_THRESHOLD: usize = 1 << 14;

#[inline]
fn ratio_term(t: f64, d: f64, hp: &HolderPair) -> f64 {
    if t <= 0.0 {
        0.0
    } else if d == 0.0 {
        f64::INFINITY
    } else {
        hp.pow_s(t / d)
    }
}

#[inline]
fn grad_term(t: f64, d: f64, hp: &HolderPair) -> f64 {
    if t <= 0.0 {
        0.0
    } else if d == 0.0 {
        f64::INFINITY
    } else {
        hp.pow_s1(t) / hp.pow_s(d)
    }
}

/// `(sum_ij mu_i nu_j (gamma_ij / (mu_i nu_j) D_ij)^rho)^(1/rho)`, with 0/0 = 0.
pub fn primal_cost(inst: &ProblemInstance, gamma: &Coupling, rho: f64) -> Result<f64> {
    gamma.check(inst.mu.masses(), inst.nu.masses(), 1e-6)?;
    let mut total = 0.0;
    for i in 0..inst.n() {
        let mu = inst.mu.mass(i);
        let mut row = 0.0;
        for j in 0..inst.m() {
            let g = gamma.get(i, j);
            let d = inst.distance(i, j);
            if g > 0.0 && d > 0.0 {
                let w = mu * inst.nu.mass(j);
                row += w * (g / w * d).powf(rho);
            }
        }
        total += row;
    }
    Ok(total.powf(1.0 / rho))
}

/// The penalty `C_s sum_ij mu_i nu_j (t_ij / D_ij)^s`.
pub fn penalty_exact(inst: &ProblemInstance, state: &DualState, hp: &HolderPair) -> f64 {
    let mut total = 0.0;
    for i in 0..inst.n() {
        let mut row = 0.0;
        for j in 0..inst.m() {
            let t = state.alpha[i] - state.beta[j];
            row += inst.nu.mass(j) * ratio_term(t, inst.distance(i, j), hp);
        }
        total += inst.mu.mass(i) * row;
    }
    hp.c_s * total
}

/// `g(alpha, beta)`.
pub fn dual_objective(inst: &ProblemInstance, state: &DualState, hp: &HolderPair) -> f64 {
    linear_part(inst.mu.masses(), inst.nu.masses(), state) - penalty_exact(inst, state, hp)
}

fn linear_part(mu: &[f64], nu: &[f64], state: &DualState) -> f64 {
    let a: f64 = mu.iter().zip(&state.alpha).map(|(m, a)| m * a).sum();
    let b: f64 = nu.iter().zip(&state.beta).map(|(n, b)| n * b).sum();
    a - b
}

/// `eta_i`, so that `dg/dalpha_i = mu_i (1 - eta_i)`.
pub fn grad_alpha_exact(inst: &ProblemInstance, state: &DualState, hp: &HolderPair) -> Vec<f64> {
    (0..inst.n())
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..inst.m() {
                let t = state.alpha[i] - state.beta[j];
                acc += inst.nu.mass(j) * grad_term(t, inst.distance(i, j), hp);
            }
            hp.s_c_s() * acc
        })
        .collect()
}

/// `xi_j`, so that `dg/dbeta_j = -nu_j (1 - xi_j)`.
pub fn grad_beta_exact(inst: &ProblemInstance, state: &DualState, hp: &HolderPair) -> Vec<f64> {
    (0..inst.m())
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..inst.n() {
                let t = state.alpha[i] - state.beta[j];
                acc += inst.mu.mass(i) * grad_term(t, inst.distance(i, j), hp);
            }
            hp.s_c_s() * acc
        })
        .collect()
}

/// `gamma_ij = s C_s mu_i nu_j t_ij^(s-1) / D_ij^s`, the coupling that
/// minimizes the Lagrangian at `(alpha, beta)`.
pub fn coupling_entry(inst: &ProblemInstance, state: &DualState, hp: &HolderPair, i: usize, j: usize) -> f64 {
    let t = state.alpha[i] - state.beta[j];
    hp.s_c_s() * inst.mu.mass(i) * inst.nu.mass(j) * grad_term(t, inst.distance(i, j), hp)
}

pub fn coupling_from_dual(inst: &ProblemInstance, state: &DualState, hp: &HolderPair) -> Result<Coupling> {
    let size = inst.n() * inst.m();
    if size > DENSE_LIMIT {
        return Err(Error::DenseTooLarge(size));
    }
    let mut c = Coupling::zeros(inst.n(), inst.m());
    for i in 0..inst.n() {
        for j in 0..inst.m() {
            c.set(i, j, coupling_entry(inst, state, hp, i, j));
        }
    }
    Ok(c)
}

/// `(emd, sup_ij (1/(mu_i nu_j))^((rho-1)/rho) * emd)`.
pub fn sandwich_bounds(emd: f64, mu: &[f64], nu: &[f64], rho: f64) -> (f64, f64) {
    let min_mu = mu.iter().copied().fold(f64::INFINITY, f64::min);
    let min_nu = nu.iter().copied().fold(f64::INFINITY, f64::min);
    let factor = (1.0 / (min_mu * min_nu)).powf((rho - 1.0) / rho);
    (emd, factor * emd)
}

/// Dense cache of `1/D_ij^s` for repeated exact evaluation at oracle and
/// exact-engine scale. Zero distances are stored as infinity.
#[derive(Debug, Clone)]
pub struct PairTable {
    pub hp: HolderPair,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub n: usize,
    pub m: usize,
    inv_ds: Vec<f64>,
}

impl PairTable {
    pub fn new(inst: &ProblemInstance, hp: HolderPair) -> Self {
        let (n, m) = (inst.n(), inst.m());
        let mut inv_ds = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                let d = inst.distance(i, j);
                inv_ds.push(if d == 0.0 { f64::INFINITY } else { 1.0 / pow_nonneg(d, hp.s) });
            }
        }
        Self { hp, mu: inst.mu.masses().to_vec(), nu: inst.nu.masses().to_vec(), n, m, inv_ds }
    }

    #[inline]
    pub fn inv_ds(&self, i: usize, j: usize) -> f64 {
        self.inv_ds[i * self.m + j]
    }

    /// True when some pair has zero distance.
    pub fn has_zero_distance(&self) -> bool {
        self.inv_ds.iter().any(|v| v.is_infinite())
    }

    #[inline]
    fn term_s1(&self, t: f64, w: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            self.hp.pow_s1(t) * w
        }
    }

    pub fn penalty(&self, alpha: &[f64], beta: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            let row = &self.inv_ds[i * self.m..(i + 1) * self.m];
            let mut acc = 0.0;
            for j in 0..self.m {
                let t = alpha[i] - beta[j];
                if t > 0.0 {
                    acc += self.nu[j] * self.hp.pow_s(t) * row[j];
                }
            }
            total += self.mu[i] * acc;
        }
        self.hp.c_s * total
    }

    pub fn objective(&self, alpha: &[f64], beta: &[f64]) -> f64 {
        let a: f64 = self.mu.iter().zip(alpha).map(|(m, a)| m * a).sum();
        let b: f64 = self.nu.iter().zip(beta).map(|(n, b)| n * b).sum();
        a - b - self.penalty(alpha, beta)
    }

    fn eta_row(&self, alpha: &[f64], beta: &[f64], i: usize) -> f64 {
        let row = &self.inv_ds[i * self.m..(i + 1) * self.m];
        let mut acc = 0.0;
        for j in 0..self.m {
            acc += self.nu[j] * self.term_s1(alpha[i] - beta[j], row[j]);
        }
        self.hp.s_c_s() * acc
    }

    fn xi_col(&self, alpha: &[f64], beta: &[f64], j: usize) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += self.mu[i] * self.term_s1(alpha[i] - beta[j], self.inv_ds[i * self.m + j]);
        }
        self.hp.s_c_s() * acc
    }

    /// `(eta, xi)`. Row and column sums are accumulated in index order, so the
    /// result does not depend on the thread count.
    pub fn grads(&self, alpha: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        if self.n * self.m >= PAR_THRESHOLD {
            let eta = (0..self.n).into_par_iter().map(|i| self.eta_row(alpha, beta, i)).collect();
            let xi = (0..self.m).into_par_iter().map(|j| self.xi_col(alpha, beta, j)).collect();
            (eta, xi)
        } else {
            let eta = (0..self.n).map(|i| self.eta_row(alpha, beta, i)).collect();
            let xi = (0..self.m).map(|j| self.xi_col(alpha, beta, j)).collect();
            (eta, xi)
        }
    }
}
