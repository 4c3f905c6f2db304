//! Dimension lift, low-mass pruning, radius computation and random projection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SolverParams;
use crate::points::{max_cross_distance, min_cross_distance, Coupling, WeightedPointSet};

/// A preprocessed pair of distributions ready for the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub mu: WeightedPointSet,
    pub nu: WeightedPointSet,
    /// Largest cross distance of the inputs before the lift.
    pub r: f64,
    /// Smallest cross distance of `(mu, nu)` divided by `r`.
    pub sigma_actual: f64,
    /// Lift height as a fraction of `r` (0 when not lifted).
    pub lift_sigma: f64,
    pub lifted: bool,
    pub pruned_mass_mu: f64,
    pub pruned_mass_nu: f64,
    /// Original indices of the surviving points.
    pub kept_mu: Vec<usize>,
    pub kept_nu: Vec<usize>,
    pub dim_reduced: bool,
    pub warnings: Vec<String>,
}

impl ProblemInstance {
    /// Wraps two distributions without any preprocessing. Used by the oracles,
    /// which accept overlapping supports.
    pub fn raw(mu: WeightedPointSet, nu: WeightedPointSet) -> Result<Self> {
        if mu.dim() != nu.dim() {
            return Err(Error::DimensionMismatch { expected: mu.dim(), found: nu.dim() });
        }
        let rmax = max_cross_distance(&mu, &nu);
        let r = if rmax > 0.0 { rmax } else { 1.0 };
        let sigma_actual = min_cross_distance(&mu, &nu) / r;
        Ok(Self {
            kept_mu: (0..mu.len()).collect(),
            kept_nu: (0..nu.len()).collect(),
            mu,
            nu,
            r,
            sigma_actual,
            lift_sigma: 0.0,
            lifted: false,
            pruned_mass_mu: 0.0,
            pruned_mass_nu: 0.0,
            dim_reduced: false,
            warnings: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn m(&self) -> usize {
        self.nu.len()
    }

    /// Same instance with coordinates divided by `r`, so that `r = 1`.
    pub fn normalized(&self) -> Self {
        let f = 1.0 / self.r;
        Self { mu: self.mu.scaled(f), nu: self.nu.scaled(f), r: 1.0, ..self.clone() }
    }

    /// Distance between `x_i` and `y_j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        crate::points::dist(self.mu.point(i), self.nu.point(j))
    }
}

/// Appends `sigma * r` to every point of `mu` and 0 to every point of `nu`.
pub fn lift(mu: &WeightedPointSet, nu: &WeightedPointSet, sigma: f64, r: f64) -> (WeightedPointSet, WeightedPointSet) {
    (mu.with_extra_coordinate(sigma * r), nu.with_extra_coordinate(0.0))
}

/// Removes points with mass below `floor / k` and renormalizes the rest.
/// Returns the pruned set and the removed mass.
pub fn prune_low_mass(w: &WeightedPointSet, floor: f64) -> Result<(WeightedPointSet, f64)> {
    let (set, zeta, _) = prune_low_mass_indexed(w, floor)?;
    Ok((set, zeta))
}

/// As [`prune_low_mass`], also returning the indices of the survivors.
pub fn prune_low_mass_indexed(w: &WeightedPointSet, floor: f64) -> Result<(WeightedPointSet, f64, Vec<usize>)> {
    let cut = floor / w.len() as f64;
    let kept: Vec<usize> = (0..w.len()).filter(|&i| w.mass(i) >= cut).collect();
    if kept.is_empty() {
        return Err(Error::AllMassPruned);
    }
    if kept.len() == w.len() {
        return Ok((w.clone(), 0.0, kept));
    }
    let zeta: f64 = (0..w.len()).filter(|&i| w.mass(i) < cut).map(|i| w.mass(i)).sum();
    let dim = w.dim();
    let mut coords = Vec::with_capacity(kept.len() * dim);
    let mut masses = Vec::with_capacity(kept.len());
    for &i in &kept {
        coords.extend_from_slice(w.point(i));
        masses.push(w.mass(i) / (1.0 - zeta));
    }
    let total: f64 = masses.iter().sum();
    let masses = masses.into_iter().map(|m| m / total).collect();
    Ok((WeightedPointSet::from_parts_unchecked(coords, masses, dim), zeta, kept))
}

/// Coupling between a distribution and its pruned-and-renormalized version.
///
/// Rows index the original points, columns index the original points as
/// well (pruned columns carry no mass). Surviving points keep their own
/// mass; each pruned row spreads its mass over survivors in proportion to
/// their masses.
pub fn pruning_coupling(masses: &[f64], kept: &[usize], zeta: f64) -> Coupling {
    let k = masses.len();
    let mut keep = vec![false; k];
    for &i in kept {
        keep[i] = true;
    }
    let mut c = Coupling::zeros(k, k);
    for i in 0..k {
        if keep[i] {
            c.set(i, i, masses[i]);
        } else {
            for &j in kept {
                c.set(i, j, masses[i] * masses[j] / (1.0 - zeta));
            }
        }
    }
    c
}

/// Default projection target `ceil(8 ln(n+m) / eps^2)`.
pub fn jl_default_target(n: usize, m: usize, eps: f64) -> usize {
    (8.0 * ((n + m) as f64).ln() / (eps * eps)).ceil().max(1.0) as usize
}

/// Projects both point sets with one shared Gaussian matrix scaled by
/// `1/sqrt(target_dim)`. No-op when the dimension is already small enough.
pub fn jl_project(
    mu: &WeightedPointSet,
    nu: &WeightedPointSet,
    target_dim: usize,
    seed: u64,
) -> (WeightedPointSet, WeightedPointSet) {
    let d = mu.dim();
    if d <= target_dim {
        return (mu.clone(), nu.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (target_dim as f64).sqrt();
    let mat: Vec<f64> =
        (0..target_dim * d).map(|_| StandardNormal.sample(&mut rng)).map(|g: f64| g * scale).collect();
    let project = |w: &WeightedPointSet| {
        let mut coords = Vec::with_capacity(w.len() * target_dim);
        for p in w.points() {
            for row in mat.chunks_exact(d) {
                coords.push(row.iter().zip(p).map(|(a, b)| a * b).sum());
            }
        }
        WeightedPointSet::from_parts_unchecked(coords, w.masses().to_vec(), target_dim)
    };
    (project(mu), project(nu))
}

/// Knobs for [`preprocess_with`].
#[derive(Debug, Clone, Default)]
pub struct PreprocessOptions {
    /// Projection target; `None` uses [`jl_default_target`].
    pub jl_target: Option<usize>,
    pub jl_seed: u64,
}

/// Prunes, optionally projects, and lifts `(mu, nu)` with the separation and
/// mass floors of `params`.
pub fn preprocess(mu: &WeightedPointSet, nu: &WeightedPointSet, params: &SolverParams) -> Result<ProblemInstance> {
    preprocess_with(mu, nu, params, &PreprocessOptions::default())
}

pub fn preprocess_with(
    mu: &WeightedPointSet,
    nu: &WeightedPointSet,
    params: &SolverParams,
    opts: &PreprocessOptions,
) -> Result<ProblemInstance> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), found: nu.dim() });
    }
    let mut warnings = Vec::new();
    let (mu_p, zeta_mu, kept_mu) = prune_low_mass_indexed(mu, params.sigma_mu)?;
    let (nu_p, zeta_nu, kept_nu) = prune_low_mass_indexed(nu, params.sigma_nu)?;

    let target = opts.jl_target.unwrap_or_else(|| jl_default_target(mu.len(), nu.len(), params.eps));
    let dim_reduced = mu.dim() > target;
    let (mu_p, nu_p) = jl_project(&mu_p, &nu_p, target, opts.jl_seed);

    let mut r = max_cross_distance(&mu_p, &nu_p);
    if r == 0.0 {
        warnings.push("all points coincide; using r = 1".to_string());
        r = 1.0;
    }
    let (mu_l, nu_l) = lift(&mu_p, &nu_p, params.sigma, r);
    let sigma_actual = min_cross_distance(&mu_l, &nu_l) / r;
    Ok(ProblemInstance {
        mu: mu_l,
        nu: nu_l,
        r,
        sigma_actual,
        lift_sigma: params.sigma,
        lifted: true,
        pruned_mass_mu: zeta_mu,
        pruned_mass_nu: zeta_nu,
        kept_mu,
        kept_nu,
        dim_reduced,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_params, Mode};
    use crate::points::dist;

    fn set(points: &[&[f64]], masses: &[f64]) -> WeightedPointSet {
        WeightedPointSet::new(points.iter().map(|p| p.to_vec()).collect(), masses.to_vec()).unwrap()
    }

    #[test]
    fn lift_examples() {
        let (x, y) = lift(&set(&[&[0.0]], &[1.0]), &set(&[&[0.0]], &[1.0]), 0.1, 1.0);
        assert!((dist(x.point(0), y.point(0)) - 0.1).abs() < 1e-15);
        let (x, y) = lift(&set(&[&[0.0]], &[1.0]), &set(&[&[1.0]], &[1.0]), 0.1, 1.0);
        assert!((dist(x.point(0), y.point(0)) - 1.01f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn prune_examples() {
        let w = set(&[&[0.0], &[1.0]], &[0.5, 0.5]);
        let (p, z) = prune_low_mass(&w, 0.1).unwrap();
        assert_eq!((p.len(), z), (2, 0.0));
        let w = set(&[&[0.0], &[1.0]], &[0.98, 0.02]);
        let (p, z) = prune_low_mass(&w, 0.1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.masses(), &[1.0]);
        assert!((z - 0.02).abs() < 1e-15);
        let w = set(&[&[0.0], &[1.0], &[2.0]], &[1.0, 1.0, 1.0]);
        assert_eq!(prune_low_mass(&w, 0.99).unwrap().1, 0.0);
    }

    #[test]
    fn pruning_everything_fails() {
        let w = set(&[&[0.0], &[1.0]], &[0.5, 0.5]);
        assert_eq!(prune_low_mass_indexed(&w, 1.5).unwrap_err(), Error::AllMassPruned);
    }

    #[test]
    fn jl_skips_small_dimension_and_fixes_origin() {
        let a = set(&[&[1.0, 2.0]], &[1.0]);
        let (p, _) = jl_project(&a, &a, 4, 3);
        assert_eq!(p, a);
        let z = set(&[&[0.0; 10]], &[1.0]);
        let (p, _) = jl_project(&z, &z, 3, 99);
        assert!(p.point(0).iter().all(|&c| c == 0.0));
        assert_eq!(p.dim(), 3);
    }

    #[test]
    fn degenerate_coincident_input_uses_unit_radius() {
        let a = set(&[&[0.5, 0.5]], &[1.0]);
        let p = derive_params(1.5, 0.1, 1, 1, Mode::Practical, None).unwrap();
        let inst = preprocess(&a, &a, &p).unwrap();
        assert_eq!(inst.r, 1.0);
        assert_eq!(inst.warnings.len(), 1);
        assert!((inst.distance(0, 0) - p.sigma).abs() < 1e-15);
    }
}
