//! Weighted point sets and couplings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A discrete distribution: points in `R^dim` with strictly positive masses
/// summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPointSet {
    coords: Vec<f64>,
    masses: Vec<f64>,
    dim: usize,
}

impl WeightedPointSet {
    /// Builds a point set, dropping zero-mass points and normalizing the rest.
    pub fn new(points: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self> {
        if points.len() != masses.len() {
            return Err(Error::InvalidPointSet(format!(
                "{} points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        let dim = points.first().map(Vec::len).ok_or(Error::EmptyInput)?;
        if dim == 0 {
            return Err(Error::InvalidPointSet("points have dimension 0".into()));
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        let mut kept = Vec::with_capacity(masses.len());
        for (p, &w) in points.iter().zip(&masses) {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidPointSet(format!("mass {w} is not a nonnegative number")));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidPointSet("non-finite coordinate".into()));
            }
            if w > 0.0 {
                coords.extend_from_slice(p);
                kept.push(w);
            }
        }
        Self::from_flat(coords, kept, dim)
    }

    /// Builds a point set from row-major coordinates.
    pub fn from_flat(coords: Vec<f64>, masses: Vec<f64>, dim: usize) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::EmptyInput);
        }
        if dim == 0 || coords.len() != masses.len() * dim {
            return Err(Error::InvalidPointSet("coordinate buffer does not match dimension".into()));
        }
        if masses.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidPointSet("masses must be strictly positive".into()));
        }
        let total: f64 = masses.iter().sum();
        let masses = masses.into_iter().map(|w| w / total).collect();
        Ok(Self { coords, masses, dim })
    }

    /// Uniform masses over the given points.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let k = points.len();
        Self::new(points, vec![1.0; k])
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn min_mass(&self) -> f64 {
        self.masses.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Same points with new masses (normalized).
    pub fn with_masses(&self, masses: Vec<f64>) -> Result<Self> {
        Self::from_flat(self.coords.clone(), masses, self.dim)
    }

    /// Multiplies every coordinate by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            coords: self.coords.iter().map(|c| c * factor).collect(),
            masses: self.masses.clone(),
            dim: self.dim,
        }
    }

    /// Appends one coordinate with the given value to every point.
    pub fn with_extra_coordinate(&self, value: f64) -> Self {
        let mut coords = Vec::with_capacity(self.len() * (self.dim + 1));
        for p in self.points() {
            coords.extend_from_slice(p);
            coords.push(value);
        }
        Self { coords, masses: self.masses.clone(), dim: self.dim + 1 }
    }

    pub(crate) fn from_parts_unchecked(coords: Vec<f64>, masses: Vec<f64>, dim: usize) -> Self {
        Self { coords, masses, dim }
    }
}

/// Euclidean distance.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Largest distance between a point of `a` and a point of `b`.
pub fn max_cross_distance(a: &WeightedPointSet, b: &WeightedPointSet) -> f64 {
    let mut best = 0.0f64;
    for x in a.points() {
        for y in b.points() {
            best = best.max(dist(x, y));
        }
    }
    best
}

/// Smallest distance between a point of `a` and a point of `b`.
pub fn min_cross_distance(a: &WeightedPointSet, b: &WeightedPointSet) -> f64 {
    let mut best = f64::INFINITY;
    for x in a.points() {
        for y in b.points() {
            best = best.min(dist(x, y));
        }
    }
    best
}

/// A dense transport plan between two distributions, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub n: usize,
    pub m: usize,
    pub entries: Vec<f64>,
}

impl Coupling {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self { n, m, entries: vec![0.0; n * m] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.m + j] = v;
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.chunks_exact(self.m).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for row in self.entries.chunks_exact(self.m) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// Largest absolute deviation of the marginals from `(mu, nu)`.
    pub fn marginal_error(&self, mu: &[f64], nu: &[f64]) -> f64 {
        let rows = self.row_sums().iter().zip(mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let cols = self.col_sums().iter().zip(nu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rows.max(cols)
    }

    /// Checks nonnegativity and marginals within `tol`.
    pub fn check(&self, mu: &[f64], nu: &[f64], tol: f64) -> Result<()> {
        if mu.len() != self.n || nu.len() != self.m {
            return Err(Error::DimensionMismatch { expected: self.n * self.m, found: mu.len() * nu.len() });
        }
        let neg = self.entries.iter().copied().fold(0.0f64, |acc, v| acc.max(-v));
        let err = self.marginal_error(mu, nu).max(neg);
        if err > tol {
            return Err(Error::CouplingMarginalViolation(err));
        }
        Ok(())
    }

    /// The independent coupling `mu ⊗ nu`.
    pub fn product(mu: &[f64], nu: &[f64]) -> Self {
        let mut c = Self::zeros(mu.len(), nu.len());
        for (i, a) in mu.iter().enumerate() {
            for (j, b) in nu.iter().enumerate() {
                c.set(i, j, a * b);
            }
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_masses_are_dropped_and_rest_normalized() {
        let w = WeightedPointSet::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![2.0, 0.0, 2.0]).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w.masses(), &[0.5, 0.5]);
        assert_eq!(w.point(1), &[2.0]);
    }

    #[test]
    fn ragged_points_rejected() {
        let e = WeightedPointSet::new(vec![vec![0.0], vec![1.0, 2.0]], vec![1.0, 1.0]).unwrap_err();
        assert_eq!(e, Error::DimensionMismatch { expected: 1, found: 2 });
    }

    #[test]
    fn product_coupling_has_right_marginals() {
        let c = Coupling::product(&[0.2, 0.8], &[0.5, 0.25, 0.25]);
        c.check(&[0.2, 0.8], &[0.5, 0.25, 0.25], 1e-15).unwrap();
    }
}
