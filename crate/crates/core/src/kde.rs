//! The floored inverse-power kernel and two kernel-density backends.
//!
//! Both backends answer `query(y) ~ sum_i m_i K(x_i, y)`; the exact one by
//! direct summation, the sampling one by bucketing the multipliers into
//! geometric ranges and averaging uniform samples inside each bucket.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::pow_nonneg;
use crate::points::dist;
use crate::rng;

/// `K(x, y) = 1 / (floor + |x - y|^s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothKernel {
    pub s: f64,
    pub floor: f64,
}

impl SmoothKernel {
    /// Kernel with floor `eps0 * (sigma_r)^s`.
    pub fn new(s: f64, eps0: f64, sigma_r: f64) -> Self {
        Self { s, floor: eps0 * pow_nonneg(sigma_r, s) }
    }

    #[inline]
    pub fn eval_dist(&self, d: f64) -> f64 {
        1.0 / (self.floor + pow_nonneg(d, self.s))
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.eval_dist(dist(x, y))
    }
}

pub fn kernel_eval(k: &SmoothKernel, x: &[f64], y: &[f64]) -> f64 {
    k.eval(x, y)
}

/// Range of distances a query is allowed to see: `[min, phi * min]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistancePromise {
    pub min: f64,
    pub phi: f64,
}

impl DistancePromise {
    fn check(&self, d: f64) -> Result<()> {
        let lo = self.min * (1.0 - 1e-9);
        let hi = self.min * self.phi * (1.0 + 1e-9);
        if d < lo || d > hi {
            return Err(Error::AspectRatioViolated { dist: d, lo: self.min, hi: self.min * self.phi });
        }
        Ok(())
    }
}

/// Direct summation.
#[derive(Debug, Clone)]
pub struct ExactBackend {
    kernel: SmoothKernel,
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl ExactBackend {
    pub fn new(kernel: SmoothKernel, dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len(), weights.len() * dim);
        Self { kernel, dim, coords, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn query(&self, y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (x, w) in self.coords.chunks_exact(self.dim).zip(&self.weights) {
            acc += w * self.kernel.eval(x, y);
        }
        acc
    }
}

/// Splits indices into `(1+eps)`-geometric multiplier ranges over
/// `[min, max]` of the positive multipliers. Zero multipliers are dropped.
pub fn bucketize_multipliers(multipliers: &[f64], eps: f64) -> Vec<Vec<usize>> {
    let lo = multipliers.iter().copied().filter(|&m| m > 0.0).fold(f64::INFINITY, f64::min);
    if !lo.is_finite() {
        return Vec::new();
    }
    let base = (1.0 + eps).ln();
    let mut keyed: Vec<(u64, usize)> = multipliers
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(i, &m)| (((m / lo).ln() / base).floor().max(0.0) as u64, i))
        .collect();
    keyed.sort_unstable();
    let mut buckets: Vec<Vec<usize>> = Vec::new();
    let mut last = None;
    for (b, i) in keyed {
        if last != Some(b) {
            buckets.push(Vec::new());
            last = Some(b);
        }
        buckets.last_mut().expect("pushed above").push(i);
    }
    buckets
}

#[derive(Debug, Clone)]
struct Bucket {
    coords: Vec<f64>,
    weights: Vec<f64>,
}

/// Multiplier-bucketed uniform sampling.
#[derive(Debug, Clone)]
pub struct SamplingBackend {
    kernel: SmoothKernel,
    dim: usize,
    buckets: Vec<Bucket>,
    samples_per_bucket: usize,
    repetitions: usize,
    promise: DistancePromise,
    seed: [u64; 4],
}

impl SamplingBackend {
    /// Per-bucket sample count `ceil(4 R_K / eps^2)` where `R_K` bounds the
    /// spread of kernel values under the distance promise.
    pub fn sample_count(kernel: &SmoothKernel, promise: &DistancePromise, eps: f64) -> usize {
        let near = kernel.floor + pow_nonneg(promise.min, kernel.s);
        let far = kernel.floor + pow_nonneg(promise.min * promise.phi, kernel.s);
        let rk = far / near;
        let c = (4.0 * rk / (eps * eps)).ceil();
        if c >= usize::MAX as f64 {
            usize::MAX
        } else {
            c as usize
        }
    }

    pub fn repetitions(delta: f64) -> usize {
        (9.0 * (1.0 / delta).ln()).ceil().max(1.0) as usize
    }

    pub fn new(
        kernel: SmoothKernel,
        dim: usize,
        coords: &[f64],
        weights: &[f64],
        eps: f64,
        delta: f64,
        promise: DistancePromise,
        seed: [u64; 4],
    ) -> Self {
        let buckets = bucketize_multipliers(weights, eps)
            .into_iter()
            .map(|idx| Bucket {
                coords: idx.iter().flat_map(|&i| coords[i * dim..(i + 1) * dim].iter().copied()).collect(),
                weights: idx.iter().map(|&i| weights[i]).collect(),
            })
            .collect();
        Self {
            kernel,
            dim,
            buckets,
            samples_per_bucket: Self::sample_count(&kernel, &promise, eps),
            repetitions: Self::repetitions(delta),
            promise,
            seed,
        }
    }

    /// True when every bucket is small enough to be summed exhaustively.
    pub fn is_exhaustive(&self) -> bool {
        self.buckets.iter().all(|b| self.samples_per_bucket >= b.weights.len())
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    /// Query with the stream fixed at construction: deterministic in `y`.
    pub fn query(&self, y: &[f64]) -> Result<f64> {
        self.query_with_stream(y, self.seed)
    }

    /// Query drawing its samples from the stream `key`.
    pub fn query_with_stream(&self, y: &[f64], key: [u64; 4]) -> Result<f64> {
        if self.is_exhaustive() {
            return self.one_estimate(y, key, 0);
        }
        let mut est = (0..self.repetitions)
            .map(|rep| self.one_estimate(y, key, rep as u64))
            .collect::<Result<Vec<f64>>>()?;
        est.sort_by(f64::total_cmp);
        Ok(est[est.len() / 2])
    }

    fn one_estimate(&self, y: &[f64], key: [u64; 4], rep: u64) -> Result<f64> {
        let mut total = 0.0;
        for (b_idx, b) in self.buckets.iter().enumerate() {
            let size = b.weights.len();
            if self.samples_per_bucket >= size {
                for (x, w) in b.coords.chunks_exact(self.dim).zip(&b.weights) {
                    let d = dist(x, y);
                    self.promise.check(d)?;
                    total += w * self.kernel.eval_dist(d);
                }
            } else {
                let mut r = rng::stream([key[0], key[1], key[2] ^ rep, key[3] ^ ((b_idx as u64) << 40)]);
                let mut acc = 0.0;
                for _ in 0..self.samples_per_bucket {
                    let i = r.gen_range(0..size);
                    let d = dist(&b.coords[i * self.dim..(i + 1) * self.dim], y);
                    self.promise.check(d)?;
                    acc += b.weights[i] * self.kernel.eval_dist(d);
                }
                total += size as f64 * acc / self.samples_per_bucket as f64;
            }
        }
        Ok(total)
    }
}

/// A backend of either kind.
#[derive(Debug, Clone)]
pub enum KdeBackend {
    Exact(ExactBackend),
    Sampling(SamplingBackend),
}

impl KdeBackend {
    pub fn query(&self, y: &[f64]) -> Result<f64> {
        match self {
            KdeBackend::Exact(b) => Ok(b.query(y)),
            KdeBackend::Sampling(b) => b.query(y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        let k = SmoothKernel { s: 3.0, floor: 0.0 };
        assert_eq!(k.eval(&[0.0], &[2.0]), 0.125);
        let k = SmoothKernel::new(2.0, 0.1, 0.5);
        let v = k.eval_dist(0.5);
        assert!((v - 1.0 / (1.1 * 0.25)).abs() < 1e-12);
    }

    #[test]
    fn exact_backend_examples() {
        let k = SmoothKernel { s: 3.0, floor: 0.0 };
        assert_eq!(ExactBackend::new(k, 1, vec![], vec![]).query(&[0.0]), 0.0);
        assert_eq!(ExactBackend::new(k, 1, vec![2.0], vec![2.0]).query(&[0.0]), 0.25);
    }

    #[test]
    fn bucket_counts() {
        assert_eq!(bucketize_multipliers(&[0.1; 7], 0.5).len(), 1);
        let n = 100usize;
        let m: Vec<f64> = (0..n).map(|i| 1.0 / n as f64 + (1.0 - 1.0 / n as f64) * i as f64 / (n - 1) as f64).collect();
        let b = bucketize_multipliers(&m, 0.5);
        let expect = (n as f64).ln() / 1.5f64.ln();
        assert!(b.len() as f64 <= expect.ceil() + 1.0 && b.len() as f64 >= expect.floor());
        assert_eq!(b.iter().map(Vec::len).sum::<usize>(), n);
    }
}
