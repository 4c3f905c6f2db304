//! Weight-augmented kernel density estimation.
//!
//! Answers `sum_i mu_i ((w_i - beta)^+)^s2 K(x_i, y)` for arbitrary `(y, beta)`
//! over points carrying stored weights `w_i`. Points are kept in a balanced
//! tree sorted by weight with a KDE backend at every node. A query splits the
//! positive gaps `w_i - beta` into doubling cells `(sigma_l, sigma_{l+1}]`,
//! and inside each cell replaces the factor `gap^s2` by random thresholds
//! `w ~ U[sigma_l^s2, sigma_{l+1}^s2]`: the points whose gap clears a threshold
//! form a suffix of the sorted order, which the tree covers with O(log n)
//! canonical nodes.
//!
//! Since `P[w <= v] = (v - sigma_l^s2) / (sigma_{l+1}^s2 - sigma_l^s2)` for `v`
//! inside the cell, the cell contributes the deterministic base
//! `sigma_l^s2 * sum_cell mu_i K_i` plus the scaled threshold average, which
//! together are unbiased.
//!
//! Thresholds are drawn either i.i.d. or stratified (one uniform draw in each
//! of `T` equal slices of the cell). Stratification keeps each threshold
//! marginally uniform, never increases the variance, and bounds the relative
//! error deterministically by `(2^s2 - 1) / T`, so no median is needed. In
//! both modes the `T` thresholds of a cell are aggregated per suffix, so a
//! query costs O(points in range * log n) node lookups regardless of `T`.

use std::cell::RefCell;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kde::{DistancePromise, ExactBackend, KdeBackend, SamplingBackend, SmoothKernel};
use crate::params::pow_nonneg;
use crate::rng;

/// Node backend flavor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BackendKind {
    Exact,
    Sampling { eps: f64, delta: f64, promise: DistancePromise },
}

/// How the per-cell thresholds are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSampling {
    Iid,
    #[default]
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub s2: f64,
    pub kernel: SmoothKernel,
    pub backend: BackendKind,
    /// Target relative accuracy; sets `T`.
    pub eps: f64,
    /// Failure probability per query; sets the median count for i.i.d. draws.
    pub delta: f64,
    pub sampling: ThresholdSampling,
    /// Default smallest cell `sigma_1`.
    pub anchor: f64,
    /// Lower the anchor below the smallest positive gap of each query.
    pub adaptive_anchor: bool,
    pub seed: u64,
    /// Distinguishes trees built from the same seed (iteration, role).
    pub tag: u64,
}

impl TreeConfig {
    /// `T = ceil(16 * 2^s2 / eps^2)`, capped at 2^52.
    pub fn repetitions_t(&self) -> u64 {
        let t = (16.0 * 2f64.powf(self.s2) / (self.eps * self.eps)).ceil();
        t.min(2f64.powi(52)) as u64
    }

    /// Number of independent estimates whose median is returned.
    pub fn median_count(&self) -> usize {
        match self.sampling {
            ThresholdSampling::Iid => (9.0 * (1.0 / self.delta).ln()).ceil().max(1.0) as usize,
            ThresholdSampling::Stratified => 1,
        }
    }
}

/// Default grid anchor `eps0 * sigma * r / M` with `M = n * phi * 2^s / eps`.
pub fn default_anchor(eps0: f64, sigma_r: f64, n: usize, phi: f64, s: f64, eps: f64) -> f64 {
    let big_m = n as f64 * phi * 2f64.powf(s) / eps;
    eps0 * sigma_r / big_m
}

/// Grid `sigma_1 < 2 sigma_1 < ... < sigma_k < sigma_{k+1} = top` with
/// `sigma_{k+1} <= 2 sigma_k`. Returns `[sigma_1, ..., sigma_{k+1}]`.
pub fn grid(top: f64, anchor: f64) -> Vec<f64> {
    assert!(top > anchor && anchor > 0.0);
    let mut out = vec![anchor];
    let mut s = anchor;
    while 2.0 * s < top {
        s *= 2.0;
        out.push(s);
    }
    out.push(top);
    out
}

/// `P[w <= v]` for `w ~ U[lo^s2, hi^s2]` and `v = gap^s2`.
pub fn inclusion_probability(gap: f64, lo: f64, hi: f64, s2: f64) -> f64 {
    let (a, b, v) = (pow_nonneg(lo, s2), pow_nonneg(hi, s2), pow_nonneg(gap.max(0.0), s2));
    ((v - a) / (b - a)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub lo: usize,
    pub hi: usize,
    pub min: f64,
    pub max: f64,
    pub med: f64,
    pub children: Option<(usize, usize)>,
    pub backend: KdeBackend,
}

/// Balanced tree over points sorted by stored weight.
#[derive(Debug, Clone)]
pub struct AugmentedKdeTree {
    pub config: TreeConfig,
    dim: usize,
    /// Sorted order: `order[k]` is the caller's index of the k-th point.
    order: Vec<usize>,
    weights: Vec<f64>,
    coords: Vec<f64>,
    multipliers: Vec<f64>,
    nodes: Vec<TreeNode>,
}

thread_local! {
    static NODE_CACHE: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

impl AugmentedKdeTree {
    /// Builds the tree. `coords` is row-major with `dim` columns.
    pub fn build(
        coords: &[f64],
        dim: usize,
        stored_weights: &[f64],
        multipliers: &[f64],
        config: TreeConfig,
    ) -> Result<Self> {
        let n = stored_weights.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if multipliers.len() != n || coords.len() != n * dim {
            return Err(Error::DimensionMismatch { expected: n, found: multipliers.len() });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| stored_weights[a].total_cmp(&stored_weights[b]).then(a.cmp(&b)));
        let weights: Vec<f64> = order.iter().map(|&i| stored_weights[i]).collect();
        let sorted_coords: Vec<f64> =
            order.iter().flat_map(|&i| coords[i * dim..(i + 1) * dim].iter().copied()).collect();
        let sorted_mult: Vec<f64> = order.iter().map(|&i| multipliers[i]).collect();
        let mut tree = Self {
            config,
            dim,
            order,
            weights,
            coords: sorted_coords,
            multipliers: sorted_mult,
            nodes: Vec::with_capacity(2 * n),
        };
        tree.build_node(0, n);
        Ok(tree)
    }

    fn build_node(&mut self, lo: usize, hi: usize) -> usize {
        let id = self.nodes.len();
        let backend = self.make_backend(lo, hi, id);
        self.nodes.push(TreeNode {
            lo,
            hi,
            min: self.weights[lo],
            max: self.weights[hi - 1],
            med: self.weights[lo + (hi - lo - 1) / 2],
            children: None,
            backend,
        });
        if hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let l = self.build_node(lo, mid);
            let r = self.build_node(mid, hi);
            self.nodes[id].children = Some((l, r));
        }
        id
    }

    fn make_backend(&self, lo: usize, hi: usize, id: usize) -> KdeBackend {
        let coords = self.coords[lo * self.dim..hi * self.dim].to_vec();
        let mult = self.multipliers[lo..hi].to_vec();
        match self.config.backend {
            BackendKind::Exact => KdeBackend::Exact(ExactBackend::new(self.config.kernel, self.dim, coords, mult)),
            BackendKind::Sampling { eps, delta, promise } => KdeBackend::Sampling(SamplingBackend::new(
                self.config.kernel,
                self.dim,
                &coords,
                &mult,
                eps,
                delta,
                promise,
                [self.config.seed, self.config.tag, u64::MAX - id as u64, 0x6b6465],
            )),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        fn rec(t: &AugmentedKdeTree, id: usize) -> usize {
            match t.nodes[id].children {
                None => 1,
                Some((l, r)) => 1 + rec(t, l).max(rec(t, r)),
            }
        }
        rec(self, 0)
    }

    /// Stored weights in sorted order.
    pub fn sorted_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Caller indices of the points covered by a node.
    pub fn node_members(&self, node: usize) -> &[usize] {
        let n = &self.nodes[node];
        &self.order[n.lo..n.hi]
    }

    /// Canonical nodes covering the sorted positions `[a, b)`.
    pub fn cover(&self, a: usize, b: usize) -> Vec<usize> {
        let mut out = Vec::new();
        if a < b {
            self.cover_rec(0, a, b, &mut out);
        }
        out
    }

    fn cover_rec(&self, id: usize, a: usize, b: usize, out: &mut Vec<usize>) {
        let node = &self.nodes[id];
        if node.hi <= a || node.lo >= b {
            return;
        }
        if a <= node.lo && node.hi <= b {
            out.push(id);
            return;
        }
        if let Some((l, r)) = node.children {
            self.cover_rec(l, a, b, out);
            self.cover_rec(r, a, b, out);
        }
    }

    /// Canonical nodes for the points with weight `>= threshold` inside the
    /// half-open interval `(lo, hi]`.
    pub fn canonical_nodes(&self, threshold: f64, lo: f64, hi: f64) -> Vec<usize> {
        let a = self.weights.partition_point(|&w| w < threshold || w <= lo);
        let b = self.weights.partition_point(|&w| w <= hi);
        self.cover(a, b)
    }

    /// Brute-force value of the quantity the tree estimates.
    pub fn exact_value(&self, y: &[f64], beta: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.len() {
            let gap = self.weights[k] - beta;
            if gap > 0.0 {
                let x = &self.coords[k * self.dim..(k + 1) * self.dim];
                acc += self.multipliers[k] * pow_nonneg(gap, self.config.s2) * self.config.kernel.eval(x, y);
            }
        }
        acc
    }

    /// Median-of-estimates query; `query_index` selects the random stream.
    pub fn query(&self, y: &[f64], beta: f64, query_index: u64) -> Result<f64> {
        let reps = self.config.median_count();
        if reps == 1 {
            return self.query_once(y, beta, query_index, 0);
        }
        let mut v = (0..reps)
            .map(|rep| self.query_once(y, beta, query_index, rep as u64))
            .collect::<Result<Vec<f64>>>()?;
        v.sort_by(f64::total_cmp);
        Ok(v[v.len() / 2])
    }

    /// A single (mean over `T` thresholds) estimate.
    pub fn query_once(&self, y: &[f64], beta: f64, query_index: u64, rep: u64) -> Result<f64> {
        let n = self.len();
        let top = self.weights[n - 1] - beta;
        if !(top > 0.0) {
            return Ok(0.0);
        }
        let first = self.weights.partition_point(|&w| w - beta <= 0.0);
        let min_gap = self.weights[first] - beta;
        let anchor = if self.config.adaptive_anchor {
            self.config.anchor.min(0.5 * min_gap)
        } else {
            if min_gap <= self.config.anchor {
                return Err(Error::WeightPromiseViolated { gap: min_gap, anchor: self.config.anchor });
            }
            self.config.anchor
        };
        let sig = if top > anchor { grid(top, anchor) } else { vec![anchor, top] };
        let s2 = self.config.s2;
        let t_count = self.config.repetitions_t();

        NODE_CACHE.with(|cell| {
            let mut cache = cell.borrow_mut();
            cache.clear();
            cache.resize(self.nodes.len(), f64::NAN);
            let mut node_value = |id: usize| -> Result<f64> {
                let v = cache[id];
                if !v.is_nan() {
                    return Ok(v);
                }
                let v = self.nodes[id].backend.query(y)?;
                cache[id] = v;
                Ok(v)
            };
            let mut suffix_sum = |a: usize, b: usize| -> Result<f64> {
                let mut acc = 0.0;
                for id in self.cover(a, b) {
                    acc += node_value(id)?;
                }
                Ok(acc)
            };

            let mut total = 0.0;
            let mut start = first;
            for l in 0..sig.len() - 1 {
                let (lo, hi) = (sig[l], sig[l + 1]);
                let end = if l + 2 == sig.len() { n } else { start + self.weights[start..].partition_point(|&w| w - beta <= hi) };
                if end <= start {
                    continue;
                }
                let (a_pow, b_pow) = (pow_nonneg(lo, s2), pow_nonneg(hi, s2));
                let width = b_pow - a_pow;
                let vals: Vec<f64> = self.weights[start..end].iter().map(|&w| pow_nonneg(w - beta, s2)).collect();
                let key = [self.config.seed, self.config.tag, query_index, rng::pack(rep, l as u64)];
                let hist = self.threshold_histogram(&vals, a_pow, width, t_count, key);

                let mut random_part = 0.0;
                for (j, &h) in hist.iter().enumerate() {
                    if h > 0 {
                        random_part += h as f64 * suffix_sum(start + j, end)?;
                    }
                }
                total += a_pow * suffix_sum(start, end)? + width / t_count as f64 * random_part;
                start = end;
            }
            Ok(total)
        })
    }

    /// `hist[j]` = number of thresholds whose included set is exactly the
    /// suffix starting at local position `j` (thresholds clearing nothing are
    /// not counted). `vals` is nondecreasing.
    fn threshold_histogram(&self, vals: &[f64], a_pow: f64, width: f64, t_count: u64, key: [u64; 4]) -> Vec<u64> {
        let p = vals.len();
        let mut hist = vec![0u64; p];
        match self.config.sampling {
            ThresholdSampling::Iid => {
                let mut r = rng::stream(key);
                for _ in 0..t_count {
                    let w = a_pow + width * r.gen::<f64>();
                    let pos = vals.partition_point(|&v| v < w);
                    if pos < p {
                        hist[pos] += 1;
                    }
                }
            }
            ThresholdSampling::Stratified => {
                let tf = t_count as f64;
                let mut prev = 0u64;
                let mut last_q = u64::MAX;
                let mut last_u = 0.0;
                for (j, &v) in vals.iter().enumerate() {
                    let x = ((v - a_pow) / width * tf).clamp(0.0, tf);
                    let c = if x >= tf {
                        t_count
                    } else {
                        let q = (x.floor() as u64).min(t_count - 1);
                        if q != last_q {
                            last_q = q;
                            last_u = rng::uniform_at(key, q);
                        }
                        q + u64::from(last_u <= x - q as f64)
                    };
                    let c = c.max(prev);
                    hist[j] = c - prev;
                    prev = c;
                }
            }
        }
        hist
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(s2: f64, sampling: ThresholdSampling) -> TreeConfig {
        TreeConfig {
            s2,
            kernel: SmoothKernel { s: 3.0, floor: 0.01 },
            backend: BackendKind::Exact,
            eps: 0.25,
            delta: 0.1,
            sampling,
            anchor: 1e-3,
            adaptive_anchor: true,
            seed: 11,
            tag: 0,
        }
    }

    fn random_tree(n: usize, seed: u64, cfg: TreeConfig) -> AugmentedKdeTree {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<f64> = (0..2 * n).map(|_| r.gen::<f64>()).collect();
        let w: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let m: Vec<f64> = (0..n).map(|_| r.gen_range(0.5..1.5) / n as f64).collect();
        AugmentedKdeTree::build(&coords, 2, &w, &m, cfg).unwrap()
    }

    #[test]
    fn single_point_tree() {
        let t = AugmentedKdeTree::build(&[0.0], 1, &[0.7], &[1.0], config(1.0, ThresholdSampling::Iid)).unwrap();
        let root = t.root();
        assert_eq!((root.min, root.max, root.med), (0.7, 0.7, 0.7));
        assert_eq!(t.nodes().len(), 1);
    }

    #[test]
    fn four_points_sorted_and_split() {
        let t = AugmentedKdeTree::build(&[0.0; 4], 1, &[3.0, 1.0, 4.0, 2.0], &[1.0; 4], config(1.0, ThresholdSampling::Iid))
            .unwrap();
        assert_eq!(t.sorted_weights(), &[1.0, 2.0, 3.0, 4.0]);
        let (l, r) = t.root().children.unwrap();
        assert_eq!(t.node_members(l), &[1, 3]);
        assert_eq!(t.node_members(r), &[0, 2]);
        assert_eq!(t.root().med, 2.0);
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(
            AugmentedKdeTree::build(&[], 1, &[], &[], config(1.0, ThresholdSampling::Iid)).unwrap_err(),
            Error::EmptyInput
        );
    }

    #[test]
    fn query_above_all_weights_is_zero() {
        let t = random_tree(30, 1, config(1.0, ThresholdSampling::Iid));
        assert_eq!(t.query(&[0.5, 0.5], 1.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn grid_doubles_and_ends_at_top() {
        let g = grid(1.0, 0.1);
        assert_eq!(g, vec![0.1, 0.2, 0.4, 0.8, 1.0]);
        for w in g.windows(2) {
            assert!(w[1] <= 2.0 * w[0] && w[1] > w[0]);
        }
    }

    #[test]
    fn fixed_anchor_above_gap_is_a_promise_violation() {
        let mut cfg = config(1.0, ThresholdSampling::Iid);
        cfg.adaptive_anchor = false;
        cfg.anchor = 0.5;
        let t = AugmentedKdeTree::build(&[0.0, 0.0], 1, &[0.1, 0.9], &[0.5, 0.5], cfg).unwrap();
        assert!(matches!(t.query(&[1.0], 0.0, 0), Err(Error::WeightPromiseViolated { .. })));
    }

    #[test]
    fn stratified_error_within_deterministic_bound() {
        let mut cfg = config(2.0, ThresholdSampling::Stratified);
        cfg.eps = 0.5;
        let t = random_tree(80, 5, cfg);
        let bound = 3.0 / cfg.repetitions_t() as f64;
        for q in 0..20 {
            let beta = -1.0 + 0.1 * q as f64;
            let exact = t.exact_value(&[0.3, 0.6], beta);
            let est = t.query(&[0.3, 0.6], beta, q).unwrap();
            assert!((est - exact).abs() <= bound * exact + 1e-15, "{est} vs {exact}");
        }
    }
}
