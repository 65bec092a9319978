//! Randomized rounding of reals in `[0,1]` onto a uniform grid.
//!
//! The unit interval is split into `K` subintervals of length `Δ = 1/K` with
//! endpoints `v_i = i/K`. A real `p` is written as a convex combination of
//! the two endpoints bracketing it; the combination weights double as the
//! probabilities of rounding `p` to either endpoint. Information vectors are
//! rounded coordinate-wise, giving product weights over grid tuples, and the
//! dot product of two such weight vectors is a symmetric positive
//! semidefinite kernel.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Tolerance for accepting a resolution as an exact reciprocal `1/K`.
const RECIPROCAL_TOL: f64 = 1e-12;

/// The `Δ`-resolution partition of `[0,1]`.
///
/// Grid points are `i/K` for `i = 0..=K`; they are strictly increasing with
/// endpoints exactly `0` and `1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundingGrid {
    delta: f64,
    subintervals: u32,
}

impl RoundingGrid {
    /// Builds the grid for resolution `delta`, which must be `1/K` for a
    /// positive integer `K` (up to `1e-12`).
    pub fn new(delta: f64) -> Result<Self> {
        if !delta.is_finite() || delta <= 0.0 || delta > 1.0 {
            return Err(Error::domain(format!(
                "grid resolution must lie in (0,1], got {delta}"
            )));
        }
        let k = (1.0 / delta).round();
        if k < 1.0 || k > u32::MAX as f64 {
            return Err(Error::domain(format!("grid subinterval count {k} out of range")));
        }
        if (delta * k - 1.0).abs() > RECIPROCAL_TOL {
            return Err(Error::domain(format!(
                "grid resolution {delta} is not the reciprocal of an integer"
            )));
        }
        Ok(RoundingGrid {
            delta: 1.0 / k,
            subintervals: k as u32,
        })
    }

    /// Builds the grid with exactly `k` subintervals (`Δ = 1/k`).
    pub fn from_subintervals(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("grid needs at least one subinterval"));
        }
        Ok(RoundingGrid {
            delta: 1.0 / k as f64,
            subintervals: k,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Number of subintervals `K`.
    pub fn subintervals(&self) -> u32 {
        self.subintervals
    }

    /// Number of grid points, `K + 1`.
    pub fn point_count(&self) -> usize {
        self.subintervals as usize + 1
    }

    /// The grid value `v_i = i/K`.
    pub fn point(&self, index: u32) -> f64 {
        debug_assert!(index <= self.subintervals);
        index as f64 / self.subintervals as f64
    }

    /// All grid values in increasing order.
    pub fn points(&self) -> Vec<f64> {
        (0..=self.subintervals).map(|i| self.point(i)).collect()
    }

    /// Two-point rounding weights of a scalar `p ∈ [0,1]` (dimension 1).
    ///
    /// The bracketing interval is `[v_{i-1}, v_i]` with `i = ⌊p/Δ⌋ + 1`
    /// clamped at the right edge; a `p` exactly on a grid point receives the
    /// full weight on that point. The expectation of the weights recovers
    /// `p`.
    pub fn weights(&self, p: f64) -> Result<WeightVector> {
        let coord = self.coordinate_weights(p)?;
        let mut entries = BTreeMap::new();
        match coord {
            CoordWeights::Exact(i) => {
                entries.insert(vec![i], 1.0);
            }
            CoordWeights::Pair { lo, weight_lo } => {
                entries.insert(vec![lo], weight_lo);
                entries.insert(vec![lo + 1], 1.0 - weight_lo);
            }
        }
        Ok(WeightVector { dimension: 1, entries })
    }

    /// Product-distribution weights of an information vector in `[0,1]^k`.
    ///
    /// The entry at a grid tuple is the product of the per-coordinate
    /// two-point weights, so each coordinate contributes at most two
    /// neighbors and the support has at most `2^k` tuples.
    pub fn product_weights(&self, point: &[f64]) -> Result<WeightVector> {
        if point.is_empty() {
            return Err(Error::domain("product weights need at least one coordinate"));
        }
        let mut entries: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        entries.insert(Vec::new(), 1.0);
        for &x in point {
            let coord = self.coordinate_weights(x)?;
            let mut next = BTreeMap::new();
            for (prefix, w) in &entries {
                match coord {
                    CoordWeights::Exact(i) => {
                        let mut key = prefix.clone();
                        key.push(i);
                        next.insert(key, *w);
                    }
                    CoordWeights::Pair { lo, weight_lo } => {
                        let mut key_lo = prefix.clone();
                        key_lo.push(lo);
                        next.insert(key_lo, w * weight_lo);
                        let mut key_hi = prefix.clone();
                        key_hi.push(lo + 1);
                        next.insert(key_hi, w * (1.0 - weight_lo));
                    }
                }
            }
            entries = next;
        }
        Ok(WeightVector {
            dimension: point.len(),
            entries,
        })
    }

    /// Discretized rounding kernel: the dot product of the product weights
    /// of `a` and `b`. Symmetric, positive semidefinite, and bounded by 1.
    pub fn rounding_kernel(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::domain(format!(
                "rounding kernel dimension mismatch: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let wa = self.product_weights(a)?;
        let wb = self.product_weights(b)?;
        Ok(wa.dot(&wb))
    }

    /// Draws a gridpoint tuple from `weights`, consuming exactly one uniform
    /// draw per coordinate, in coordinate index order.
    ///
    /// Weights built by [`RoundingGrid::weights`] and
    /// [`RoundingGrid::product_weights`] are product distributions, so
    /// sampling each coordinate from its marginal reproduces the joint law.
    pub fn sample(&self, weights: &WeightVector, rng: &mut RandomSource) -> Vec<f64> {
        let mut out = Vec::with_capacity(weights.dimension);
        for coord in 0..weights.dimension {
            let marginal = weights.marginal(coord);
            let u = rng.uniform();
            let mut cumulative = 0.0;
            let mut chosen = marginal[marginal.len() - 1].0;
            for &(index, w) in &marginal {
                cumulative += w;
                if u < cumulative {
                    chosen = index;
                    break;
                }
            }
            out.push(self.point(chosen));
        }
        out
    }

    /// Two-point weights of one coordinate.
    fn coordinate_weights(&self, x: f64) -> Result<CoordWeights> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::domain(format!("value {x} outside [0,1]")));
        }
        let k = self.subintervals;
        let mut lo = (x / self.delta).floor() as u32;
        if lo >= k {
            lo = k - 1;
        }
        // Float division can land one cell off right at a grid point.
        while lo > 0 && self.point(lo) > x {
            lo -= 1;
        }
        while lo + 1 < k && self.point(lo + 1) < x {
            lo += 1;
        }
        let v_lo = self.point(lo);
        if x == v_lo {
            return Ok(CoordWeights::Exact(lo));
        }
        if x == self.point(lo + 1) {
            return Ok(CoordWeights::Exact(lo + 1));
        }
        // weight_hi = (x - v_lo)/Δ, weight_lo its complement; computing the
        // pair this way keeps the sum exactly 1.
        let weight_hi = (x - v_lo) / self.delta;
        Ok(CoordWeights::Pair {
            lo,
            weight_lo: 1.0 - weight_hi,
        })
    }
}

#[derive(Clone, Copy)]
enum CoordWeights {
    Exact(u32),
    Pair { lo: u32, weight_lo: f64 },
}

/// A sparse probability vector over grid-point tuples.
///
/// Keys are integer tuple indices into the grid, never the real grid
/// values, so lookups are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    dimension: usize,
    entries: BTreeMap<Vec<u32>, f64>,
}

impl WeightVector {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    /// Iterates `(tuple index, weight)` pairs in key order.
    pub fn entries(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.entries.iter().map(|(k, &w)| (k.as_slice(), w))
    }

    pub fn weight(&self, index: &[u32]) -> f64 {
        self.entries.get(index).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Per-coordinate expectation `Σ_v w[v]·v` on `grid`.
    pub fn expectation(&self, grid: &RoundingGrid) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        for (key, w) in &self.entries {
            for (slot, &index) in out.iter_mut().zip(key.iter()) {
                *slot += w * grid.point(index);
            }
        }
        out
    }

    /// Sparse dot product with another weight vector of equal dimension.
    pub fn dot(&self, other: &WeightVector) -> f64 {
        let (small, large) = if self.entries.len() <= other.entries.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .entries
            .iter()
            .map(|(k, w)| w * large.weight(k))
            .sum()
    }

    /// Marginal distribution of one coordinate, as `(grid index, weight)`
    /// pairs in increasing index order.
    pub fn marginal(&self, coord: usize) -> Vec<(u32, f64)> {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (key, w) in &self.entries {
            *acc.entry(key[coord]).or_insert(0.0) += w;
        }
        acc.into_iter().collect()
    }
}

/// A seedable, replayable random source.
///
/// Wraps a portable ChaCha12 stream: the same seed always yields the same
/// draw sequence, and independent sub-streams are derived from
/// `(master seed, stream index)` for concurrent tasks.
#[derive(Debug, Clone)]
pub struct RandomSource {
    rng: ChaCha12Rng,
    seed: u64,
    stream: u64,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            rng: ChaCha12Rng::seed_from_u64(seed),
            seed,
            stream: 0,
        }
    }

    /// A fresh source on an independent stream of the same master seed.
    pub fn derive(&self, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        RandomSource {
            rng,
            seed: self.seed,
            stream,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// One uniform draw from `[0,1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    /// One standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(delta: f64) -> RoundingGrid {
        RoundingGrid::new(delta).unwrap()
    }

    #[test]
    fn grid_rejects_non_reciprocal_delta() {
        assert!(RoundingGrid::new(0.3).is_err());
        assert!(RoundingGrid::new(0.0).is_err());
        assert!(RoundingGrid::new(-0.1).is_err());
        assert!(RoundingGrid::new(1.5).is_err());
        assert!(RoundingGrid::new(f64::NAN).is_err());
    }

    #[test]
    fn grid_points_cover_unit_interval() {
        let g = grid(1.0 / 3.0);
        let pts = g.points();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[0], 0.0);
        assert_eq!(pts[3], 1.0);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn weights_interior_point() {
        let g = grid(0.25);
        let w = g.weights(0.3).unwrap();
        assert_eq!(w.support_len(), 2);
        assert!((w.weight(&[1]) - 0.8).abs() < 1e-15);
        assert!((w.weight(&[2]) - 0.2).abs() < 1e-15);
        assert!((w.expectation(&g)[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn weights_on_grid_point_and_boundaries() {
        let g = grid(0.25);
        let w = g.weights(0.5).unwrap();
        assert_eq!(w.support_len(), 1);
        assert_eq!(w.weight(&[2]), 1.0);

        let w0 = g.weights(0.0).unwrap();
        assert_eq!(w0.weight(&[0]), 1.0);
        let w1 = g.weights(1.0).unwrap();
        assert_eq!(w1.weight(&[4]), 1.0);

        assert!(g.weights(-0.01).is_err());
        assert!(g.weights(1.01).is_err());
    }

    #[test]
    fn product_weights_match_per_coordinate_product() {
        let g = grid(0.25);
        let w = g.product_weights(&[0.3, 0.3]).unwrap();
        assert!((w.weight(&[1, 1]) - 0.64).abs() < 1e-15);
        assert!((w.weight(&[1, 2]) - 0.16).abs() < 1e-15);
        assert!((w.weight(&[2, 2]) - 0.04).abs() < 1e-15);
        assert!((w.total() - 1.0).abs() < 1e-15);

        let single = g.product_weights(&[0.3]).unwrap();
        assert_eq!(single, g.weights(0.3).unwrap());

        let g2 = grid(0.5);
        let exact = g2.product_weights(&[0.5, 1.0]).unwrap();
        assert_eq!(exact.support_len(), 1);
        assert_eq!(exact.weight(&[1, 2]), 1.0);

        assert!(g.product_weights(&[]).is_err());
    }

    #[test]
    fn marginals_recover_coordinate_weights() {
        let g = grid(0.25);
        let w = g.product_weights(&[0.3, 0.7]).unwrap();
        let m0 = w.marginal(0);
        assert_eq!(m0.len(), 2);
        assert!((m0[0].1 - 0.8).abs() < 1e-15);
        let m1 = w.marginal(1);
        assert!((m1[0].1 - 0.2).abs() < 1e-15);
        assert!((m1[1].1 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn rounding_kernel_values() {
        let g = grid(0.25);
        assert_eq!(g.rounding_kernel(&[0.5], &[0.5]).unwrap(), 1.0);
        assert!((g.rounding_kernel(&[0.3], &[0.3]).unwrap() - 0.68).abs() < 1e-15);
        assert_eq!(g.rounding_kernel(&[0.0], &[1.0]).unwrap(), 0.0);
        assert!(g.rounding_kernel(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_degenerate_support_is_exact() {
        let g = grid(0.25);
        let w = g.weights(0.5).unwrap();
        let mut rng = RandomSource::new(7);
        assert_eq!(g.sample(&w, &mut rng), vec![0.5]);

        let w = g.product_weights(&[0.3, 0.7]).unwrap();
        let mut a = RandomSource::new(99);
        let mut b = RandomSource::new(99);
        for _ in 0..200 {
            assert_eq!(g.sample(&w, &mut a), g.sample(&w, &mut b));
        }
    }

    #[test]
    fn sample_frequencies_track_weights() {
        let g = grid(0.25);
        let w = g.weights(0.3).unwrap();
        let mut rng = RandomSource::new(12345);
        let draws = 100_000;
        let mut hits = 0usize;
        for _ in 0..draws {
            if g.sample(&w, &mut rng)[0] == 0.25 {
                hits += 1;
            }
        }
        let freq = hits as f64 / draws as f64;
        // 3σ band around 0.8 for 1e5 draws is roughly ±0.0038.
        assert!((freq - 0.8).abs() < 0.01, "frequency {freq}");
    }

    #[test]
    fn joint_sample_frequencies_track_products() {
        let g = grid(0.25);
        let w = g.product_weights(&[0.3, 0.7]).unwrap();
        let mut rng = RandomSource::new(2024);
        let draws = 100_000usize;
        let mut counts: BTreeMap<(u64, u64), usize> = BTreeMap::new();
        for _ in 0..draws {
            let s = g.sample(&w, &mut rng);
            let key = ((s[0] * 4.0) as u64, (s[1] * 4.0) as u64);
            *counts.entry(key).or_insert(0) += 1;
        }
        for (key, w_exact) in w.entries() {
            let observed = counts
                .get(&(key[0] as u64, key[1] as u64))
                .copied()
                .unwrap_or(0) as f64
                / draws as f64;
            let sigma = (w_exact * (1.0 - w_exact) / draws as f64).sqrt();
            assert!(
                (observed - w_exact).abs() <= 3.5 * sigma + 1e-9,
                "tuple {key:?}: observed {observed}, expected {w_exact}"
            );
        }
    }

    #[test]
    fn derived_streams_are_independent_and_replayable() {
        let master = RandomSource::new(5);
        let mut s0 = master.derive(0);
        let mut s1 = master.derive(1);
        let a: Vec<f64> = (0..8).map(|_| s0.uniform()).collect();
        let b: Vec<f64> = (0..8).map(|_| s1.uniform()).collect();
        assert_ne!(a, b);
        let mut again = master.derive(0);
        let c: Vec<f64> = (0..8).map(|_| again.uniform()).collect();
        assert_eq!(a, c);
    }
}
