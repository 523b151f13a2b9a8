//! Flat vector arithmetic, seeded randomness, and the nearest-rank
//! percentile primitive the rest of the crate builds on.
//!
//! Everything here is deterministic: the same inputs (and seeds) produce
//! the same bits on every run.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MathError {
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("empty percentile input")]
    EmptyPercentileInput,
    #[error("percentile fraction {qp} outside [0, 1)")]
    QpOutOfRange { qp: f64 },
}

/// Fixed-length vector of finite 64-bit floats.
///
/// External inputs are validated at construction; NaN and infinities are
/// rejected. Internal arithmetic uses [`FlatVec::from_raw`] and relies on
/// downstream finiteness checks (e.g. divergence detection in the
/// optimizer) to catch overflow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatVec {
    values: Vec<f64>,
}

impl FlatVec {
    /// Builds a vector from external input, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self, MathError> {
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(MathError::NonFinite { index, value });
            }
        }
        Ok(Self { values })
    }

    /// Wraps already-computed values without validation.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.values.iter()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Euclidean norm, accumulated in index order.
    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Returns `factor * self` elementwise.
    pub fn scaled(&self, factor: f64) -> FlatVec {
        FlatVec::from_raw(self.values.iter().map(|v| v * factor).collect())
    }
}

impl std::ops::Index<usize> for FlatVec {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.values[index]
    }
}

/// `floor(x)` with a snap to the nearest integer when `x` sits within
/// `1e-9` of it. Absorbs the rounding drift of products like `0.95 * 100`
/// whose mathematical value is an exact integer.
pub(crate) fn stable_floor(x: f64) -> usize {
    debug_assert!(x >= 0.0);
    let snapped = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.floor()
    };
    snapped as usize
}

/// Nearest-rank percentile threshold.
///
/// Sorts `values` ascending into `a[0..n-1]`, takes `k = floor(qp * n)`
/// and returns `a[k-1]`. For `k = 0` the sentinel `-inf` is returned,
/// which means "keep everything" under the strict-greater masking rule
/// used downstream.
pub fn percentile_threshold(values: &[f64], qp: f64) -> Result<f64, MathError> {
    if values.is_empty() {
        return Err(MathError::EmptyPercentileInput);
    }
    if !(0.0..1.0).contains(&qp) {
        return Err(MathError::QpOutOfRange { qp });
    }
    let k = stable_floor(qp * values.len() as f64);
    if k == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[k - 1])
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer, used to derive sub-stream seeds.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic pseudo-random generator.
///
/// Backed by the ChaCha8 counter-based stream cipher, whose raw 64-bit
/// output is reproducible across platforms for a given seed. Gaussian
/// samples come from Box-Muller on the uniform stream.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
    cached_gaussian: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            cached_gaussian: None,
        }
    }

    /// Derives an independent generator for `(seed, stream)`. The mapping
    /// is a pure function of both arguments.
    pub fn derive(seed: u64, stream: u64) -> Self {
        Self::new(splitmix64(seed ^ splitmix64(stream)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via Box-Muller; the paired sample is cached.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.cached_gaussian.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64(); // (0, 1], keeps ln finite
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.cached_gaussian = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Unbiased draw from `0..bound` by rejection sampling.
    pub fn next_index(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "next_index bound must be positive");
        let bound = bound as u64;
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % bound) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_index(i + 1);
            items.swap(i, j);
        }
    }

    /// Seeded permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut indices: Vec<usize> = (0..n).collect();
        self.shuffle(&mut indices);
        indices
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm2_pythagorean() {
        let v = FlatVec::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(v.norm2(), 5.0);
    }

    #[test]
    fn norm2_zero_vector() {
        let v = FlatVec::new(vec![0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v.norm2(), 0.0);
    }

    #[test]
    fn norm2_unit_entries() {
        let v = FlatVec::new(vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((v.norm2() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn flatvec_rejects_non_finite() {
        assert!(matches!(
            FlatVec::new(vec![1.0, f64::NAN]),
            Err(MathError::NonFinite { index: 1, .. })
        ));
        assert!(FlatVec::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn percentile_keeps_top_fifth() {
        let thr = percentile_threshold(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.8).unwrap();
        assert_eq!(thr, 4.0);
        let survivors: Vec<f64> = [1.0, 2.0, 3.0, 4.0, 5.0]
            .iter()
            .copied()
            .filter(|&v| v > thr)
            .collect();
        assert_eq!(survivors, vec![5.0]);
    }

    #[test]
    fn percentile_qp_zero_is_sentinel() {
        let thr = percentile_threshold(&[7.0, 7.0, 7.0], 0.0).unwrap();
        assert_eq!(thr, f64::NEG_INFINITY);
    }

    #[test]
    fn percentile_tie_case_drops_everything() {
        let values = [2.0, 2.0, 2.0, 2.0];
        let thr = percentile_threshold(&values, 0.5).unwrap();
        assert_eq!(thr, 2.0);
        assert_eq!(values.iter().filter(|&&v| v > thr).count(), 0);
    }

    #[test]
    fn percentile_empty_input_errors() {
        assert_eq!(
            percentile_threshold(&[], 0.5),
            Err(MathError::EmptyPercentileInput)
        );
    }

    #[test]
    fn percentile_rejects_bad_fraction() {
        assert!(percentile_threshold(&[1.0], 1.0).is_err());
        assert!(percentile_threshold(&[1.0], -0.1).is_err());
    }

    #[test]
    fn stable_floor_snaps_decimal_products() {
        // 0.95 * 100 rounds to 95.0 exactly, 0.85 * 10 lands on 8.5.
        assert_eq!(stable_floor(0.95 * 100.0), 95);
        assert_eq!(stable_floor(0.85 * 10.0), 8);
        assert_eq!(stable_floor(0.3 * 10.0), 3);
        assert_eq!(stable_floor(0.0), 0);
    }

    #[test]
    fn rng_same_seed_same_bits() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = SeededRng::new(42);
        let mut d = SeededRng::new(42);
        for _ in 0..100 {
            assert_eq!(c.next_gaussian().to_bits(), d.next_gaussian().to_bits());
        }
    }

    #[test]
    fn rng_derive_separates_streams() {
        let mut a = SeededRng::derive(7, 0);
        let mut b = SeededRng::derive(7, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn gaussian_moments_are_sane() {
        let mut rng = SeededRng::new(11);
        let n = 20_000;
        let samples: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn permutation_covers_range() {
        let mut rng = SeededRng::new(3);
        let mut perm = rng.permutation(17);
        perm.sort_unstable();
        assert_eq!(perm, (0..17).collect::<Vec<_>>());
    }
}
