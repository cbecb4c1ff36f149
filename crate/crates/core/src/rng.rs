//! Seeded, platform-independent randomness.
//!
//! Child streams are seeded by a draw from the parent (`split`), so a set of
//! children created up front can be consumed on any thread without changing
//! the output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream seeded by the next `u64` drawn from this stream.
    pub fn split(&mut self) -> SeededRng {
        let child = self.inner.random::<u64>();
        SeededRng::new(child)
    }

    /// `n` child streams, in draw order.
    pub fn split_n(&mut self, n: usize) -> Vec<SeededRng> {
        (0..n).map(|_| self.split()).collect()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform draw from `[lo, hi)`; returns `lo` when the range is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.random::<f64>() < p
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.inner.random_range(0..=i);
            idx.swap(i, j);
        }
        idx
    }

    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.normal()).collect()
    }
}

/// I.i.d. standard normal tensor of the given shape.
pub fn standard_normal(rng: &mut SeededRng, shape: &[usize]) -> Result<Tensor> {
    if shape.is_empty() {
        return Err(Error::InvalidParameter("shape must be nonempty".into()));
    }
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), rng.normal_vec(len))
}
