//! Deterministic, versioned random number generation.
//!
//! Instance synthesis must reproduce bit-for-bit across platforms and
//! releases, so this module pins every moving part:
//!
//! - the stream cipher: ChaCha with 8 rounds, keyed from a 64-bit seed
//!   through `rand_core`'s documented `seed_from_u64` expansion;
//! - the uniform transform: the top 53 bits of each 64-bit word, mapped
//!   to `[0, 1)` (or `(0, 1]` where a nonzero draw is required);
//! - the normal transform: the Box-Muller cosine branch, two 64-bit
//!   words per variate;
//! - the integer transform: rejection sampling on 64-bit words.
//!
//! All draws happen in `f64` and are then converted to the requested
//! scalar type, so `f32` instances are rounded copies of the `f64` ones
//! rather than products of a different stream.

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

use crate::{real, Scalar};

/// Identifies the generation scheme; bump on any change to the stream
/// cipher, transforms, or fill order.
pub const GENERATOR_VERSION: &str = "chacha8-boxmuller-v1";

/// Seeded stream of uniform and normal variates.
pub(crate) struct InstanceRng {
    inner: ChaCha8Rng,
}

impl InstanceRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform draw from `[0, 1)` with 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64) * 2.0_f64.powi(-53)
    }

    /// Uniform draw from `(0, 1]`, safe as a logarithm argument.
    fn uniform_pos(&mut self) -> f64 {
        (((self.inner.next_u64() >> 11) + 1) as f64) * 2.0_f64.powi(-53)
    }

    /// Standard normal variate: with u1 in (0, 1] and u2 in [0, 1),
    /// returns sqrt(-2 ln u1) * cos(2 pi u2).
    pub fn normal<S: Scalar>(&mut self) -> S {
        let u1 = self.uniform_pos();
        let u2 = self.uniform();
        real((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos())
    }

    /// Fills a length-n vector with normal variates in index order.
    pub fn normal_vector<S: Scalar>(&mut self, n: usize) -> crate::Vector<S> {
        crate::Vector::from_shape_fn(n, |_| self.normal())
    }

    /// Fills a rows x cols matrix with normal variates in row-major order.
    pub fn normal_matrix<S: Scalar>(&mut self, rows: usize, cols: usize) -> crate::Matrix<S> {
        let data: Vec<S> = (0..rows * cols).map(|_| self.normal()).collect();
        crate::Matrix::from_shape_vec((rows, cols), data)
            .expect("row-major buffer matches requested shape")
    }

    /// Uniform integer in `0..bound` by rejection, so every value is
    /// exactly equally likely.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound >= 1, "bound must be at least 1");
        let bound = bound as u64;
        let limit = (u64::MAX / bound) * bound;
        loop {
            let word = self.inner.next_u64();
            if word < limit {
                return (word % bound) as usize;
            }
        }
    }

    /// Chooses `count` distinct indices from `0..n` by a partial
    /// Fisher-Yates shuffle; the result is in shuffle order.
    pub fn distinct_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(
            count <= n,
            "cannot draw {count} distinct indices from 0..{n}"
        );
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}
