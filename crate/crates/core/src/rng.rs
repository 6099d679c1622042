//! Deterministic random numbers for generators and sampled studies.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::linalg::{Matrix, Vector};

/// SplitMix64 stream with the small set of draws the crate needs.
#[derive(Debug, Clone)]
pub struct SeededRng(SplitMix64);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }

    /// Standard normal draw (Box–Muller).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    pub fn normal_vector(&mut self, n: usize) -> Vector {
        Vector::from_fn(n, |_, _| self.normal())
    }

    /// Uniformly distributed direction on the unit sphere of `ℝⁿ`.
    pub fn unit_vector(&mut self, n: usize) -> Vector {
        loop {
            let v = self.normal_vector(n);
            let norm = v.norm();
            if norm > 1e-3 {
                return v / norm;
            }
        }
    }

    pub fn matrix(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.range(lo, hi))
    }
}
