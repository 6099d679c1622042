//! Analysis of linear time-varying differential-algebraic equations
//! `E(t)x' + F(t)x = q`.
//!
//! The crate computes regularity, index and characteristic values through the
//! basis reduction procedure, the canonical subspaces `S_can` and `N_can`, the
//! canonical projector and matrices for accurately stated initial conditions.
//! Results are cross-checked by the admissible projector sequence of the
//! tractability framework and, for constant coefficients, by Wong sequences.
//!
//! Derivatives of basis functions are never approximated by difference
//! quotients inside the pipeline. Every grid node carries truncated Taylor
//! expansions ([`jet::MatrixJet`]) of all level quantities, seeded from the
//! exact Taylor coefficients of the coefficient expressions.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod canonical;
pub mod characteristics;
pub mod error;
pub mod expr;
pub mod fixtures;
pub mod ivp;
pub mod jet;
pub mod linalg;
pub mod pencil;
pub mod problem;
pub mod reduction;
pub mod rng;
pub mod tractability;

pub use error::{Error, Result};
pub use linalg::{GridFunction, Matrix, ProjectorMatrix, SubspaceBasis, Vector};

/// Default relative rank tolerance.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Default number of grid nodes.
pub const DEFAULT_GRID_N: usize = 129;

/// Numerical settings shared by the analysis routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    /// Relative tolerance for every rank decision.
    pub rank_tol: f64,
    /// Number of uniform grid nodes on the interval.
    pub grid_n: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            rank_tol: DEFAULT_RANK_TOL,
            grid_n: DEFAULT_GRID_N,
        }
    }
}

impl Options {
    pub fn with_grid(mut self, n: usize) -> Self {
        self.grid_n = n;
        self
    }

    pub fn with_rank_tol(mut self, tol: f64) -> Self {
        self.rank_tol = tol;
        self
    }
}
