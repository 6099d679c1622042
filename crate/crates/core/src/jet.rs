//! Truncated Taylor expansions of matrix functions at a single point.
//!
//! `M(t₀ + s) = Σ_k M_k s^k + O(s^{K+1})`. Products, inverses and smooth
//! bases of kernels and ranges propagate exactly through the coefficients,
//! which is how the analysis obtains derivatives of algorithm-generated
//! bases without difference quotients.

use alloc::vec::Vec;

use crate::linalg::{procrustes, Matrix, RankRevealing, SubspaceBasis};

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixJet {
    coeffs: Vec<Matrix>,
}

impl MatrixJet {
    pub fn from_coeffs(coeffs: Vec<Matrix>) -> Self {
        assert!(!coeffs.is_empty(), "jet needs at least the value coefficient");
        let shape = coeffs[0].shape();
        assert!(
            coeffs.iter().all(|c| c.shape() == shape),
            "jet coefficient shape mismatch"
        );
        Self { coeffs }
    }

    pub fn constant(m: Matrix, order: usize) -> Self {
        let (r, c) = m.shape();
        let mut coeffs = Vec::with_capacity(order + 1);
        coeffs.push(m);
        coeffs.extend((0..order).map(|_| Matrix::zeros(r, c)));
        Self { coeffs }
    }

    pub fn identity(n: usize, order: usize) -> Self {
        Self::constant(Matrix::identity(n, n), order)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn shape(&self) -> (usize, usize) {
        self.coeffs[0].shape()
    }

    pub fn nrows(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn ncols(&self) -> usize {
        self.coeffs[0].ncols()
    }

    pub fn coeffs(&self) -> &[Matrix] {
        &self.coeffs
    }

    /// `M(t₀)`.
    pub fn value(&self) -> &Matrix {
        &self.coeffs[0]
    }

    /// `M^{(k)}(t₀) = k!·M_k`.
    pub fn derivative_value(&self, k: usize) -> Matrix {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        &self.coeffs[k] * fact
    }

    pub fn truncate(&self, order: usize) -> Self {
        Self {
            coeffs: self.coeffs[..=order.min(self.order())].to_vec(),
        }
    }

    /// Jet of `M'`, one order shorter.
    pub fn derivative(&self) -> Self {
        let k = self.order();
        if k == 0 {
            let (r, c) = self.shape();
            return Self::constant(Matrix::zeros(r, c), 0);
        }
        Self {
            coeffs: (0..k).map(|i| &self.coeffs[i + 1] * (i + 1) as f64).collect(),
        }
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let k = self.order().min(rhs.order());
        let coeffs = (0..=k)
            .map(|n| {
                let mut acc = &self.coeffs[0] * &rhs.coeffs[n];
                for j in 1..=n {
                    acc += &self.coeffs[j] * &rhs.coeffs[n - j];
                }
                acc
            })
            .collect();
        Self { coeffs }
    }

    /// Left multiplication by a constant matrix.
    pub fn lmul(&self, a: &Matrix) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }

    /// Right multiplication by a constant matrix.
    pub fn rmul(&self, a: &Matrix) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        self.zip(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.zip(rhs, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c.transpose()).collect(),
        }
    }

    /// Horizontal concatenation `[self rhs]`.
    pub fn hstack(&self, rhs: &Self) -> Self {
        self.zip(rhs, crate::linalg::hstack)
    }

    pub fn columns(&self, start: usize, n: usize) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c.columns(start, n).into_owned()).collect(),
        }
    }

    pub fn rows(&self, start: usize, n: usize) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c.rows(start, n).into_owned()).collect(),
        }
    }

    fn zip(&self, rhs: &Self, f: impl Fn(&Matrix, &Matrix) -> Matrix) -> Self {
        let k = self.order().min(rhs.order());
        Self {
            coeffs: (0..=k).map(|i| f(&self.coeffs[i], &rhs.coeffs[i])).collect(),
        }
    }

    /// Jet of `M⁻¹`, or `None` if `M(t₀)` is numerically singular.
    pub fn inverse(&self, tol: f64) -> Option<Self> {
        let (r, c) = self.shape();
        if r != c {
            return None;
        }
        let rr = RankRevealing::new(&self.coeffs[0], tol);
        if rr.rank() < r {
            return None;
        }
        Some(series_from(self, rr.pinv(), rr.pinv().clone()))
    }
}

/// Smooth kernel basis `C(s)` with `M(s)C(s) = O(s^{K+1})`.
///
/// `C₀` is an orthonormal basis of `ker M₀`, rotated to best match
/// `reference` when given; higher coefficients are the minimum-norm solutions
/// `C_k = −M₀⁺ Σ_{j≥1} M_j C_{k−j}`. Requires `M` of locally constant rank,
/// which is the standing hypothesis wherever this is used.
pub fn nullspace_jet(m: &MatrixJet, rr: &RankRevealing, reference: Option<&Matrix>) -> MatrixJet {
    let c0 = aligned(rr.nullspace(), reference);
    series_from(m, rr.pinv(), c0)
}

/// Smooth basis `Z(s)` of `(im M(s))^⊥`, as the kernel jet of `Mᵀ`.
pub fn corange_jet(m: &MatrixJet, rr: &RankRevealing, reference: Option<&Matrix>) -> MatrixJet {
    let z0 = aligned(rr.corange(), reference);
    let mt = m.transpose();
    series_from(&mt, &rr.pinv().transpose(), z0)
}

/// Smooth basis `Y(s) = M(s)·M₀⁺Y₀` of `im M(s)`, with `Y₀` orthonormal.
pub fn range_jet(m: &MatrixJet, rr: &RankRevealing, reference: Option<&Matrix>) -> MatrixJet {
    let y0 = aligned(rr.range(), reference);
    let x0 = rr.pinv() * &y0;
    m.rmul(&x0)
}

fn aligned(basis: SubspaceBasis, reference: Option<&Matrix>) -> Matrix {
    let c = basis.into_columns();
    match reference.and_then(|r| procrustes(r, &c)) {
        Some(q) => c * q,
        None => c,
    }
}

fn series_from(m: &MatrixJet, m0_pinv: &Matrix, c0: Matrix) -> MatrixJet {
    let k = m.order();
    let mut cs: Vec<Matrix> = Vec::with_capacity(k + 1);
    cs.push(c0);
    for n in 1..=k {
        let mut acc = Matrix::zeros(m.nrows(), cs[0].ncols());
        for j in 1..=n {
            acc += &m.coeffs[j] * &cs[n - j];
        }
        cs.push(-(m0_pinv * acc));
    }
    MatrixJet { coeffs: cs }
}
