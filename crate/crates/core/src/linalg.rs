//! Dense rank-revealing primitives, subspace bases, projectors and
//! grid-sampled matrix functions.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Orthonormal basis of a subspace of `ℝ^ambient_dim`, stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    columns: Matrix,
}

impl SubspaceBasis {
    /// Wraps columns that are already orthonormal.
    pub fn from_orthonormal(columns: Matrix) -> Self {
        Self { columns }
    }

    /// Orthonormalizes an arbitrary spanning set.
    pub fn span_of(columns: &Matrix, tol: f64) -> Self {
        onb_range(columns, tol)
    }

    pub fn zero(ambient_dim: usize) -> Self {
        Self {
            columns: Matrix::zeros(ambient_dim, 0),
        }
    }

    pub fn full(ambient_dim: usize) -> Self {
        Self {
            columns: Matrix::identity(ambient_dim, ambient_dim),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &Matrix {
        &self.columns
    }

    pub fn into_columns(self) -> Matrix {
        self.columns
    }

    /// Orthogonal projector `C Cᵀ` onto the subspace.
    pub fn orthoprojector(&self) -> Matrix {
        &self.columns * self.columns.transpose()
    }

    /// `‖CᵀC − I‖_F`.
    pub fn orthonormality_residual(&self) -> f64 {
        let k = self.dim();
        (self.columns.transpose() * &self.columns - Matrix::identity(k, k)).norm()
    }

    /// `‖(I − CCᵀ)x‖`, the distance of `x` from the subspace.
    pub fn distance(&self, x: &Vector) -> f64 {
        (x - &self.columns * (self.columns.transpose() * x)).norm()
    }
}

/// A square matrix `P` with `P² = P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorMatrix {
    p: Matrix,
}

impl ProjectorMatrix {
    pub fn new_unchecked(p: Matrix) -> Self {
        Self { p }
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    pub fn into_matrix(self) -> Matrix {
        self.p
    }

    /// `‖P² − P‖_F / (1 + ‖P‖_F)`.
    pub fn idempotency_residual(&self) -> f64 {
        idempotency_residual(&self.p)
    }
}

pub fn idempotency_residual(p: &Matrix) -> f64 {
    (p * p - p).norm() / (1.0 + p.norm())
}

/// Rank-revealing factorization with full left and right orthogonal factors.
///
/// The rank decision is `σ > tol·max(σ_max, floor)·max(rows, cols)`. With
/// `floor = 0` this is the plain relative test; a positive floor measures
/// the matrix against an outside scale, so that a block that is numerically
/// zero relative to the data it was derived from is not promoted to full rank
/// by its own rounding-level singular values.
#[derive(Debug, Clone)]
pub struct RankRevealing {
    rows: usize,
    cols: usize,
    u: Matrix,
    v: Matrix,
    sigma: Vec<f64>,
    pinv: Matrix,
    rank: usize,
}

impl RankRevealing {
    pub fn new(m: &Matrix, tol: f64) -> Self {
        Self::with_floor(m, tol, 0.0)
    }

    pub fn with_floor(m: &Matrix, tol: f64, floor: f64) -> Self {
        let (rows, cols) = m.shape();
        if rows == 0 || cols == 0 {
            return Self {
                rows,
                cols,
                u: Matrix::identity(rows, rows),
                v: Matrix::identity(cols, cols),
                sigma: Vec::new(),
                pinv: Matrix::zeros(cols, rows),
                rank: 0,
            };
        }
        let (tu, sigma, tv) = jacobi_svd(m);
        let scale = sigma[0].max(floor);
        let thr = tol * scale * rows.max(cols) as f64;
        let rank = if scale > 0.0 {
            sigma.iter().filter(|&&s| s > thr).count()
        } else {
            0
        };
        let mut pinv = Matrix::zeros(cols, rows);
        for k in 0..rank {
            pinv += tv.column(k) * tu.column(k).transpose() / sigma[k];
        }
        let u = complete(tu.columns(0, rank).into_owned(), rows);
        let v = complete(tv.columns(0, rank).into_owned(), cols);
        Self {
            rows,
            cols,
            u,
            v,
            sigma,
            pinv,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    pub fn range(&self) -> SubspaceBasis {
        SubspaceBasis::from_orthonormal(self.u.columns(0, self.rank).into_owned())
    }

    pub fn corange(&self) -> SubspaceBasis {
        SubspaceBasis::from_orthonormal(self.u.columns(self.rank, self.rows - self.rank).into_owned())
    }

    pub fn coimage(&self) -> SubspaceBasis {
        SubspaceBasis::from_orthonormal(self.v.columns(0, self.rank).into_owned())
    }

    pub fn nullspace(&self) -> SubspaceBasis {
        SubspaceBasis::from_orthonormal(self.v.columns(self.rank, self.cols - self.rank).into_owned())
    }

    pub fn pinv(&self) -> &Matrix {
        &self.pinv
    }

    /// Ratio of the largest to the smallest retained singular value.
    pub fn condition(&self) -> f64 {
        if self.rank == 0 {
            return f64::INFINITY;
        }
        self.sigma[0] / self.sigma[self.rank - 1]
    }
}

/// Extends orthonormal columns `q` (n × k) to an orthonormal basis of ℝⁿ
/// with a Householder QR of `[q 0]`.
fn complete(q: Matrix, n: usize) -> Matrix {
    let k = q.ncols();
    if k == n {
        return q;
    }
    let mut padded = Matrix::zeros(n, n);
    padded.columns_mut(0, k).copy_from(&q);
    let mut full = padded.qr().q();
    full.columns_mut(0, k).copy_from(&q);
    full
}

/// One-sided (Hestenes) Jacobi SVD: `a = U diag(σ) Vᵀ` with `U` of size
/// `rows × p`, `V` of size `cols × p`, `p = min(rows, cols)`, both with
/// orthonormal columns and `σ` sorted in descending order.
///
/// Used instead of the bidiagonal QR iteration shipped with `nalgebra`,
/// whose 2×2 deflation step loses the singular vectors of rank-deficient
/// blocks; the rank decisions here depend on exact-zero singular values being
/// reported as such.
pub fn jacobi_svd(a: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let (m, n) = a.shape();
    if m < n {
        let (u, s, v) = jacobi_svd(&a.transpose());
        return (v, s, u);
    }
    if n == 0 {
        return (Matrix::zeros(m, 0), Vec::new(), Matrix::zeros(0, 0));
    }
    let mut w = a.clone();
    let mut v = Matrix::identity(n, n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(usize, f64)> = (0..n).map(|j| (j, w.column(j).norm())).collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1));
    let sigma: Vec<f64> = order.iter().map(|o| o.1).collect();
    let nonzero = sigma.iter().take_while(|&&s| s > 0.0).count();
    let mut u = Matrix::zeros(m, nonzero);
    let mut vs = Matrix::zeros(n, n);
    for (k, &(j, s)) in order.iter().enumerate() {
        if k < nonzero {
            u.set_column(k, &(w.column(j) / s));
        }
        vs.set_column(k, &v.column(j));
    }
    let u = complete(u, m).columns(0, n).into_owned();
    (u, sigma, vs)
}

fn rotate(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

pub fn rank_of(m: &Matrix, tol: f64) -> usize {
    RankRevealing::new(m, tol).rank()
}

pub fn onb_range(m: &Matrix, tol: f64) -> SubspaceBasis {
    RankRevealing::new(m, tol).range()
}

pub fn onb_nullspace(m: &Matrix, tol: f64) -> SubspaceBasis {
    RankRevealing::new(m, tol).nullspace()
}

pub fn onb_corange(m: &Matrix, tol: f64) -> SubspaceBasis {
    RankRevealing::new(m, tol).corange()
}

pub fn pinv(m: &Matrix, tol: f64) -> Matrix {
    RankRevealing::new(m, tol).pinv().clone()
}

/// Spectral norm.
pub fn norm2(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    jacobi_svd(m).1[0]
}

/// 2-norm condition number; infinite for singular or empty input.
pub fn condition_number(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let s = jacobi_svd(m).1;
    let max = s[0];
    let min = s[s.len() - 1];
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn hstack(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.nrows(), b.nrows(), "hstack row mismatch");
    let mut out = Matrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

pub fn vstack(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.ncols(), b.ncols(), "vstack column mismatch");
    let mut out = Matrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

/// Projector onto `im` along `along`: `M diag(I, 0) M⁻¹` with `M = [im along]`.
pub fn projector_onto(im: &SubspaceBasis, along: &SubspaceBasis, tol: f64) -> Result<ProjectorMatrix> {
    let n = im.ambient_dim();
    if along.ambient_dim() != n || im.dim() + along.dim() != n {
        return Err(Error::Dimension(format!(
            "projector needs complementary dimensions, got {} + {} in ℝ^{}",
            im.dim(),
            along.dim(),
            n
        )));
    }
    let p = projector_from_columns(im.columns(), along.columns(), tol)
        .map_err(|cond| Error::ComplementError { node: 0, cond })?;
    Ok(ProjectorMatrix::new_unchecked(p))
}

/// `M diag(I_k, 0) M⁻¹` for `M = [a b]`; returns the condition number of `M`
/// as the error when `M` is numerically singular.
pub fn projector_from_columns(a: &Matrix, b: &Matrix, tol: f64) -> core::result::Result<Matrix, f64> {
    let n = a.nrows();
    let m = hstack(a, b);
    let rr = RankRevealing::new(&m, tol);
    if rr.rank() < n {
        return Err(f64::INFINITY);
    }
    let minv = rr.pinv();
    Ok(a * minv.rows(0, a.ncols()))
}

/// Intersection of two subspaces as the nullspace of the stacked
/// complementary orthoprojectors `[I − P_U; I − P_V]`.
pub fn subspace_intersect(u: &SubspaceBasis, v: &SubspaceBasis, tol: f64) -> SubspaceBasis {
    let n = u.ambient_dim();
    assert_eq!(n, v.ambient_dim(), "ambient dimension mismatch");
    let id = Matrix::identity(n, n);
    let stacked = vstack(&(&id - u.orthoprojector()), &(&id - v.orthoprojector()));
    // The complementary projectors have unit singular values on the
    // non-shared part; an absolute floor of one keeps the decision stable
    // when one of the subspaces is trivial.
    RankRevealing::with_floor(&stacked, tol, 1.0).nullspace()
}

/// `‖P_U − P_V‖₂` with orthogonal projectors.
pub fn subspace_gap(u: &SubspaceBasis, v: &SubspaceBasis) -> f64 {
    norm2(&(u.orthoprojector() - v.orthoprojector()))
}

/// Rotates `candidate` within its span to best match `previous` (orthogonal
/// Procrustes): returns `candidate·Q` with `Q` orthogonal minimizing
/// `‖candidate·Q − previous‖_F`.
pub fn align_to(previous: &Matrix, candidate: &SubspaceBasis) -> Matrix {
    let c = candidate.columns();
    procrustes(previous, c).map_or_else(|| c.clone(), |q| c * q)
}

/// Orthogonal factor `Q` of the polar decomposition of `cᵀ·previous`.
pub fn procrustes(previous: &Matrix, c: &Matrix) -> Option<Matrix> {
    if c.ncols() == 0 || previous.shape() != c.shape() {
        return None;
    }
    let (u, _, v) = jacobi_svd(&(c.transpose() * previous));
    Some(u * v.transpose())
}

/// A matrix-valued function sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    t0: f64,
    t1: f64,
    values: Vec<Matrix>,
    continuity_aligned: bool,
}

pub const MIN_GRID_POINTS: usize = 5;

impl GridFunction {
    pub fn new(t0: f64, t1: f64, values: Vec<Matrix>, continuity_aligned: bool) -> Result<Self> {
        if values.len() < MIN_GRID_POINTS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_GRID_POINTS} nodes, got {}",
                values.len()
            )));
        }
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidGrid(format!("degenerate interval [{t0}, {t1}]")));
        }
        let shape = values[0].shape();
        if let Some(k) = values.iter().position(|v| v.shape() != shape) {
            return Err(Error::Dimension(format!(
                "grid value {k} has shape {:?}, expected {:?}",
                values[k].shape(),
                shape
            )));
        }
        Ok(Self {
            t0,
            t1,
            values,
            continuity_aligned,
        })
    }

    /// Samples `f` at the uniform nodes of `[t0, t1]`.
    pub fn sample<F>(t0: f64, t1: f64, n: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> Result<Matrix>,
    {
        let values = grid_times(t0, t1, n)
            .into_iter()
            .map(&mut f)
            .collect::<Result<Vec<_>>>()?;
        Self::new(t0, t1, values, true)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn n_points(&self) -> usize {
        self.values.len()
    }

    pub fn step(&self) -> f64 {
        (self.t1 - self.t0) / (self.values.len() - 1) as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        node_time(self.t0, self.t1, self.values.len(), k)
    }

    pub fn times(&self) -> Vec<f64> {
        grid_times(self.t0, self.t1, self.values.len())
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values[0].shape()
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn value(&self, k: usize) -> &Matrix {
        &self.values[k]
    }

    pub fn is_continuity_aligned(&self) -> bool {
        self.continuity_aligned
    }

    /// `max_k ‖M_{k+1} − M_k‖_F / h`, the observed Lipschitz bound.
    pub fn lipschitz_estimate(&self) -> f64 {
        let h = self.step();
        self.values
            .windows(2)
            .map(|w| (&w[1] - &w[0]).norm() / h)
            .fold(0.0, f64::max)
    }

    pub fn map<F>(&self, mut f: F) -> Self
    where
        F: FnMut(&Matrix) -> Matrix,
    {
        Self {
            t0: self.t0,
            t1: self.t1,
            values: self.values.iter().map(&mut f).collect(),
            continuity_aligned: self.continuity_aligned,
        }
    }

    /// Largest nodewise Frobenius distance to `other`.
    pub fn max_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

pub fn node_time(t0: f64, t1: f64, n: usize, k: usize) -> f64 {
    if k + 1 == n {
        t1
    } else {
        t0 + (t1 - t0) * k as f64 / (n - 1) as f64
    }
}

pub fn grid_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| node_time(t0, t1, n, k)).collect()
}

/// Fourth-order finite-difference derivative: central five-point stencil in
/// the interior, one-sided five-point stencils on the two nodes at each end.
pub fn grid_derivative(f: &GridFunction) -> Result<GridFunction> {
    if !f.continuity_aligned {
        return Err(Error::InvalidGrid(
            "differentiation needs continuity-aligned samples".into(),
        ));
    }
    let n = f.n_points();
    let h12 = 12.0 * f.step();
    let v = &f.values;
    let comb = |idx: [usize; 5], w: [f64; 5]| -> Matrix {
        let mut acc = &v[idx[0]] * w[0];
        for k in 1..5 {
            acc += &v[idx[k]] * w[k];
        }
        acc / h12
    };
    const FWD0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
    const FWD1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
    const MID: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
    let neg = |w: [f64; 5]| w.map(|x| -x);
    let out = (0..n)
        .map(|i| match i {
            0 => comb([0, 1, 2, 3, 4], FWD0),
            1 => comb([0, 1, 2, 3, 4], FWD1),
            _ if i == n - 1 => comb([n - 1, n - 2, n - 3, n - 4, n - 5], neg(FWD0)),
            _ if i == n - 2 => comb([n - 1, n - 2, n - 3, n - 4, n - 5], neg(FWD1)),
            _ => comb([i - 2, i - 1, i, i + 1, i + 2], MID),
        })
        .collect();
    GridFunction::new(f.t0, f.t1, out, true)
}

/// Aligns a sequence of bases so consecutive samples vary continuously.
pub fn align_sequence(bases: Vec<SubspaceBasis>) -> Vec<Matrix> {
    let mut out: Vec<Matrix> = Vec::with_capacity(bases.len());
    for b in bases {
        let next = match out.last() {
            Some(prev) => align_to(prev, &b),
            None => b.into_columns(),
        };
        out.push(next);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOL: f64 = 1e-9;

    fn e(n: usize, k: usize) -> SubspaceBasis {
        let mut c = Matrix::zeros(n, 1);
        c[(k, 0)] = 1.0;
        SubspaceBasis::from_orthonormal(c)
    }

    #[test]
    fn rank_trivial_cases() {
        assert_eq!(rank_of(&Matrix::identity(3, 3), TOL), 3);
        assert_eq!(rank_of(&Matrix::zeros(2, 5), TOL), 0);
        assert_eq!(rank_of(&Matrix::zeros(0, 3), TOL), 0);
    }

    #[test]
    fn floor_demotes_tiny_blocks() {
        let tiny = Matrix::from_row_slice(1, 2, &[1e-15, -3e-16]);
        assert_eq!(rank_of(&tiny, TOL), 1);
        assert_eq!(RankRevealing::with_floor(&tiny, TOL, 1.0).rank(), 0);
    }

    #[test]
    fn rank_deficient_two_by_two() {
        let v = Matrix::from_row_slice(2, 1, &[0.7f64.cos(), 0.7f64.sin()]);
        let p = &v * v.transpose();
        let rr = RankRevealing::new(&(&Matrix::identity(2, 2) - &p), TOL);
        assert_eq!(rr.rank(), 1);
        assert!((rr.singular_values()[0] - 1.0).abs() < 1e-15);
        assert!(rr.singular_values()[1] < 1e-15);
        assert!(subspace_gap(&rr.nullspace(), &SubspaceBasis::from_orthonormal(v)) < 1e-15);
    }

    #[test]
    fn nullspace_of_diag() {
        let m = Matrix::from_diagonal(&Vector::from_vec(alloc::vec![1.0, 1.0, 0.0]));
        let n = onb_nullspace(&m, TOL);
        assert_eq!(n.dim(), 1);
        assert!(subspace_gap(&n, &e(3, 2)) < 1e-14);
    }

    #[test]
    fn corange_of_block_matrix() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let z = onb_corange(&m, TOL);
        assert_eq!(z.dim(), 1);
        assert!(subspace_gap(&z, &e(2, 1)) < 1e-14);
    }

    #[test]
    fn wide_and_tall_complements() {
        let wide = Matrix::from_row_slice(1, 3, &[1.0, 2.0, 2.0]);
        let rr = RankRevealing::new(&wide, TOL);
        assert_eq!(rr.nullspace().dim(), 2);
        assert_eq!(rr.corange().dim(), 0);
        assert!((&wide * rr.nullspace().columns()).norm() < 1e-14);
        let tall = wide.transpose();
        let rr = RankRevealing::new(&tall, TOL);
        assert_eq!(rr.corange().dim(), 2);
        assert_eq!(rr.nullspace().dim(), 0);
        assert!((tall.transpose() * rr.corange().columns()).norm() < 1e-14);
    }

    #[test]
    fn pinv_closed_forms() {
        assert_eq!(pinv(&Matrix::identity(3, 3), TOL), Matrix::identity(3, 3));
        assert_eq!(pinv(&Matrix::zeros(2, 3), TOL), Matrix::zeros(3, 2));
        let d = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let expected = Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        assert!((pinv(&d, TOL) - expected).norm() < 1e-15);
    }

    #[test]
    fn projector_basic_and_semi_explicit() {
        let p = projector_onto(&e(2, 0), &e(2, 1), TOL).unwrap();
        assert!((p.matrix() - Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-15);

        // onto S = im [I; −F22⁻¹F21] along N = im [0; I] gives [[I,0],[−F22⁻¹F21,0]]
        let (f21, f22) = (0.7, -2.0);
        let c = Matrix::from_row_slice(2, 1, &[1.0, -f21 / f22]);
        let s = SubspaceBasis::span_of(&c, TOL);
        let p = projector_onto(&s, &e(2, 1), TOL).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[1.0, 0.0, -f21 / f22, 0.0]);
        assert!((p.matrix() - expected).norm() < 1e-14);
        assert!(p.idempotency_residual() < 1e-15);
    }

    #[test]
    fn projector_rejects_non_complements() {
        let r = projector_onto(&e(2, 0), &e(2, 0), TOL);
        assert!(matches!(r, Err(Error::ComplementError { .. })));
    }

    #[test]
    fn intersection_and_gap_trivial() {
        let u = e(3, 0);
        assert_eq!(subspace_intersect(&u, &u, TOL).dim(), 1);
        assert_eq!(subspace_intersect(&u, &e(3, 1), TOL).dim(), 0);
        assert!(subspace_gap(&u, &u) < 1e-15);
        assert!((subspace_gap(&u, &e(3, 1)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let c = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let (s, co) = (0.3f64.sin(), 0.3f64.cos());
        let q0 = Matrix::from_row_slice(2, 2, &[co, -s, s, co]);
        let rotated = SubspaceBasis::from_orthonormal(&c * q0);
        assert!((align_to(&c, &rotated) - &c).norm() < 1e-14);
        let flipped = SubspaceBasis::from_orthonormal(-&c);
        assert!((align_to(&c, &flipped) - &c).norm() < 1e-14);
    }

    #[test]
    fn derivative_exact_for_low_degree() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let f = GridFunction::sample(0.0, 1.0, 17, |t| Ok(&m * t)).unwrap();
        let df = grid_derivative(&f).unwrap();
        assert!(df.values().iter().all(|d| (d - &m).norm() < 1e-12));
        let c = GridFunction::sample(0.0, 1.0, 9, |_| Ok(m.clone())).unwrap();
        assert!(grid_derivative(&c).unwrap().values().iter().all(|d| d.norm() < 1e-12));
        let quartic = GridFunction::sample(-1.0, 2.0, 11, |t| Ok(Matrix::from_element(1, 1, t.powi(4)))).unwrap();
        let dq = grid_derivative(&quartic).unwrap();
        for (k, d) in dq.values().iter().enumerate() {
            let t = dq.time(k);
            assert!((d[(0, 0)] - 4.0 * t.powi(3)).abs() < 1e-10);
        }
    }

    #[test]
    fn grid_rejects_short_and_unaligned() {
        assert!(GridFunction::new(0.0, 1.0, alloc::vec![Matrix::zeros(1, 1); 4], true).is_err());
        let f = GridFunction::new(0.0, 1.0, alloc::vec![Matrix::zeros(1, 1); 5], false).unwrap();
        assert!(grid_derivative(&f).is_err());
    }

    #[test]
    fn aligned_sequence_is_lipschitz() {
        // Rank-one projector family whose SVD bases may flip sign node to node.
        let build = |n: usize| {
            let bases = grid_times(0.0, 3.0, n)
                .into_iter()
                .map(|t| {
                    let v = Matrix::from_row_slice(2, 1, &[t.cos(), t.sin()]);
                    onb_range(&(&v * v.transpose()), TOL)
                })
                .collect();
            let vals = align_sequence(bases);
            GridFunction::new(0.0, 3.0, vals, true).unwrap()
        };
        let coarse = build(33);
        let fine = build(65);
        let step = |g: &GridFunction| g.lipschitz_estimate() * g.step();
        let ratio = step(&coarse) / step(&fine);
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }

    fn arb_matrix(max: usize) -> impl Strategy<Value = Matrix> {
        (1..=max, 1..=max, 0..=max).prop_flat_map(|(r, c, rank)| {
            let rank = rank.min(r).min(c);
            (
                proptest::collection::vec(-1.0f64..1.0, r * rank),
                proptest::collection::vec(-1.0f64..1.0, rank * c),
            )
                .prop_map(move |(a, b)| Matrix::from_vec(r, rank, a) * Matrix::from_vec(rank, c, b))
        })
    }

    fn arb_subspace(n: usize) -> impl Strategy<Value = SubspaceBasis> {
        (0..=n).prop_flat_map(move |k| {
            proptest::collection::vec(-1.0f64..1.0, n * k)
                .prop_map(move |v| SubspaceBasis::span_of(&Matrix::from_vec(n, k, v), 1e-9))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn penrose_identities(m in arb_matrix(10)) {
            let x = pinv(&m, TOL);
            let s = 1.0 + m.norm() * x.norm();
            prop_assert!((&m * &x * &m - &m).norm() <= 1e-9 * s * (1.0 + m.norm()));
            prop_assert!((&x * &m * &x - &x).norm() <= 1e-9 * s * (1.0 + x.norm()));
            prop_assert!(((&m * &x).transpose() - &m * &x).norm() <= 1e-9 * s);
            prop_assert!(((&x * &m).transpose() - &x * &m).norm() <= 1e-9 * s);
        }

        #[test]
        fn bases_are_orthonormal_and_consistent(m in arb_matrix(8)) {
            let rr = RankRevealing::new(&m, TOL);
            for b in [rr.range(), rr.nullspace(), rr.corange()] {
                prop_assert!(b.orthonormality_residual() <= 1e-10);
            }
            prop_assert_eq!(rr.range().dim(), rr.rank());
            prop_assert_eq!(rr.nullspace().dim() + rr.rank(), m.ncols());
            prop_assert_eq!(rr.corange().dim() + rr.rank(), m.nrows());
        }

        #[test]
        fn intersection_dimension_formula(
            (u, v) in (1usize..7).prop_flat_map(|n| (arb_subspace(n), arb_subspace(n)))
        ) {
            let w = subspace_intersect(&u, &v, TOL);
            let joint = rank_of(&hstack(u.columns(), v.columns()), TOL);
            prop_assert_eq!(w.dim(), u.dim() + v.dim() - joint);
            prop_assert!(w.orthonormality_residual() <= 1e-10);
        }

        #[test]
        fn oblique_projectors_are_idempotent(
            (n, k, seed) in (2usize..8).prop_flat_map(|n| (Just(n), 0..=n, proptest::collection::vec(-1.0f64..1.0, n * n)))
        ) {
            let mut m = Matrix::from_vec(n, n, seed);
            m += Matrix::identity(n, n) * (n as f64);
            let a = SubspaceBasis::span_of(&m.columns(0, k).into_owned(), TOL);
            let b = SubspaceBasis::span_of(&m.columns(k, n - k).into_owned(), TOL);
            let p = projector_onto(&a, &b, TOL).unwrap();
            prop_assert!(p.idempotency_residual() <= 1e-9);
            prop_assert_eq!(rank_of(p.matrix(), TOL), k);
            prop_assert!((p.matrix() * a.columns() - a.columns()).norm() < 1e-9);
            prop_assert!((p.matrix() * b.columns()).norm() < 1e-9);
        }
    }
}
