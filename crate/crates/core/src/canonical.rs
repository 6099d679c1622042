//! Canonical subspaces, the canonical projector and accurate initial
//! conditions.
//!
//! `N_can` is obtained from the adjoint pair: with `C_*` a basis of the flow
//! subspace of `−Eᵀy' + (Fᵀ − E'ᵀ)y = 0`, `N_can = ker C_*ᵀE`.

use alloc::format;
use alloc::vec::Vec;

use crate::linalg::{
    align_sequence, condition_number, hstack, onb_nullspace, GridFunction, Matrix, RankRevealing, SubspaceBasis, Vector,
};
use crate::reduction::{reduce_full, reduce_node, s_can_basis, CoefficientPair, ReductionChain};
use crate::{Error, Options, Result};

/// Largest accepted condition number of `[C_Scan C_Ncan]`.
pub const MAX_COMPLEMENT_CONDITION: f64 = 1e12;

/// `{−Eᵀ, Fᵀ − E'ᵀ}`.
pub fn adjoint_pair(pair: &CoefficientPair) -> CoefficientPair {
    CoefficientPair {
        e: pair.e.transpose().neg(),
        f: pair.f.transpose().sub(&pair.e.differentiate().transpose()),
        interval: pair.interval,
        params: pair.params.clone(),
    }
}

/// Result of the adjoint route to `N_can`.
#[derive(Debug, Clone)]
pub struct AdjointAnalysis {
    pub chain: ReductionChain,
    /// `C_*`, an `m × d` basis of the adjoint flow subspace.
    pub c_star: Option<GridFunction>,
    /// Orthonormal basis of `ker C_*ᵀE`, `m × (m − d)`.
    pub n_can: GridFunction,
}

pub fn n_can_via_adjoint(pair: &CoefficientPair, opts: &Options) -> Result<AdjointAnalysis> {
    let adj = adjoint_pair(pair);
    let chain = reduce_full(&adj, opts)?;
    if let Err(e) = chain.require_regular() {
        return Err(Error::AdjointNotRegular(format!("{e}")));
    }
    let m = pair.m();
    let (t0, t1) = pair.interval;
    let times = chain.times();
    let c_star = match s_can_basis(&chain) {
        Ok(c) => Some(c),
        Err(Error::ZeroFlow) => None,
        Err(e) => return Err(e),
    };
    let bases = match &c_star {
        Some(c) => times
            .iter()
            .zip(c.values())
            .map(|(&t, cs)| {
                let e = pair.e.eval(t, &pair.params)?;
                Ok(onb_nullspace(&(cs.transpose() * e), opts.rank_tol))
            })
            .collect::<Result<Vec<_>>>()?,
        None => times.iter().map(|_| SubspaceBasis::full(m)).collect(),
    };
    let n_can = GridFunction::new(t0, t1, align_sequence(bases), true)?;
    Ok(AdjointAnalysis { chain, c_star, n_can })
}

/// `Π_can = M diag(I_d, 0) M⁻¹` with `M = [C_Scan C_Ncan]`, and the
/// per-node condition numbers of `M`.
pub fn canonical_projector(c_scan: &GridFunction, c_ncan: &GridFunction) -> Result<(GridFunction, Vec<f64>)> {
    let (m, d) = c_scan.shape();
    if c_ncan.shape() != (m, m - d) || c_ncan.n_points() != c_scan.n_points() {
        return Err(Error::Dimension(format!(
            "C_Scan is {m}×{d} but C_Ncan is {:?}",
            c_ncan.shape()
        )));
    }
    let mut values = Vec::with_capacity(c_scan.n_points());
    let mut conds = Vec::with_capacity(c_scan.n_points());
    for (node, (cs, cn)) in c_scan.values().iter().zip(c_ncan.values()).enumerate() {
        let (pi, cond) = projector_at(cs, cn).map_err(|cond| Error::ComplementError { node, cond })?;
        values.push(pi);
        conds.push(cond);
    }
    Ok((GridFunction::new(c_scan.t0(), c_scan.t1(), values, true)?, conds))
}

fn projector_at(cs: &Matrix, cn: &Matrix) -> core::result::Result<(Matrix, f64), f64> {
    let (m, d) = cs.shape();
    let big = hstack(cs, cn);
    let cond = condition_number(&big);
    if !(cond <= MAX_COMPLEMENT_CONDITION) {
        return Err(cond);
    }
    let inv = big.clone().try_inverse().ok_or(cond)?;
    let mut diag = Matrix::zeros(m, m);
    for i in 0..d {
        diag[(i, i)] = 1.0;
    }
    Ok((&big * diag * inv, cond))
}

/// Everything needed to state accurate initial conditions on the grid.
#[derive(Debug, Clone)]
pub struct CanonicalFrame {
    pub d: usize,
    pub c_scan: GridFunction,
    pub c_ncan: GridFunction,
    pub pi_can: GridFunction,
    /// `G = C_*ᵀE`, `d × m`, with `ker G = N_can`.
    pub g: GridFunction,
    pub condition_log: Vec<f64>,
    pub adjoint: ReductionChain,
}

impl CanonicalFrame {
    pub fn times(&self) -> Vec<f64> {
        self.c_scan.times()
    }

    /// Grid node index of `a`.
    pub fn node_of(&self, a: f64) -> Result<usize> {
        let h = self.c_scan.step();
        let k = libm::round((a - self.c_scan.t0()) / h);
        if k >= 0.0 && (k as usize) < self.c_scan.n_points() && libm::fabs(self.c_scan.time(k as usize) - a) <= 1e-9 * h
        {
            Ok(k as usize)
        } else {
            Err(Error::InvalidGrid(format!("t = {a} is not a grid node")))
        }
    }
}

pub fn canonical_frame(pair: &CoefficientPair, chain: &ReductionChain, opts: &Options) -> Result<CanonicalFrame> {
    chain.require_regular()?;
    let m = pair.m();
    let d = chain.d().expect("regular chain");
    let (t0, t1) = pair.interval;
    let n = opts.grid_n;
    let c_scan = match s_can_basis(chain) {
        Ok(c) => c,
        Err(Error::ZeroFlow) => GridFunction::new(t0, t1, (0..n).map(|_| Matrix::zeros(m, 0)).collect(), true)?,
        Err(e) => return Err(e),
    };
    let adjoint = n_can_via_adjoint(pair, opts)?;
    if adjoint.n_can.shape() != (m, m - d) {
        return Err(Error::AdjointNotRegular(format!(
            "ker C_*ᵀE has dimension {}, expected {}",
            adjoint.n_can.shape().1,
            m - d
        )));
    }
    let (pi_can, condition_log) = canonical_projector(&c_scan, &adjoint.n_can)?;
    let times = chain.times();
    let g_values = match &adjoint.c_star {
        Some(c) => times
            .iter()
            .zip(c.values())
            .map(|(&t, cs)| Ok(cs.transpose() * pair.e.eval(t, &pair.params)?))
            .collect::<Result<Vec<_>>>()?,
        None => times.iter().map(|_| Matrix::zeros(0, m)).collect(),
    };
    Ok(CanonicalFrame {
        d,
        c_scan,
        c_ncan: adjoint.n_can,
        pi_can,
        g: GridFunction::new(t0, t1, g_values, true)?,
        condition_log,
        adjoint: adjoint.chain,
    })
}

/// `G_a = C_*(a)ᵀE(a)` at an arbitrary `a` of the interval.
pub fn ic_matrix(pair: &CoefficientPair, opts: &Options, a: f64) -> Result<Matrix> {
    let (t0, t1) = pair.interval;
    if !(t0..=t1).contains(&a) {
        return Err(Error::InvalidGrid(format!("a = {a} is outside [{t0}, {t1}]")));
    }
    let adj = adjoint_pair(pair);
    let node = reduce_node(&adj, a, opts.rank_tol, None)?;
    let Some(c) = node.s_can_jet() else {
        return Err(Error::AdjointNotRegular(format!(
            "pointwise reduction failed at t = {a}"
        )));
    };
    Ok(c.value().transpose() * pair.e.eval(a, &pair.params)?)
}

/// The three ways of stating the initial condition, compared at one node.
#[derive(Debug, Clone)]
pub struct IcEquivalenceReport {
    /// `x(a)` from `Π_can(a)(x(a) − x_a) = 0`.
    pub via_projector: Vector,
    /// `x(a)` from `x(a) − x_a ∈ N_can(a)`.
    pub via_subspace: Vector,
    /// `x(a)` from `G_a(x(a) − x_a) = 0`.
    pub via_ic_matrix: Vector,
    pub max_difference: f64,
    /// Largest membership residual of `x(a) − x_a` in `N_can(a)` over the three.
    pub max_membership_residual: f64,
    /// Condition number of `G_a C_Scan(a)`.
    pub gc_condition: f64,
}

pub fn check_accurate_conditions_equivalence(
    frame: &CanonicalFrame,
    node: usize,
    x_a: &Vector,
) -> Result<IcEquivalenceReport> {
    let m = frame.c_scan.shape().0;
    if x_a.len() != m {
        return Err(Error::Dimension(format!("x_a has length {}, expected {m}", x_a.len())));
    }
    let cs = frame.c_scan.value(node);
    let cn = frame.c_ncan.value(node);
    let pi = frame.pi_can.value(node);
    let g = frame.g.value(node);
    let d = frame.d;
    let via_projector = pi * x_a;
    let big = hstack(cs, cn);
    let coeffs = big.clone().lu().solve(x_a).ok_or(Error::ComplementError {
        node,
        cond: f64::INFINITY,
    })?;
    let via_subspace = cs * coeffs.rows(0, d);
    let gc = g * cs;
    let gc_condition = if d == 0 { 1.0 } else { condition_number(&gc) };
    let xi = if d == 0 {
        Vector::zeros(0)
    } else {
        gc.lu().solve(&(g * x_a)).ok_or(Error::ComplementError {
            node,
            cond: gc_condition,
        })?
    };
    let via_ic_matrix = cs * xi;
    let n_can = SubspaceBasis::from_orthonormal(cn.clone());
    let max_membership_residual = [&via_projector, &via_subspace, &via_ic_matrix]
        .iter()
        .map(|x| n_can.distance(&(*x - x_a)))
        .fold(0.0, f64::max);
    let max_difference = (&via_projector - &via_subspace)
        .amax()
        .max((&via_projector - &via_ic_matrix).amax())
        .max((&via_subspace - &via_ic_matrix).amax());
    Ok(IcEquivalenceReport {
        via_projector,
        via_subspace,
        via_ic_matrix,
        max_difference,
        max_membership_residual,
        gc_condition,
    })
}

/// Rank of `G_a` and the dimension of its kernel, as a quick sanity probe.
pub fn ic_matrix_rank(g: &Matrix, tol: f64) -> usize {
    RankRevealing::new(g, tol).rank()
}
