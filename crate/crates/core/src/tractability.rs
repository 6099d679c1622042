//! Admissible matrix function sequences of the projector-based analysis.
//!
//! Standard form is written with the proper factorization `A = E`,
//! `D = D⁻ = R = P₀ = E⁺E`, so `G₀ = E` and `B₀ = F − E P₀'`. Then
//! `G_{i+1} = G_i + B_iQ_i`, `Π_{i+1} = Π_iP_{i+1}` and
//! `B_{i+1} = B_iP_i − G_{i+1}D⁻(DΠ_{i+1}D⁻)'DΠ_i`, all on Taylor jets.

use alloc::format;
use alloc::vec::Vec;

use crate::error::RankWitness;
use crate::expr::ExprMatrix;
use crate::jet::{nullspace_jet, MatrixJet};
use crate::linalg::{align_sequence, hstack, norm2, GridFunction, Matrix, RankRevealing, SubspaceBasis};
use crate::reduction::CoefficientPair;
use crate::{Error, Options, Result};

/// `A, D, R, D⁻` of the proper factorization `E = AD` on the grid.
#[derive(Debug, Clone)]
pub struct ProperFactorization {
    pub a: GridFunction,
    pub d: GridFunction,
    pub r: GridFunction,
    pub d_minus: GridFunction,
    pub rank: usize,
}

/// `A = E`, `D = R = D⁻ = E⁺E`, checking constant rank and `ker A ∩ im D = 0`.
pub fn proper_factorization(e: &GridFunction, tol: f64) -> Result<ProperFactorization> {
    let mut ranks = Vec::with_capacity(e.n_points());
    let mut ds = Vec::with_capacity(e.n_points());
    for ev in e.values() {
        let rr = RankRevealing::new(ev, tol);
        ranks.push(rr.rank());
        ds.push(rr.coimage().orthoprojector());
    }
    let found: Vec<RankWitness> = ranks
        .iter()
        .enumerate()
        .filter(|(_, &r)| r != ranks[0])
        .map(|(node, &rank)| RankWitness { node, rank })
        .collect();
    if !found.is_empty() {
        return Err(Error::RankDrift {
            level: 0,
            what: "E",
            expected: ranks[0],
            found,
        });
    }
    for (node, (ev, dv)) in e.values().iter().zip(&ds).enumerate() {
        // Transversality ker A ⊕ im D = ℝ^m, and A = AR.
        let ker = RankRevealing::new(ev, tol).nullspace();
        let im = SubspaceBasis::span_of(dv, tol);
        if crate::linalg::subspace_intersect(&ker, &im, tol).dim() > 0
            || (ev * dv - ev).norm() > 1e-10 * (1.0 + ev.norm())
        {
            return Err(Error::ComplementError {
                node,
                cond: f64::INFINITY,
            });
        }
    }
    let d = GridFunction::new(e.t0(), e.t1(), ds, true)?;
    Ok(ProperFactorization {
        a: e.clone(),
        r: d.clone(),
        d_minus: d.clone(),
        d,
        rank: ranks[0],
    })
}

/// How `Q_i` (`i ≥ 1`) is complemented.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ProjectorChoice {
    /// `Q_i` projects onto `N_i` along `(N₀+⋯+N_i)^⊥ ⊕ (N₀+⋯+N_{i−1})`.
    #[default]
    WidelyOrthogonal,
    /// `Q_i = N_i(L_iN_i)⁻¹L_i` with given `n_i × m` rows `L_i`, indexed by
    /// level; `None` entries (and missing levels) fall back to the widely
    /// orthogonal choice.
    ComplementRows(Vec<Option<ExprMatrix>>),
}

/// Sequence values at one time; `g` has `μ + 1` entries, the others `μ`.
#[derive(Debug, Clone)]
pub struct SequenceAt {
    pub t: f64,
    pub g: Vec<Matrix>,
    pub b: Vec<Matrix>,
    pub q: Vec<Matrix>,
    pub p: Vec<Matrix>,
    pub pi: Vec<Matrix>,
    pub r_t: Vec<usize>,
    pub mu: usize,
    /// `max_{j<i} ‖Q_iQ_j‖`, zero for admissible sequences.
    pub admissibility_residual: f64,
}

fn orthoprojector_jet(n: &MatrixJet, tol: f64) -> Result<MatrixJet> {
    let nt = n.transpose();
    let gram = nt
        .mul(n)
        .inverse(tol)
        .ok_or_else(|| Error::NotRegularTractability("kernel basis lost rank".into()))?;
    Ok(n.mul(&gram).mul(&nt))
}

/// The admissible sequence at `t`, up to the first nonsingular `G_μ`.
pub fn admissible_at(pair: &CoefficientPair, t: f64, tol: f64, choice: &ProjectorChoice) -> Result<SequenceAt> {
    let m = pair.m();
    let (e0, f0) = pair.eval(t)?;
    let scale = norm2(&hstack(&e0, &f0));
    let rr_e = RankRevealing::with_floor(&e0, tol, scale);
    let order = (rr_e.rank() + 4).min(m + 3);
    let (e, f) = pair.jets(t, order)?;
    let ident = |k: usize| MatrixJet::identity(m, k);

    let n0 = nullspace_jet(&e, &rr_e, None);
    let q0 = orthoprojector_jet(&n0, tol)?;
    let p0 = ident(q0.order()).sub(&q0);
    let mut g = e.clone();
    let mut b = f.sub(&e.mul(&p0.derivative()));
    let mut q = q0;
    let mut p = p0.clone();
    let mut pi = p0.clone();
    let mut out = SequenceAt {
        t,
        g: Vec::new(),
        b: Vec::new(),
        q: Vec::new(),
        p: Vec::new(),
        pi: Vec::new(),
        r_t: Vec::new(),
        mu: 0,
        admissibility_residual: 0.0,
    };
    let mut rank = rr_e.rank();
    out.g.push(g.value().clone());
    out.r_t.push(rank);
    let mut level = 0;
    while rank < m {
        if level > m {
            return Err(Error::NotRegularTractability(format!(
                "no nonsingular G_i within {} levels",
                m + 1
            )));
        }
        out.b.push(b.value().clone());
        out.q.push(q.value().clone());
        out.p.push(p.value().clone());
        out.pi.push(pi.value().clone());
        for qj in &out.q[..level] {
            out.admissibility_residual = out.admissibility_residual.max((q.value() * qj).norm());
        }
        let g_next = g.add(&b.mul(&q));
        let rr_g = RankRevealing::with_floor(g_next.value(), tol, scale);
        rank = rr_g.rank();
        out.g.push(g_next.value().clone());
        out.r_t.push(rank);
        level += 1;
        if rank == m {
            break;
        }
        if g_next.order() < 2 {
            return Err(Error::NotRegularTractability("jet order exhausted".into()));
        }
        let n = nullspace_jet(&g_next, &rr_g, None);
        let rr_pi = RankRevealing::with_floor(pi.value(), tol, 1.0);
        let ker_pi = nullspace_jet(&pi, &rr_pi, None);
        let w = n.hstack(&ker_pi);
        let w_rank = RankRevealing::with_floor(w.value(), tol, 1.0).rank();
        if w_rank < w.ncols() {
            return Err(Error::NotRegularTractability(format!(
                "N_{level} intersects N₀+⋯+N_{} nontrivially at t = {t}",
                level - 1
            )));
        }
        let rows = match choice {
            ProjectorChoice::ComplementRows(ls) => ls.get(level).and_then(|l| l.as_ref()),
            ProjectorChoice::WidelyOrthogonal => None,
        };
        let q_next = match rows {
            Some(l) => {
                let lj = l.taylor(t, &pair.params, n.order())?;
                if lj.shape() != (n.ncols(), m) {
                    return Err(Error::Dimension(format!(
                        "complement rows at level {level} must be {}×{m}",
                        n.ncols()
                    )));
                }
                let ln_inv = lj.mul(&n).inverse(tol).ok_or_else(|| {
                    Error::NotRegularTractability(format!(
                        "complement rows at level {level} are not transversal to N_{level}"
                    ))
                })?;
                n.mul(&ln_inv).mul(&lj)
            }
            None => {
                let wt = w.transpose();
                let w_pinv = wt
                    .mul(&w)
                    .inverse(tol)
                    .ok_or_else(|| Error::NotRegularTractability("degenerate complement".into()))?
                    .mul(&wt);
                n.mul(&w_pinv.rows(0, n.ncols()))
            }
        };
        let p_next = ident(q_next.order()).sub(&q_next);
        let pi_next = pi.mul(&p_next);
        let dpd = p0.mul(&pi_next).mul(&p0).derivative();
        let b_next = b.mul(&p).sub(&g_next.mul(&p0).mul(&dpd).mul(&p0).mul(&pi));
        g = g_next;
        b = b_next;
        q = q_next;
        p = p_next;
        pi = pi_next;
    }
    out.mu = level;
    Ok(out)
}

/// One level of the sequence on the grid.
#[derive(Debug, Clone)]
pub struct TractabilityLevel {
    pub g: GridFunction,
    pub b: GridFunction,
    pub q: GridFunction,
    pub p: GridFunction,
    pub pi: GridFunction,
    pub r_t: usize,
}

#[derive(Debug, Clone)]
pub struct AdmissibleSequence {
    /// Levels `0..μ`.
    pub levels: Vec<TractabilityLevel>,
    /// `G_μ`.
    pub g_final: GridFunction,
    pub mu_t: usize,
    /// `r^T_0, …, r^T_μ`.
    pub r_t: Vec<usize>,
    /// Orthonormal basis of `ker Π_{μ−1}`, aligned along the grid.
    pub n_can: GridFunction,
    pub max_admissibility_residual: f64,
    pub max_idempotency_residual: f64,
}

pub fn admissible_sequence(
    pair: &CoefficientPair,
    opts: &Options,
    choice: &ProjectorChoice,
) -> Result<AdmissibleSequence> {
    let m = pair.m();
    let (t0, t1) = pair.interval;
    let points = pair
        .times(opts.grid_n)
        .into_iter()
        .map(|t| admissible_at(pair, t, opts.rank_tol, choice))
        .collect::<Result<Vec<_>>>()?;
    let r_t = points[0].r_t.clone();
    let mut found = Vec::new();
    let mut level = 0;
    for (node, p) in points.iter().enumerate() {
        if p.r_t != r_t {
            level = p
                .r_t
                .iter()
                .zip(&r_t)
                .position(|(a, b)| a != b)
                .unwrap_or(r_t.len().min(p.r_t.len()));
            found.push(RankWitness {
                node,
                rank: p.r_t.get(level).copied().unwrap_or(m),
            });
        }
    }
    if !found.is_empty() {
        return Err(Error::RankDrift {
            level,
            what: "G_i",
            expected: r_t.get(level).copied().unwrap_or(m),
            found,
        });
    }
    let mu = points[0].mu;
    let grid = |f: &dyn Fn(&SequenceAt) -> Matrix| GridFunction::new(t0, t1, points.iter().map(f).collect(), true);
    let mut levels = Vec::with_capacity(mu);
    let mut idem: f64 = 0.0;
    for i in 0..mu {
        for p in &points {
            idem = idem
                .max(crate::linalg::idempotency_residual(&p.q[i]))
                .max(crate::linalg::idempotency_residual(&p.pi[i]));
        }
        levels.push(TractabilityLevel {
            g: grid(&|p| p.g[i].clone())?,
            b: grid(&|p| p.b[i].clone())?,
            q: grid(&|p| p.q[i].clone())?,
            p: grid(&|p| p.p[i].clone())?,
            pi: grid(&|p| p.pi[i].clone())?,
            r_t: r_t[i],
        });
    }
    let n_can = if mu == 0 {
        GridFunction::new(t0, t1, points.iter().map(|_| Matrix::zeros(m, 0)).collect(), true)?
    } else {
        let bases: Vec<SubspaceBasis> = points
            .iter()
            .map(|p| RankRevealing::with_floor(&p.pi[mu - 1], opts.rank_tol, 1.0).nullspace())
            .collect();
        let dims: Vec<usize> = bases.iter().map(|b| b.dim()).collect();
        if dims.iter().any(|&d| d != dims[0]) {
            return Err(Error::RankDrift {
                level: mu - 1,
                what: "Π_{μ−1}",
                expected: dims[0],
                found: dims
                    .iter()
                    .enumerate()
                    .filter(|(_, &d)| d != dims[0])
                    .map(|(node, &rank)| RankWitness { node, rank })
                    .collect(),
            });
        }
        GridFunction::new(t0, t1, align_sequence(bases), true)?
    };
    Ok(AdmissibleSequence {
        levels,
        g_final: grid(&|p| p.g[mu].clone())?,
        mu_t: mu,
        r_t,
        n_can,
        max_admissibility_residual: points.iter().map(|p| p.admissibility_residual).fold(0.0, f64::max),
        max_idempotency_residual: idem,
    })
}

pub fn n_can_via_tractability(seq: &AdmissibleSequence) -> &GridFunction {
    &seq.n_can
}

/// Inclusion residuals `im G_i ⊆ im G_{i+1}` and `ker Π_{i−1} ⊆ ker Π_i` at one
/// time, as the largest distance of a basis vector to the larger subspace.
pub fn inclusion_residuals(seq: &SequenceAt, tol: f64) -> (f64, f64) {
    let dist = |small: &SubspaceBasis, big: &SubspaceBasis| -> f64 {
        let p = big.orthoprojector();
        let c = small.columns();
        (c - &p * c).norm()
    };
    let mut g_res: f64 = 0.0;
    for w in seq.g.windows(2) {
        let a = RankRevealing::new(&w[0], tol).range();
        let b = RankRevealing::new(&w[1], tol).range();
        g_res = g_res.max(dist(&a, &b));
    }
    let mut pi_res: f64 = 0.0;
    for w in seq.pi.windows(2) {
        let a = RankRevealing::with_floor(&w[0], tol, 1.0).nullspace();
        let b = RankRevealing::with_floor(&w[1], tol, 1.0).nullspace();
        pi_res = pi_res.max(dist(&a, &b));
    }
    (g_res, pi_res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Params;
    use crate::linalg::subspace_gap;
    use alloc::vec;

    fn pair(e: &[&[&str]], f: &[&[&str]]) -> CoefficientPair {
        CoefficientPair::new(
            ExprMatrix::parse_rows(e).unwrap(),
            ExprMatrix::parse_rows(f).unwrap(),
            (0.0, 1.0),
            Params::new(),
        )
        .unwrap()
    }

    #[test]
    fn proper_factorization_of_simple_leading_terms() {
        let e = GridFunction::sample(0.0, 1.0, 9, |_| Ok(Matrix::identity(2, 2))).unwrap();
        let pf = proper_factorization(&e, 1e-9).unwrap();
        assert!(pf
            .d
            .values()
            .iter()
            .all(|d| (d - Matrix::identity(2, 2)).norm() < 1e-14));
        let e = GridFunction::sample(0.0, 1.0, 9, |_| Ok(Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]))).unwrap();
        let pf = proper_factorization(&e, 1e-9).unwrap();
        assert!((pf.d.value(3) - Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-14);
        let drift = GridFunction::sample(0.0, 1.0, 9, |t| Ok(Matrix::from_row_slice(1, 1, &[t - 0.5]))).unwrap();
        assert!(matches!(
            proper_factorization(&drift, 1e-9),
            Err(Error::RankDrift { .. })
        ));
    }

    #[test]
    fn nonsingular_leading_matrix_has_length_one() {
        let p = pair(&[&["1", "t"], &["0", "1"]], &[&["sin(t)", "0"], &["1", "2"]]);
        let s = admissible_at(&p, 0.4, 1e-9, &ProjectorChoice::default()).unwrap();
        assert_eq!((s.mu, s.r_t.clone()), (0, vec![2]));
        assert_eq!(s.g.len(), 1);
    }

    #[test]
    fn semi_explicit_index_one() {
        let p = pair(&[&["1", "0"], &["0", "0"]], &[&["1", "t"], &["1", "2"]]);
        let seq = admissible_sequence(&p, &Options::default(), &ProjectorChoice::default()).unwrap();
        assert_eq!((seq.mu_t, seq.r_t.clone()), (1, vec![1, 2]));
        let n = SubspaceBasis::from_orthonormal(Matrix::from_row_slice(2, 1, &[0.0, 1.0]));
        for v in seq.n_can.values() {
            assert!(subspace_gap(&SubspaceBasis::from_orthonormal(v.clone()), &n) < 1e-12);
        }
    }

    #[test]
    fn index_three_chain_with_time_varying_kernel() {
        // E = [[0, 1, 0], [0, 0, 1], [0, 0, 0]] rotated by a smooth K(t).
        let p = pair(
            &[&["0", "1", "t"], &["0", "0", "1"], &["0", "0", "0"]],
            &[&["1", "0", "0"], &["0", "1", "0"], &["0", "0", "1"]],
        );
        let s = admissible_at(&p, 0.3, 1e-9, &ProjectorChoice::default()).unwrap();
        assert_eq!(s.mu, 3);
        assert_eq!(s.r_t, vec![2, 2, 2, 3]);
        assert!(s.admissibility_residual < 1e-12);
        let (g_res, pi_res) = inclusion_residuals(&s, 1e-9);
        assert!(g_res < 1e-10 && pi_res < 1e-10);
    }

    #[test]
    fn complement_rows_must_be_transversal() {
        let p = pair(&[&["0", "1"], &["0", "0"]], &[&["1", "0"], &["0", "1"]]);
        // N₁ is spanned by (1, 0)ᵀ + …; rows (0, 1) annihilate it.
        let bad = ProjectorChoice::ComplementRows(vec![None, Some(ExprMatrix::parse_rows(&[&["0", "1"]]).unwrap())]);
        let s = admissible_at(&p, 0.0, 1e-9, &ProjectorChoice::default()).unwrap();
        assert_eq!(s.mu, 2);
        let n1 = RankRevealing::new(&s.g[1], 1e-9).nullspace();
        let annihilated = (Matrix::from_row_slice(1, 2, &[0.0, 1.0]) * n1.columns()).norm() < 1e-12;
        let r = admissible_at(&p, 0.0, 1e-9, &bad);
        assert_eq!(annihilated, r.is_err());
    }
}
