//! Constant pencils `λE + F`: regularity, Wong sequences, quasi-Weierstraß
//! data, spectral projector and the closed-form descriptor solution.

use alloc::vec;
use alloc::vec::Vec;

use crate::expr::{ExprMatrix, Params};
use crate::ivp::Trajectory;
use crate::linalg::{condition_number, hstack, norm2, Matrix, ProjectorMatrix, RankRevealing, SubspaceBasis, Vector};
use crate::{Error, Result};

/// Quasi-Weierstraß decomposition `S E T = diag(I_d, N)`, `S F T = diag(W, I)`.
#[derive(Debug, Clone)]
pub struct PencilForm {
    pub d: usize,
    pub mu: usize,
    pub t: Matrix,
    pub s: Matrix,
    pub w_block: Matrix,
    pub n_block: Matrix,
    pub pi_can: ProjectorMatrix,
    pub s_can: SubspaceBasis,
    pub n_can: SubspaceBasis,
    /// 2-norm condition number of `[E·V*, F·W*]`.
    pub condition: f64,
}

fn pencil_scale(e: &Matrix, f: &Matrix) -> f64 {
    norm2(e).max(norm2(f))
}

/// Regularity by probing `λ_k E + F` at `λ_k = k + ½`, `k = 0..=m`.
pub fn is_regular_pencil(e: &Matrix, f: &Matrix, tol: f64) -> bool {
    let m = e.nrows();
    if m == 0 {
        return true;
    }
    (0..=m).any(|k| {
        let lambda = k as f64 + 0.5;
        let probe = e * lambda + f;
        RankRevealing::new(&probe, tol).rank() == m
    })
}

/// The full Wong chains `V_0 ⊇ V_1 ⊇ … = V*` and `W_0 ⊆ W_1 ⊆ … = W*`.
#[derive(Debug, Clone)]
pub struct WongChains {
    pub v: Vec<SubspaceBasis>,
    pub w: Vec<SubspaceBasis>,
}

impl WongChains {
    pub fn v_star(&self) -> &SubspaceBasis {
        self.v.last().expect("chain is never empty")
    }

    pub fn w_star(&self) -> &SubspaceBasis {
        self.w.last().expect("chain is never empty")
    }
}

/// `V_{k+1} = {z : Fz ∈ E V_k}`, `W_{k+1} = {z : Ez ∈ F W_k}`, iterated to
/// stationarity.
pub fn wong_chains(e: &Matrix, f: &Matrix, tol: f64) -> WongChains {
    let m = e.nrows();
    let scale = pencil_scale(e, f);
    let preimage = |a: &Matrix, b: &Matrix, sub: &SubspaceBasis| -> SubspaceBasis {
        // {z : a z ∈ b·sub} = ker(corange(b·sub)ᵀ a)
        let image = b * sub.columns();
        let z = RankRevealing::with_floor(&image, tol, scale).corange();
        let constraint = z.columns().transpose() * a;
        RankRevealing::with_floor(&constraint, tol, scale).nullspace()
    };
    let mut v = vec![SubspaceBasis::full(m)];
    loop {
        let next = preimage(f, e, v.last().unwrap());
        let stalled = next.dim() == v.last().unwrap().dim();
        v.push(next);
        if stalled || v.len() > m + 2 {
            break;
        }
    }
    let mut w = vec![SubspaceBasis::zero(m)];
    loop {
        let next = preimage(e, f, w.last().unwrap());
        let stalled = next.dim() == w.last().unwrap().dim();
        w.push(next);
        if stalled || w.len() > m + 2 {
            break;
        }
    }
    // Drop the repeated terminal element.
    v.pop();
    w.pop();
    WongChains { v, w }
}

/// Limits `(V*, W*)`; fails unless `V* ⊕ W* = ℝ^m`.
pub fn wong_sequences(e: &Matrix, f: &Matrix, tol: f64) -> Result<(SubspaceBasis, SubspaceBasis)> {
    let chains = wong_chains(e, f, tol);
    let (v, w) = (chains.v_star().clone(), chains.w_star().clone());
    let m = e.nrows();
    if v.dim() + w.dim() != m || RankRevealing::new(&hstack(v.columns(), w.columns()), tol).rank() != m {
        return Err(Error::NotRegular);
    }
    Ok((v, w))
}

pub fn quasi_weierstrass(e: &Matrix, f: &Matrix, tol: f64) -> Result<PencilForm> {
    if !is_regular_pencil(e, f, tol) {
        return Err(Error::NotRegular);
    }
    let m = e.nrows();
    let (v, w) = wong_sequences(e, f, tol)?;
    let d = v.dim();
    let t = hstack(v.columns(), w.columns());
    let ev_fw = hstack(&(e * v.columns()), &(f * w.columns()));
    let condition = condition_number(&ev_fw);
    let s = ev_fw.try_inverse().ok_or(Error::NotRegular)?;
    let set = &s * e * &t;
    let sft = &s * f * &t;
    let w_block = sft.view((0, 0), (d, d)).into_owned();
    let n_block = set.view((d, d), (m - d, m - d)).into_owned();
    let t_inv = t.clone().try_inverse().ok_or(Error::NotRegular)?;
    let pi = t.columns(0, d) * t_inv.rows(0, d);
    let mu = nilpotency_index(&n_block, tol);
    Ok(PencilForm {
        d,
        mu,
        t,
        s,
        w_block,
        n_block,
        pi_can: ProjectorMatrix::new_unchecked(pi),
        s_can: v,
        n_can: w,
        condition,
    })
}

fn power_ranks(n: &Matrix, tol: f64) -> Vec<usize> {
    // rank N^0, rank N^1, … down to zero; powers are judged against
    // max(‖N‖, 1)^k so rounding residue of a vanished power reads as zero.
    // N sits beside an identity block, hence the unit floor.
    let k = n.nrows();
    let norm = norm2(n).max(1.0);
    let mut ranks = vec![k];
    let mut p = Matrix::identity(k, k);
    let mut bound = 1.0;
    while *ranks.last().unwrap() > 0 && ranks.len() <= k + 1 {
        p = &p * n;
        bound *= norm;
        ranks.push(RankRevealing::with_floor(&p, tol, bound).rank());
    }
    ranks
}

/// Smallest `k ≥ 1` with `N^k = 0`; zero for an empty block.
pub fn nilpotency_index(n: &Matrix, tol: f64) -> usize {
    if n.nrows() == 0 {
        return 0;
    }
    power_ranks(n, tol).len() - 1
}

/// `θ_i = rank N^{i+1} − rank N^{i+2}` = number of Jordan blocks of order
/// at least `i + 2`, for `i = 0..μ−2`.
pub fn block_counts_of(n: &Matrix, tol: f64) -> Vec<usize> {
    let ranks = power_ranks(n, tol);
    let mu = ranks.len() - 1;
    (0..mu.saturating_sub(1)).map(|i| ranks[i + 1] - ranks[i + 2]).collect()
}

pub fn jordan_block_counts(e: &Matrix, f: &Matrix, tol: f64) -> Result<Vec<usize>> {
    let form = quasi_weierstrass(e, f, tol)?;
    Ok(block_counts_of(&form.n_block, tol))
}

/// Padé(13) scaling-and-squaring matrix exponential.
pub fn expm(a: &Matrix) -> Matrix {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm1 > THETA13 {
        libm::ceil(libm::log2(norm1 / THETA13)) as i32
    } else {
        0
    };
    let a = a / libm::pow(2.0, s as f64);
    let id = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9]) + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &id * B[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8]) + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &id * B[0];
    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .expect("Padé denominator is nonsingular for scaled input");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Solves `E x' + F x = q(t)` on `[a, t1]` with `Π_can x(a) = Π_can x_a`.
///
/// The dynamic part follows the exponential propagator with per-step Simpson
/// quadrature of the convolution integral; the nilpotent part is the finite
/// sum `v = Σ_j (−1)^j N^j g^{(j)}` with symbolic derivatives of `q`.
pub fn solve_constant_ivp(
    e: &Matrix,
    f: &Matrix,
    q: &ExprMatrix,
    params: &Params,
    x_a: &Vector,
    (a, t1): (f64, f64),
    n: usize,
    tol: f64,
) -> Result<Trajectory> {
    let form = quasi_weierstrass(e, f, tol)?;
    let m = e.nrows();
    let d = form.d;
    if q.nrows() != m || q.ncols() != 1 || x_a.len() != m {
        return Err(Error::Dimension("q must be m×1 and x_a of length m".into()));
    }
    if n < 2 || !(t1 > a) {
        return Err(Error::InvalidGrid("need n ≥ 2 and t1 > a".into()));
    }
    let derivs = derivative_chain(q, form.mu.max(1));
    let g = |t: f64, j: usize| -> Result<Vector> { Ok(&form.s * derivs[j].eval(t, params)?.column(0)) };
    let times = crate::linalg::grid_times(a, t1, n);
    let h = (t1 - a) / (n - 1) as f64;
    let t_inv = form.t.clone().try_inverse().ok_or(Error::NotRegular)?;
    let mut u = (&t_inv * x_a).rows(0, d).into_owned();
    let prop = expm(&(-&form.w_block * h));
    let half = expm(&(-&form.w_block * (h / 2.0)));
    let nil = m - d;
    let v_at = |t: f64| -> Result<Vector> {
        let mut v = Vector::zeros(nil);
        let mut npow = Matrix::identity(nil, nil);
        for j in 0..form.mu {
            let gj = g(t, j)?.rows(d, nil).into_owned();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            v += &npow * gj * sign;
            npow = &npow * &form.n_block;
        }
        Ok(v)
    };
    let mut states = Vec::with_capacity(n);
    let assemble = |u: &Vector, v: &Vector| -> Vector {
        let mut y = Vector::zeros(m);
        y.rows_mut(0, d).copy_from(u);
        y.rows_mut(d, nil).copy_from(v);
        &form.t * y
    };
    states.push(assemble(&u, &v_at(times[0])?));
    for k in 1..n {
        let (tk, tn) = (times[k - 1], times[k]);
        let gu = |t: f64| -> Result<Vector> { Ok(g(t, 0)?.rows(0, d).into_owned()) };
        let quad = (&prop * gu(tk)? + &half * gu(tk + h / 2.0)? * 4.0 + gu(tn)?) * (h / 6.0);
        u = &prop * u + quad;
        states.push(assemble(&u, &v_at(tn)?));
    }
    if states.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonfiniteResult);
    }
    Ok(Trajectory::new(times, states, d))
}

/// `[q, q', …, q^{(k−1)}]`.
pub fn derivative_chain(q: &ExprMatrix, k: usize) -> Vec<ExprMatrix> {
    let mut out = vec![q.clone()];
    for _ in 1..k {
        let next = out.last().unwrap().differentiate();
        out.push(next);
    }
    out
}
