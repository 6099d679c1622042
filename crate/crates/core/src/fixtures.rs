//! Golden problems and seeded generators with known characteristics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::characteristics::Characteristics;
use crate::expr::{self, Expr, ExprMatrix, Params};
use crate::ivp::SemiExplicit;
use crate::linalg::Matrix;
use crate::reduction::CoefficientPair;
use crate::rng::SeededRng;
use crate::tractability::ProjectorChoice;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expected {
    Regular(Characteristics),
    NotPreRegularAtLevel(usize),
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub pair: CoefficientPair,
    pub expected: Expected,
}

impl Fixture {
    pub fn characteristics(&self) -> Option<&Characteristics> {
        match &self.expected {
            Expected::Regular(c) => Some(c),
            Expected::NotPreRegularAtLevel(_) => None,
        }
    }
}

fn rows(r: &[&[&str]]) -> ExprMatrix {
    ExprMatrix::parse_rows(r).expect("fixture expressions are well formed")
}

fn z(r: usize, c: usize) -> ExprMatrix {
    ExprMatrix::zeros(r, c)
}

/// Closed-form objects of the linearized Campbell–Moore problem.
#[derive(Debug, Clone)]
pub struct CampbellMoore {
    pub fixture: Fixture,
    pub rho: f64,
    pub a_frak: ExprMatrix,
    pub b_frak: ExprMatrix,
    pub c_frak: ExprMatrix,
    /// Orthoprojector onto `im 𝔅`.
    pub omega: ExprMatrix,
    /// Basis of `ker 𝔅ᵀ`, `Hᵀ`.
    pub c_b: ExprMatrix,
    pub h: ExprMatrix,
    pub k1: ExprMatrix,
    pub k2: ExprMatrix,
    /// Basis of `S_can`; the last block row is `[𝔎₂, 𝔎₁]`.
    pub c_scan: ExprMatrix,
    /// The same layout with `[𝔎₁, 𝔎₂]` in the last block row, which does not
    /// span an invariant subspace.
    pub c_scan_swapped: ExprMatrix,
    pub c_ncan: ExprMatrix,
    pub g1: ExprMatrix,
    pub q1: ExprMatrix,
    pub pi1: ExprMatrix,
    pub g2: ExprMatrix,
    pub pi2: ExprMatrix,
    /// The variant of `Π₂` lacking the `(I − Ω)𝔄Ω` term.
    pub pi2_missing_term: ExprMatrix,
    /// `G = [[H, 0, 0], [0, H, 0]]Π₂`, rows spanning the accurate IC data.
    pub g_ic: ExprMatrix,
    /// `G(0)` as a plain matrix.
    pub g_ic_at_zero: Matrix,
    /// Complement rows reproducing the projectors `Q₁`, `Q₂` above.
    pub projector_choice: ProjectorChoice,
}

pub fn campbell_moore(rho: f64) -> Result<CampbellMoore> {
    if rho == 0.0 || !rho.is_finite() {
        return Err(Error::ZeroRho);
    }
    let a_frak = rows(&[&["0", "1", "-cos(t)"], &["-1", "0", "-sin(t)"], &["0", "0", "0"]]);
    let b_frak = rows(&[&["-2*rho*cos(t)^2"], &["-2*rho*sin(t)*cos(t)"], &["2*rho*sin(t)"]]);
    let c_frak = rows(&[&["0", "0", "sin(t)"], &["0", "0", "-cos(t)"], &["0", "0", "1"]]);
    let i3 = ExprMatrix::identity(3);
    let i1 = ExprMatrix::identity(1);
    let bt = b_frak.transpose();
    let e = ExprMatrix::blocks(&[
        &[&i3, &z(3, 3), &z(3, 1)],
        &[&z(3, 3), &i3, &z(3, 1)],
        &[&z(1, 3), &z(1, 3), &z(1, 1)],
    ]);
    let f = ExprMatrix::blocks(&[
        &[&z(3, 3), &i3.neg(), &z(3, 1)],
        &[&c_frak, &a_frak, &b_frak],
        &[&bt.neg(), &z(1, 3), &z(1, 1)],
    ]);
    let mut params = Params::new();
    params.insert("rho".into(), rho);
    let pair = CoefficientPair::new(e, f, (0.0, core::f64::consts::TAU), params)?;

    let inv = expr::div(Expr::one(), expr::mul(Expr::num(4.0), expr::pow(Expr::param("rho"), 2)));
    let omega = b_frak.mul(&bt).scale(&inv);
    let d_omega = omega.differentiate();
    let dd_omega = d_omega.differentiate();
    let h = rows(&[&["sin(t)", "-cos(t)", "0"], &["0", "1", "cos(t)"]]);
    let c_b = h.transpose();
    let two = Expr::num(2.0);
    let k1 = bt.mul(&d_omega.scale(&two).sub(&a_frak)).mul(&c_b).scale(&inv);
    let k2 = bt
        .mul(
            &dd_omega
                .sub(&c_frak)
                .add(&a_frak.mul(&d_omega))
                .sub(&d_omega.mul(&d_omega).scale(&two)),
        )
        .mul(&c_b)
        .scale(&inv);
    // X₃ = 𝔎₂ξ₁ + 𝔎₁ξ₂ for X₁ = C_𝔅ξ₁, X₂ = −Ω'C_𝔅ξ₁ + C_𝔅ξ₂
    let c_scan = ExprMatrix::blocks(&[&[&c_b, &z(3, 2)], &[&d_omega.mul(&c_b).neg(), &c_b], &[&k2, &k1]]);
    let c_scan_swapped = ExprMatrix::blocks(&[&[&c_b, &z(3, 2)], &[&d_omega.mul(&c_b).neg(), &c_b], &[&k1, &k2]]);
    let i_omega = i3.sub(&omega);
    let c_ncan = ExprMatrix::blocks(&[
        &[&b_frak, &z(3, 1), &z(3, 1)],
        &[
            &i_omega.mul(&a_frak).add(&d_omega).mul(&b_frak).neg(),
            &b_frak,
            &z(3, 1),
        ],
        &[&z(1, 1), &z(1, 1), &i1],
    ]);
    let g1 = ExprMatrix::blocks(&[
        &[&i3, &z(3, 3), &z(3, 1)],
        &[&z(3, 3), &i3, &b_frak],
        &[&z(1, 3), &z(1, 3), &z(1, 1)],
    ]);
    let q1 = ExprMatrix::blocks(&[
        &[&z(3, 3), &z(3, 3), &z(3, 1)],
        &[&z(3, 3), &omega, &z(3, 1)],
        &[&z(1, 3), &bt.scale(&inv).neg(), &z(1, 1)],
    ]);
    let pi1 = ExprMatrix::blocks(&[
        &[&i3, &z(3, 3), &z(3, 1)],
        &[&z(3, 3), &i_omega, &z(3, 1)],
        &[&z(1, 3), &z(1, 3), &z(1, 1)],
    ]);
    let g2 = ExprMatrix::blocks(&[
        &[&i3, &omega.neg(), &z(3, 1)],
        &[
            &z(3, 3),
            &i3.add(&a_frak.mul(&omega)).add(&d_omega.mul(&omega)),
            &b_frak,
        ],
        &[&z(1, 3), &z(1, 3), &z(1, 1)],
    ]);
    let d_omega_omega = d_omega.mul(&omega);
    let pi2 = ExprMatrix::blocks(&[
        &[&i_omega, &z(3, 3), &z(3, 1)],
        &[
            &i_omega.mul(&a_frak).mul(&omega).add(&d_omega_omega),
            &i_omega,
            &z(3, 1),
        ],
        &[&z(1, 3), &z(1, 3), &z(1, 1)],
    ]);
    let pi2_missing_term = ExprMatrix::blocks(&[
        &[&i_omega, &z(3, 3), &z(3, 1)],
        &[&d_omega_omega, &i_omega, &z(3, 1)],
        &[&z(1, 3), &z(1, 3), &z(1, 1)],
    ]);
    let g_ic = ExprMatrix::blocks(&[
        &[&h, &z(2, 3), &z(2, 1)],
        &[&h.mul(&a_frak.add(&d_omega)).mul(&omega), &h, &z(2, 1)],
    ]);
    #[rustfmt::skip]
    let g_ic_at_zero = Matrix::from_row_slice(4, 7, &[
        0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0,
        -1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0,
    ]);
    let projector_choice = ProjectorChoice::ComplementRows(vec![
        None,
        Some(ExprMatrix::blocks(&[&[&z(1, 3), &bt, &z(1, 1)]])),
        Some(ExprMatrix::blocks(&[&[&bt, &z(1, 3), &z(1, 1)]])),
    ]);
    Ok(CampbellMoore {
        fixture: Fixture {
            name: format!("campbell-moore(rho={rho})"),
            pair,
            expected: Expected::Regular(Characteristics::from_profile(7, 6, &[1, 1, 0])?),
        },
        rho,
        a_frak,
        b_frak,
        c_frak,
        omega,
        c_b,
        h,
        k1,
        k2,
        c_scan,
        c_scan_swapped,
        c_ncan,
        g1,
        q1,
        pi1,
        g2,
        pi2,
        pi2_missing_term,
        g_ic,
        g_ic_at_zero,
        projector_choice,
    })
}

/// `E = [[−t, t²], [−1, t]]`, `F = I`: constant ranks at level 0, but the
/// reduced pair vanishes identically.
pub fn two_by_two_example() -> Fixture {
    let pair = CoefficientPair::new(
        rows(&[&["-t", "t^2"], &["-1", "t"]]),
        ExprMatrix::identity(2),
        (0.0, 1.0),
        Params::new(),
    )
    .expect("fixture is well formed");
    Fixture {
        name: "two-by-two".into(),
        pair,
        expected: Expected::NotPreRegularAtLevel(1),
    }
}

/// `c₀ + c₁t + c₂ sin(c₃t)` with `|·| ≤ amp` on `[0, 1]`.
fn smooth_entry(rng: &mut SeededRng, amp: f64) -> (Expr, f64) {
    let c0 = rng.range(-amp, amp) / 3.0;
    let c1 = rng.range(-amp, amp) / 3.0;
    let c2 = rng.range(-amp, amp) / 3.0;
    let c3 = rng.range(0.5, 2.0);
    let e = expr::add(
        expr::add(Expr::num(c0), expr::mul(Expr::num(c1), expr::t())),
        expr::mul(Expr::num(c2), expr::sin(expr::mul(Expr::num(c3), expr::t()))),
    );
    (e, c0.abs() + c1.abs() + c2.abs())
}

fn smooth_block(rng: &mut SeededRng, r: usize, c: usize, amp: f64) -> ExprMatrix {
    ExprMatrix::from_fn(r, c, |_, _| smooth_entry(rng, amp).0)
}

/// Strictly diagonally dominant smooth block on `[0, 1]`.
fn dominant_block(rng: &mut SeededRng, n: usize, amp: f64) -> ExprMatrix {
    let mut m = ExprMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if i != j {
                let (e, bound) = smooth_entry(rng, amp);
                m.set(i, j, e);
                off += bound;
            }
        }
        let (e, bound) = smooth_entry(rng, amp * 0.1);
        m.set(i, i, expr::add(Expr::num(1.0 + off + bound), e));
    }
    m
}

/// Random semi-explicit index-1 system on `[0, 1]` with `r` differential
/// and `k` algebraic components.
pub fn semi_explicit(r: usize, k: usize, seed: u64) -> (SemiExplicit, Fixture) {
    let mut rng = SeededRng::new(seed);
    let sys = SemiExplicit {
        f11: smooth_block(&mut rng, r, r, 1.0),
        f12: smooth_block(&mut rng, r, k, 1.0),
        f21: smooth_block(&mut rng, k, r, 1.0),
        f22: dominant_block(&mut rng, k, 1.0),
        params: Params::new(),
    };
    let pair = sys.pair((0.0, 1.0)).expect("template is well formed");
    let fixture = Fixture {
        name: format!("semi-explicit(r={r},k={k},seed={seed})"),
        pair,
        expected: Expected::Regular(Characteristics::from_profile(r + k, r, &[0]).expect("valid profile")),
    };
    (sys, fixture)
}

/// Random pointwise nonsingular `n × n` matrix function, polynomial of
/// degree `degree` in `s = (t − t₀)/(t₁ − t₀)`, diagonally dominant on
/// `[t₀, t₁]`.
pub fn random_transform(n: usize, degree: usize, (t0, t1): (f64, f64), rng: &mut SeededRng) -> ExprMatrix {
    let s = expr::div(expr::sub(expr::t(), Expr::num(t0)), Expr::num(t1 - t0));
    let poly = |rng: &mut SeededRng, amp: f64| -> (Expr, f64) {
        let mut e = Expr::zero();
        let mut bound = 0.0;
        for p in 0..=degree {
            let c = rng.range(-amp, amp);
            bound += libm::fabs(c);
            e = expr::add(e, expr::mul(Expr::num(c), expr::pow(s.clone(), p as i32)));
        }
        (e, bound)
    };
    let mut m = ExprMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if i != j {
                let (e, b) = poly(rng, 0.5);
                m.set(i, j, e);
                off += b;
            }
        }
        let (e, b) = poly(rng, 0.1);
        m.set(i, i, expr::add(Expr::num(0.5 + off + b), e));
    }
    m
}

/// Constant planted pencil `E₀ = diag(I_d, N)`, `F₀ = diag(W, I)` with
/// `Ẽ = L E₀ K`, `F̃ = L F₀ K + L E₀ K'`.
#[derive(Debug, Clone)]
pub struct Plant {
    pub fixture: Fixture,
    pub d: usize,
    pub w_block: Matrix,
    pub n_block: Matrix,
    /// Orders of the Jordan blocks of `N`, including order one.
    pub block_orders: Vec<usize>,
    pub l: ExprMatrix,
    pub k: ExprMatrix,
}

impl Plant {
    /// `Π_can(t) = K(t)⁻¹ diag(I_d, 0) K(t)`.
    pub fn pi_can(&self, t: f64) -> Result<Matrix> {
        let k = self.k.eval(t, &Params::new())?;
        let m = k.nrows();
        let k_inv = k.clone().try_inverse().ok_or(Error::SingularTransform(0))?;
        let mut diag = Matrix::zeros(m, m);
        for i in 0..self.d {
            diag[(i, i)] = 1.0;
        }
        Ok(k_inv * diag * k)
    }

    /// `L(t)⁻¹`.
    pub fn l_inverse(&self, t: f64) -> Result<Matrix> {
        self.l
            .eval(t, &Params::new())?
            .try_inverse()
            .ok_or(Error::SingularTransform(0))
    }
}

/// Plant with explicit dynamic dimension `d` and nilpotent block orders.
pub fn plant_with_blocks(d: usize, orders: &[usize], seed: u64, time_varying: bool) -> Result<Plant> {
    if orders.contains(&0) {
        return Err(Error::InvalidProfile("block orders must be positive".into()));
    }
    let nil: usize = orders.iter().sum();
    let m = d + nil;
    if m == 0 {
        return Err(Error::InvalidProfile("empty plant".into()));
    }
    let mut rng = SeededRng::new(seed);
    let w_block = rng.matrix(d, d, -1.0, 1.0);
    let mut n_block = Matrix::zeros(nil, nil);
    let mut start = 0;
    for &o in orders {
        for i in 0..o - 1 {
            n_block[(start + i, start + i + 1)] = 1.0;
        }
        start += o;
    }
    let degree = if time_varying { 2 } else { 0 };
    let l = random_transform(m, degree, (0.0, 1.0), &mut rng);
    let k = random_transform(m, degree, (0.0, 1.0), &mut rng);
    let name = format!("plant(d={d},blocks={orders:?},seed={seed},tv={time_varying})");
    assemble_plant(name, d, w_block, n_block, orders.to_vec(), l, k)
}

fn assemble_plant(
    name: String,
    d: usize,
    w_block: Matrix,
    n_block: Matrix,
    block_orders: Vec<usize>,
    l: ExprMatrix,
    k: ExprMatrix,
) -> Result<Plant> {
    let nil = n_block.nrows();
    let m = d + nil;
    let mut e0 = Matrix::zeros(m, m);
    let mut f0 = Matrix::zeros(m, m);
    e0.view_mut((0, 0), (d, d)).copy_from(&Matrix::identity(d, d));
    e0.view_mut((d, d), (nil, nil)).copy_from(&n_block);
    f0.view_mut((0, 0), (d, d)).copy_from(&w_block);
    f0.view_mut((d, d), (nil, nil)).copy_from(&Matrix::identity(nil, nil));
    let le = l.mul(&ExprMatrix::from_constant(&e0));
    let e = le.mul(&k);
    let f = l
        .mul(&ExprMatrix::from_constant(&f0))
        .mul(&k)
        .add(&le.mul(&k.differentiate()));
    let pair = CoefficientPair::new(e, f, (0.0, 1.0), Params::new())?;
    let r = d + block_orders.iter().map(|o| o - 1).sum::<usize>();
    let max_order = block_orders.iter().copied().max().unwrap_or(0);
    let mut theta: Vec<usize> = (2..=max_order)
        .map(|o| block_orders.iter().filter(|&&x| x >= o).count())
        .collect();
    theta.push(0);
    let expected = Characteristics::from_profile(m, r, &theta)?;
    Ok(Plant {
        fixture: Fixture {
            name,
            pair,
            expected: Expected::Regular(expected),
        },
        d,
        w_block,
        n_block,
        block_orders,
        l,
        k,
    })
}

impl Plant {
    /// The plant moved by a further equivalence `{L₂ẼK₂, L₂F̃K₂ + L₂ẼK₂'}`,
    /// built from the composed transforms `L₂L`, `KK₂` so that expression
    /// size stays that of a single transform.
    pub fn transformed(&self, l2: &ExprMatrix, k2: &ExprMatrix) -> Result<Plant> {
        let m = self.fixture.pair.m();
        if (l2.nrows(), l2.ncols(), k2.nrows(), k2.ncols()) != (m, m, m, m) {
            return Err(Error::Dimension(format!("L and K must be {m}×{m}")));
        }
        assemble_plant(
            format!("{}+transform", self.fixture.name),
            self.d,
            self.w_block.clone(),
            self.n_block.clone(),
            self.block_orders.clone(),
            l2.mul(&self.l),
            self.k.mul(k2),
        )
    }
}

/// Plant realizing a θ profile in dimension `m`.
///
/// `θ_j` counts the Jordan blocks of order at least `j + 2`. The remaining
/// dimension is split between order-one blocks and the dynamic part; the
/// index-one profile `(0)` always receives at least one order-one block.
pub fn plant_regular(m: usize, theta: &[usize], seed: u64, time_varying: bool) -> Result<Plant> {
    let bad = |msg: &str| Error::InvalidProfile(format!("{msg}: θ = {theta:?}, m = {m}"));
    if theta.is_empty() || *theta.last().unwrap() != 0 {
        return Err(bad("profile must end in 0"));
    }
    if theta.windows(2).any(|w| w[1] > w[0]) || theta[..theta.len() - 1].contains(&0) {
        return Err(bad("profile must be positive and nonincreasing before its final 0"));
    }
    let mut orders = Vec::new();
    for j in 0..theta.len() - 1 {
        let exact = theta[j] - theta[j + 1];
        orders.extend(core::iter::repeat_n(j + 2, exact));
    }
    let used: usize = orders.iter().sum();
    if used > m {
        return Err(bad("Jordan blocks exceed the dimension"));
    }
    let rem = m - used;
    let mut rng = SeededRng::new(seed ^ 0x9e37_79b9_7f4a_7c15);
    let ones = if theta.len() == 1 {
        if rem == 0 {
            return Err(bad("index-one plant needs m ≥ 1"));
        }
        rng.int(0, rem / 2).max(1)
    } else {
        rng.int(0, rem / 2)
    };
    orders.extend(core::iter::repeat_n(1, ones));
    plant_with_blocks(rem - ones, &orders, seed, time_varying)
}
