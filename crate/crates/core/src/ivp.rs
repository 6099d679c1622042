//! Initial value problems with accurately stated initial conditions.
//!
//! Homogeneous problems are integrated in `ℝ^m` through the flow generator
//! `V = (C' − C E_μ⁻¹F_μ) C⁺`, which carries `S_can(t)` into itself and does
//! not depend on the basis `C` chosen at each time. `V` is evaluated exactly at
//! every Runge–Kutta stage by a pointwise reduction.

use alloc::format;
use alloc::vec::Vec;

use crate::canonical::CanonicalFrame;
use crate::expr::{ExprMatrix, Params};
use crate::linalg::{grid_derivative, grid_times, GridFunction, Matrix, RankRevealing, Vector};
use crate::reduction::{reduce_node, CoefficientPair, NodeOutcome, ReductionChain};
use crate::rng::SeededRng;
use crate::{Error, Result};

/// States on a uniform grid, with optional per-node DAE residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub d: usize,
    pub residuals: Vec<f64>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<Vector>, d: usize) -> Self {
        debug_assert_eq!(times.len(), states.len());
        Self {
            times,
            states,
            d,
            residuals: Vec::new(),
        }
    }

    pub fn m(&self) -> usize {
        self.states.first().map_or(0, |x| x.len())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// `max_k ‖x_k − y_k‖_∞`.
    pub fn max_distance(&self, other: &Self) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }

    pub fn as_grid(&self) -> Result<GridFunction> {
        let values = self
            .states
            .iter()
            .map(|x| Matrix::from_column_slice(x.len(), 1, x.as_slice()))
            .collect();
        GridFunction::new(self.times[0], *self.times.last().unwrap(), values, true)
    }

    /// Residuals `‖E x' + F x − q‖_∞` with `x'` from the fourth-order grid
    /// derivative of the states; `coefficients(t)` returns `(E, F, q)`.
    pub fn attach_fd_residuals<C>(&mut self, mut coefficients: C) -> Result<()>
    where
        C: FnMut(f64) -> Result<(Matrix, Matrix, Vector)>,
    {
        let dx = grid_derivative(&self.as_grid()?)?;
        self.residuals = self
            .times
            .iter()
            .zip(&self.states)
            .zip(dx.values())
            .map(|((&t, x), dx)| {
                let (e, f, q) = coefficients(t)?;
                Ok((e * dx.column(0) + f * x - q).amax())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(())
    }
}

/// `V(t)` such that every homogeneous solution satisfies `x' = V x`.
pub fn flow_generator(pair: &CoefficientPair, t: f64, tol: f64) -> Result<Matrix> {
    Ok(flow_terms(pair, t, tol)?.0)
}

/// `V(t)` and the orthoprojector onto `S_can(t)`.
fn flow_terms(pair: &CoefficientPair, t: f64, tol: f64) -> Result<(Matrix, Matrix)> {
    let node = reduce_node(pair, t, tol, None)?;
    let m = pair.m();
    let (c, (e_mu, f_mu)) = match (node.s_can_jet(), node.terminal_pair()) {
        (Some(c), Some(tp)) => (c, tp),
        _ => {
            let level = match node.outcome {
                NodeOutcome::RowRankDeficient { level } | NodeOutcome::Exhausted { level } => level,
                NodeOutcome::Terminated { levels } => levels,
            };
            return Err(Error::NotPreRegularAtLevel {
                level,
                reason: format!("pointwise reduction failed at t = {t}"),
            });
        }
    };
    let d = c.ncols();
    if d == 0 {
        return Ok((Matrix::zeros(m, m), Matrix::zeros(m, m)));
    }
    let a = e_mu
        .value()
        .clone()
        .lu()
        .solve(f_mu.value())
        .ok_or(Error::NonfiniteResult)?;
    let c0 = c.value();
    let dc = c.derivative().value().clone();
    let c_pinv = RankRevealing::new(c0, tol).pinv().clone();
    Ok(((dc - c0 * a) * &c_pinv, c0 * c_pinv))
}

/// Fundamental matrix `Φ(t_k)` of `x' = V(t)x`, `Φ(a) = I`, by classic RK4 on
/// the uniform grid of `n` nodes on `[a, t1]`. Each step is followed by the
/// orthogonal projection onto `S_can(t_{k+1})`, so states started in
/// `S_can(a)` stay in the flow subspace up to rounding.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub times: Vec<f64>,
    pub phi: Vec<Matrix>,
    /// `V(t_k)` at the nodes.
    pub generator: Vec<Matrix>,
}

impl Propagator {
    pub fn new(pair: &CoefficientPair, (a, t1): (f64, f64), n: usize, tol: f64) -> Result<Self> {
        if n < 2 || !(t1 > a) {
            return Err(Error::InvalidGrid(format!(
                "need n ≥ 2 and t1 > a, got n = {n} on [{a}, {t1}]"
            )));
        }
        let m = pair.m();
        let times = grid_times(a, t1, n);
        let mut phi = Vec::with_capacity(n);
        let mut generator = Vec::with_capacity(n);
        let mut x = Matrix::identity(m, m);
        let mut v0 = flow_generator(pair, a, tol)?;
        phi.push(x.clone());
        generator.push(v0.clone());
        for k in 1..n {
            let (t, h) = (times[k - 1], times[k] - times[k - 1]);
            let vh = flow_generator(pair, t + h / 2.0, tol)?;
            let (v1, proj) = flow_terms(pair, times[k], tol)?;
            let k1 = &v0 * &x;
            let k2 = &vh * (&x + &k1 * (h / 2.0));
            let k3 = &vh * (&x + &k2 * (h / 2.0));
            let k4 = &v1 * (&x + &k3 * h);
            x += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
            x = proj * x;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonfiniteResult);
            }
            phi.push(x.clone());
            generator.push(v1.clone());
            v0 = v1;
        }
        Ok(Self { times, phi, generator })
    }

    /// Trajectory through a consistent `x(a)`, with residuals
    /// `‖E V x + F x‖_∞` at the nodes.
    pub fn apply(&self, pair: &CoefficientPair, x_a: &Vector, d: usize) -> Result<Trajectory> {
        let states: Vec<Vector> = self.phi.iter().map(|p| p * x_a).collect();
        let residuals = self
            .times
            .iter()
            .zip(&states)
            .zip(&self.generator)
            .map(|((&t, x), v)| {
                let (e, f) = pair.eval(t)?;
                Ok((e * (v * x) + f * x).amax())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut tr = Trajectory::new(self.times.clone(), states, d);
        tr.residuals = residuals;
        Ok(tr)
    }
}

/// Homogeneous IVPs `E x' + F x = 0`, `x(a) − x_a ∈ N_can(a)`, from one grid
/// node `a`, sharing a single fundamental matrix.
#[derive(Debug, Clone)]
pub struct HomogeneousSolver {
    pub node: usize,
    pub d: usize,
    pub c_a: Matrix,
    pub g_a: Matrix,
    pub pi_a: Matrix,
    pub propagator: Propagator,
    pair: CoefficientPair,
}

impl HomogeneousSolver {
    pub fn new(pair: &CoefficientPair, chain: &ReductionChain, frame: &CanonicalFrame, a: f64) -> Result<Self> {
        Self::with_steps(pair, chain, frame, a, None)
    }

    /// As [`Self::new`], integrating with `n` RK4 nodes on `[a, t1]` instead of
    /// the remaining analysis grid.
    pub fn with_steps(
        pair: &CoefficientPair,
        chain: &ReductionChain,
        frame: &CanonicalFrame,
        a: f64,
        n: Option<usize>,
    ) -> Result<Self> {
        chain.require_regular()?;
        let node = frame.node_of(a)?;
        let total = frame.c_scan.n_points();
        let t1 = pair.interval.1;
        let n = n.unwrap_or(total - node);
        let propagator = if frame.d == 0 || node + 1 == total {
            let m = pair.m();
            let times = if node + 1 == total {
                alloc::vec![a]
            } else {
                grid_times(a, t1, n)
            };
            let len = times.len();
            Propagator {
                times,
                phi: (0..len).map(|_| Matrix::identity(m, m)).collect(),
                generator: (0..len).map(|_| Matrix::zeros(m, m)).collect(),
            }
        } else {
            Propagator::new(pair, (a, t1), n, chain.tol)?
        };
        Ok(Self {
            node,
            d: frame.d,
            c_a: frame.c_scan.value(node).clone(),
            g_a: frame.g.value(node).clone(),
            pi_a: frame.pi_can.value(node).clone(),
            propagator,
            pair: pair.clone(),
        })
    }

    /// `x(a) ∈ S_can(a)` with `G (x(a) − x_a) = 0` for a `d × m` condition matrix.
    pub fn initial_value_with(&self, g: &Matrix, x_a: &Vector) -> Result<Vector> {
        if self.d == 0 {
            return Ok(Vector::zeros(x_a.len()));
        }
        let gc = g * &self.c_a;
        let xi = gc.lu().solve(&(g * x_a)).ok_or(Error::ComplementError {
            node: self.node,
            cond: f64::INFINITY,
        })?;
        Ok(&self.c_a * xi)
    }

    pub fn solve(&self, x_a: &Vector) -> Result<Trajectory> {
        self.solve_with_condition(&self.g_a, x_a)
    }

    /// Solves with an arbitrary condition matrix in place of `G_a`.
    pub fn solve_with_condition(&self, g: &Matrix, x_a: &Vector) -> Result<Trajectory> {
        let m = self.pair.m();
        if x_a.len() != m {
            return Err(Error::Dimension(format!("x_a has length {}, expected {m}", x_a.len())));
        }
        let x0 = self.initial_value_with(g, x_a)?;
        self.propagator.apply(&self.pair, &x0, self.d)
    }

    /// `X(t_k, a) = Φ(t_k)Π_can(a)`.
    pub fn maximal_fundamental(&self) -> Vec<Matrix> {
        self.propagator.phi.iter().map(|p| p * &self.pi_a).collect()
    }
}

pub fn solve_homogeneous(
    pair: &CoefficientPair,
    chain: &ReductionChain,
    frame: &CanonicalFrame,
    a: f64,
    x_a: &Vector,
) -> Result<Trajectory> {
    HomogeneousSolver::new(pair, chain, frame, a)?.solve(x_a)
}

/// `X(t, a)` on the analysis grid from `a` to the end of the interval.
pub fn maximal_fundamental(
    pair: &CoefficientPair,
    chain: &ReductionChain,
    frame: &CanonicalFrame,
    a: f64,
) -> Result<GridFunction> {
    let solver = HomogeneousSolver::new(pair, chain, frame, a)?;
    let times = &solver.propagator.times;
    GridFunction::new(times[0], *times.last().unwrap(), solver.maximal_fundamental(), true)
}

/// Blocks of `E = diag(I_r, 0)`, `F = [[F₁₁, F₁₂], [F₂₁, F₂₂]]`.
#[derive(Debug, Clone)]
pub struct SemiExplicit {
    pub f11: ExprMatrix,
    pub f12: ExprMatrix,
    pub f21: ExprMatrix,
    pub f22: ExprMatrix,
    pub params: Params,
}

impl SemiExplicit {
    pub fn r(&self) -> usize {
        self.f11.nrows()
    }

    pub fn m(&self) -> usize {
        self.f11.nrows() + self.f22.nrows()
    }

    pub fn pair(&self, interval: (f64, f64)) -> Result<CoefficientPair> {
        let (r, k) = (self.r(), self.f22.nrows());
        let mut e = ExprMatrix::zeros(r + k, r + k);
        for i in 0..r {
            e.set(i, i, crate::expr::Expr::one());
        }
        let f = ExprMatrix::blocks(&[&[&self.f11, &self.f12], &[&self.f21, &self.f22]]);
        CoefficientPair::new(e, f, interval, self.params.clone())
    }
}

/// Closed-form solution `x = C(U x₁(a) + f) + [0; F₂₂⁻¹q₂]` of the
/// semi-explicit index-1 system, with `x₁(a) = x_a1` and optional `q`.
pub fn solve_semiexplicit_index1(
    sys: &SemiExplicit,
    q: Option<&ExprMatrix>,
    (a, t1): (f64, f64),
    n: usize,
    x_a1: &Vector,
) -> Result<Trajectory> {
    let (r, m) = (sys.r(), sys.m());
    if x_a1.len() != r {
        return Err(Error::Dimension(format!(
            "x_a1 has length {}, expected {r}",
            x_a1.len()
        )));
    }
    if n < 5 || !(t1 > a) {
        return Err(Error::InvalidGrid(format!("need n ≥ 5 and t1 > a, got n = {n}")));
    }
    let p = &sys.params;
    let k = m - r;
    // Pieces at time t: A = F₁₁ − F₁₂F₂₂⁻¹F₂₁, g = q₁ − F₁₂F₂₂⁻¹q₂, C, and F₂₂⁻¹q₂.
    struct Pieces {
        a: Matrix,
        g: Vector,
        c: Matrix,
        w: Vector,
    }
    let pieces = |t: f64, node: usize| -> Result<Pieces> {
        let f22 = sys.f22.eval(t, p)?;
        let lu = f22.lu();
        let det_ok = RankRevealing::new(&sys.f22.eval(t, p)?, 1e-12).rank() == k;
        if !det_ok {
            return Err(Error::SingularF22(node));
        }
        let f21 = sys.f21.eval(t, p)?;
        let f12 = sys.f12.eval(t, p)?;
        let s21 = lu.solve(&f21).ok_or(Error::SingularF22(node))?;
        let (q1, q2) = match q {
            Some(q) => {
                let qv = q.eval(t, p)?;
                (
                    qv.rows(0, r).column(0).into_owned(),
                    qv.rows(r, k).column(0).into_owned(),
                )
            }
            None => (Vector::zeros(r), Vector::zeros(k)),
        };
        let w = lu.solve(&q2).ok_or(Error::SingularF22(node))?;
        let mut c = Matrix::zeros(m, r);
        c.view_mut((0, 0), (r, r)).copy_from(&Matrix::identity(r, r));
        c.view_mut((r, 0), (k, r)).copy_from(&(-&s21));
        Ok(Pieces {
            a: sys.f11.eval(t, p)? - &f12 * s21,
            g: q1 - f12 * &w,
            c,
            w,
        })
    };
    // U' = −A U on the half-step grid so that Simpson has midpoints.
    let times = grid_times(a, t1, n);
    let fine = grid_times(a, t1, 2 * n - 1);
    let mut us = Vec::with_capacity(fine.len());
    let mut u = Matrix::identity(r, r);
    us.push(u.clone());
    let mut p0 = pieces(fine[0], 0)?;
    let mut fine_pieces = Vec::with_capacity(fine.len());
    for j in 1..fine.len() {
        let h = fine[j] - fine[j - 1];
        let pm = pieces(fine[j - 1] + h / 2.0, j / 2)?;
        let p1 = pieces(fine[j], j / 2)?;
        let k1 = -(&p0.a * &u);
        let k2 = -(&pm.a * (&u + &k1 * (h / 2.0)));
        let k3 = -(&pm.a * (&u + &k2 * (h / 2.0)));
        let k4 = -(&p1.a * (&u + &k3 * h));
        u += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        us.push(u.clone());
        fine_pieces.push(core::mem::replace(&mut p0, p1));
    }
    fine_pieces.push(p0);
    // f(t) = U(t) ∫_a^t U(s)⁻¹ g(s) ds by composite Simpson on [t_k, t_{k+1}].
    let integrand = |j: usize| -> Result<Vector> {
        us[j]
            .clone()
            .lu()
            .solve(&fine_pieces[j].g)
            .ok_or(Error::NonfiniteResult)
    };
    let mut integral = Vector::zeros(r);
    let mut states = Vec::with_capacity(n);
    for (kk, &t) in times.iter().enumerate() {
        let j = 2 * kk;
        if kk > 0 {
            let h = t - times[kk - 1];
            integral += (integrand(j - 2)? + integrand(j - 1)? * 4.0 + integrand(j)?) * (h / 6.0);
        }
        let pc = &fine_pieces[j];
        let z = &us[j] * (x_a1 + &integral);
        let mut x = &pc.c * z;
        let mut rows = x.rows_mut(r, k);
        rows += &pc.w;
        states.push(x);
    }
    if states.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonfiniteResult);
    }
    Ok(Trajectory::new(times, states, r))
}

/// Sensitivity of the solution to perturbations of `γ = G_a x_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationReport {
    /// `(eps, K̂)` pairs.
    pub k_hat: Vec<(f64, f64)>,
    /// `max K̂ / min K̂ − 1` over the eps levels.
    pub relative_spread: f64,
    pub finite: bool,
}

/// Samples `Δγ ∈ im G_a` with `|Δγ| = eps·max(|γ|, 1)` and reports
/// `K̂ = max over samples of max_t |x − x*| / |Δγ|` per eps.
pub fn perturbation_study(
    solver: &HomogeneousSolver,
    x_a: &Vector,
    n_samples: usize,
    eps_levels: &[f64],
    seed: u64,
) -> Result<PerturbationReport> {
    let base = solver.solve(x_a)?;
    let g = &solver.g_a;
    let gamma = g * x_a;
    let scale = gamma.norm().max(1.0);
    let g_pinv = RankRevealing::new(g, 1e-12).pinv().clone();
    let mut rng = SeededRng::new(seed);
    let directions: Vec<Vector> = (0..n_samples).map(|_| rng.unit_vector(solver.d)).collect();
    let mut k_hat = Vec::with_capacity(eps_levels.len());
    for &eps in eps_levels {
        let mut worst: f64 = 0.0;
        for dir in &directions {
            let dgamma = dir * (eps * scale);
            let perturbed = solver.solve(&(x_a + &g_pinv * &dgamma))?;
            worst = worst.max(base.max_distance(&perturbed) / dgamma.norm());
        }
        k_hat.push((eps, worst));
    }
    let (lo, hi) = k_hat
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &(_, k)| (lo.min(k), hi.max(k)));
    Ok(PerturbationReport {
        relative_spread: if lo > 0.0 { hi / lo - 1.0 } else { f64::INFINITY },
        finite: k_hat.iter().all(|(_, k)| k.is_finite()),
        k_hat,
    })
}
