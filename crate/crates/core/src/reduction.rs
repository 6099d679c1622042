//! The basis reduction procedure for time-varying pairs `{E, F}`.
//!
//! Each grid node is reduced independently on Taylor jets. Bases are aligned
//! to the previous node so the sampled level quantities vary continuously;
//! ranks and intersection dimensions are then compared across the grid.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::RankWitness;
use crate::expr::{ExprMatrix, Params};
use crate::jet::{corange_jet, nullspace_jet, range_jet, MatrixJet};
use crate::linalg::{
    grid_times, hstack, norm2, subspace_intersect, GridFunction, Matrix, RankRevealing, SubspaceBasis,
};
use crate::{Error, Options, Result};

/// Smallest grid accepted by the regularity analysis.
pub const MIN_ANALYSIS_GRID: usize = 33;

/// `E(t)x' + F(t)x = q(t)` coefficients on an interval, with parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPair {
    pub e: ExprMatrix,
    pub f: ExprMatrix,
    pub interval: (f64, f64),
    pub params: Params,
}

impl CoefficientPair {
    pub fn new(e: ExprMatrix, f: ExprMatrix, interval: (f64, f64), params: Params) -> Result<Self> {
        let m = e.nrows();
        if m == 0 || e.ncols() != m || f.nrows() != m || f.ncols() != m {
            return Err(Error::Dimension(format!(
                "E is {}×{}, F is {}×{}; both must be square of equal size",
                e.nrows(),
                e.ncols(),
                f.nrows(),
                f.ncols()
            )));
        }
        let (t0, t1) = interval;
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidGrid(format!("degenerate interval [{t0}, {t1}]")));
        }
        let pair = Self { e, f, interval, params };
        pair.eval(t0)?;
        Ok(pair)
    }

    pub fn m(&self) -> usize {
        self.e.nrows()
    }

    pub fn eval(&self, t: f64) -> Result<(Matrix, Matrix)> {
        Ok((self.e.eval(t, &self.params)?, self.f.eval(t, &self.params)?))
    }

    pub fn jets(&self, t: f64, order: usize) -> Result<(MatrixJet, MatrixJet)> {
        Ok((
            self.e.taylor(t, &self.params, order)?,
            self.f.taylor(t, &self.params, order)?,
        ))
    }

    pub fn is_constant(&self) -> bool {
        self.e.is_constant() && self.f.is_constant()
    }

    pub fn times(&self, n: usize) -> Vec<f64> {
        grid_times(self.interval.0, self.interval.1, n)
    }
}

/// Nodewise witnesses of the level-0 hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct PreRegularityReport {
    pub ok: bool,
    pub r: usize,
    pub theta: usize,
    pub rank_e: Vec<usize>,
    pub rank_ef: Vec<usize>,
    pub theta_nodes: Vec<usize>,
    pub failure_nodes: Vec<usize>,
}

/// One reduction step at a single point.
#[derive(Debug, Clone)]
pub struct Step {
    pub y: MatrixJet,
    pub z: MatrixJet,
    pub c: MatrixJet,
    pub r: usize,
    pub theta: usize,
    /// Rank of `[E_j F_j]`.
    pub row_rank: usize,
    /// Smallest retained singular value of `E_j`.
    pub min_sigma: f64,
    /// `{E_{j+1}, F_{j+1}}`, present when `[E_j F_j]` has full row rank.
    pub next: Option<(MatrixJet, MatrixJet)>,
}

/// Previous-node bases used to keep the current ones continuous.
#[derive(Debug, Clone, Default)]
pub struct StepReference {
    pub y: Option<Matrix>,
    pub z: Option<Matrix>,
    pub c: Option<Matrix>,
}

/// `Y = basis(im E)`, `Z = basis((im E)^⊥)`, `C = basis(ker ZᵀF)`,
/// `E₊ = YᵀEC`, `F₊ = Yᵀ(FC + EC')`.
///
/// `floor` is the scale of the level-0 pair; rank decisions on derived blocks
/// are taken relative to it.
pub fn reduce_once(e: &MatrixJet, f: &MatrixJet, tol: f64, floor: f64, reference: &StepReference) -> Step {
    let m = e.nrows();
    let rr_e = RankRevealing::with_floor(e.value(), tol, floor);
    let r = rr_e.rank();
    let min_sigma = if r == 0 { 0.0 } else { rr_e.singular_values()[r - 1] };
    let row_rank = RankRevealing::with_floor(&hstack(e.value(), f.value()), tol, floor).rank();
    let y = range_jet(e, &rr_e, reference.y.as_ref());
    let z = corange_jet(e, &rr_e, reference.z.as_ref());
    let zf = z.transpose().mul(f);
    let rr_zf = RankRevealing::with_floor(zf.value(), tol, floor);
    let c = nullspace_jet(&zf, &rr_zf, reference.c.as_ref());
    let s = SubspaceBasis::from_orthonormal(c.value().clone());
    let theta = if m == 0 {
        0
    } else {
        subspace_intersect(&rr_e.nullspace(), &s, tol).dim()
    };
    let next = (row_rank == m && c.order() >= 1).then(|| {
        let yt = y.transpose();
        let ec = e.mul(&c);
        let e_next = yt.mul(&ec);
        let f_next = yt.mul(&f.mul(&c).add(&e.truncate(c.order()).mul(&c.derivative())));
        (e_next, f_next)
    });
    Step {
        y,
        z,
        c,
        r,
        theta,
        row_rank,
        min_sigma,
        next,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeOutcome {
    /// `θ_{L−1} = 0` after `L` levels.
    Terminated { levels: usize },
    /// `[E_j F_j]` lost row rank at level `j`.
    RowRankDeficient { level: usize },
    /// Level cap or jet order exhausted.
    Exhausted { level: usize },
}

/// Full pointwise reduction at one time.
#[derive(Debug, Clone)]
pub struct NodeReduction {
    pub t: f64,
    pub scale: f64,
    pub pairs: Vec<(MatrixJet, MatrixJet)>,
    pub steps: Vec<Step>,
    pub outcome: NodeOutcome,
}

impl NodeReduction {
    /// Index at this node, if the reduction terminated.
    pub fn mu(&self) -> Option<usize> {
        match self.outcome {
            NodeOutcome::Terminated { levels } => {
                let m = self.pairs[0].0.nrows();
                Some(if levels == 1 && self.steps[0].r == m { 0 } else { levels })
            }
            _ => None,
        }
    }

    /// `C₀C₁⋯C_{L−1}` as a jet (the identity for index zero).
    pub fn s_can_jet(&self) -> Option<MatrixJet> {
        let NodeOutcome::Terminated { levels } = self.outcome else {
            return None;
        };
        let mut acc = self.steps[0].c.clone();
        for step in &self.steps[1..levels] {
            acc = acc.mul(&step.c);
        }
        Some(acc)
    }

    /// `{E_μ, F_μ}`.
    pub fn terminal_pair(&self) -> Option<&(MatrixJet, MatrixJet)> {
        match self.outcome {
            NodeOutcome::Terminated { levels } => self.steps[levels - 1].next.as_ref(),
            _ => None,
        }
    }

    fn reference(&self, level: usize) -> StepReference {
        self.steps
            .get(level)
            .map_or_else(StepReference::default, |s| StepReference {
                y: Some(s.y.value().clone()),
                z: Some(s.z.value().clone()),
                c: Some(s.c.value().clone()),
            })
    }
}

/// Reduces the pair at `t`, aligning bases to `previous` when given.
pub fn reduce_node(
    pair: &CoefficientPair,
    t: f64,
    tol: f64,
    previous: Option<&NodeReduction>,
) -> Result<NodeReduction> {
    let m = pair.m();
    let (e0, f0) = pair.eval(t)?;
    let scale = norm2(&hstack(&e0, &f0));
    let r0 = RankRevealing::with_floor(&e0, tol, scale).rank();
    // Each level consumes one Taylor order and the index is at most r0 + 1.
    let order = (r0 + 3).min(m + 2);
    let (e, f) = pair.jets(t, order)?;
    reduce_jets(e, f, t, tol, scale, m + 1, previous)
}

/// Pointwise reduction of a pair given directly by its jets.
pub fn reduce_jets(
    e: MatrixJet,
    f: MatrixJet,
    t: f64,
    tol: f64,
    scale: f64,
    level_cap: usize,
    previous: Option<&NodeReduction>,
) -> Result<NodeReduction> {
    let mut pairs = Vec::new();
    let mut steps: Vec<Step> = Vec::new();
    let (mut e, mut f) = (e, f);
    let outcome = loop {
        let level = steps.len();
        if level >= level_cap {
            pairs.push((e, f));
            break NodeOutcome::Exhausted { level };
        }
        let reference = previous.map_or_else(StepReference::default, |p| p.reference(level));
        let step = reduce_once(&e, &f, tol, scale, &reference);
        pairs.push((e, f));
        let m_j = pairs[level].0.nrows();
        let full_row = step.row_rank == m_j;
        let theta = step.theta;
        let next = step.next.clone();
        steps.push(step);
        if !full_row {
            break NodeOutcome::RowRankDeficient { level };
        }
        if theta == 0 {
            if next.is_none() {
                break NodeOutcome::Exhausted { level };
            }
            break NodeOutcome::Terminated { levels: level + 1 };
        }
        match next {
            Some((en, fn_)) if en.order() >= 1 => {
                e = en;
                f = fn_;
            }
            Some((en, fn_)) => {
                pairs.push((en, fn_));
                break NodeOutcome::Exhausted { level: level + 1 };
            }
            None => break NodeOutcome::Exhausted { level },
        }
    };
    Ok(NodeReduction {
        t,
        scale,
        pairs,
        steps,
        outcome,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Regular {
        mu: usize,
    },
    NotPreRegularAtLevel {
        level: usize,
        reason: String,
    },
    RankDrift {
        level: usize,
        what: &'static str,
        expected: usize,
        found: Vec<RankWitness>,
    },
}

/// Level `j` of the chain sampled on the grid.
#[derive(Debug, Clone)]
pub struct Level {
    pub m: usize,
    pub r: usize,
    pub theta: usize,
    pub e: GridFunction,
    pub f: GridFunction,
    pub y: GridFunction,
    pub z: GridFunction,
    /// `C_j`; absent when its dimension varies over the grid (a level that
    /// failed pre-regularity).
    pub c: Option<GridFunction>,
    /// Smallest retained singular value of `E_j` over the grid.
    pub min_sigma: f64,
}

#[derive(Debug, Clone)]
pub struct ReductionChain {
    pub m: usize,
    pub levels: Vec<Level>,
    pub mu: Option<usize>,
    pub verdict: Verdict,
    pub tol: f64,
    /// Terminal pair `{E_μ, F_μ}` on the grid, for regular chains.
    pub terminal: Option<(GridFunction, GridFunction)>,
    /// Smallest singular value of `E_μ` over the grid.
    pub terminal_min_sigma: Option<f64>,
    nodes: Vec<NodeReduction>,
}

impl ReductionChain {
    pub fn r_list(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.r).collect()
    }

    pub fn theta_list(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.theta).collect()
    }

    pub fn is_regular(&self) -> bool {
        matches!(self.verdict, Verdict::Regular { .. })
    }

    /// `d = dim S_can`.
    pub fn d(&self) -> Option<usize> {
        let mu = self.mu?;
        Some(if mu == 0 { self.m } else { self.levels[mu - 1].r })
    }

    pub fn nodes(&self) -> &[NodeReduction] {
        &self.nodes
    }

    pub fn times(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.t).collect()
    }

    /// Converts a non-regular verdict into the matching error.
    pub fn require_regular(&self) -> Result<usize> {
        match &self.verdict {
            Verdict::Regular { mu } => Ok(*mu),
            Verdict::NotPreRegularAtLevel { level, reason } => Err(Error::NotPreRegularAtLevel {
                level: *level,
                reason: reason.clone(),
            }),
            Verdict::RankDrift {
                level,
                what,
                expected,
                found,
            } => Err(Error::RankDrift {
                level: *level,
                what,
                expected: *expected,
                found: found.clone(),
            }),
        }
    }
}

fn check_grid(n: usize) -> Result<()> {
    if n < MIN_ANALYSIS_GRID {
        return Err(Error::InvalidGrid(format!(
            "regularity analysis needs at least {MIN_ANALYSIS_GRID} nodes, got {n}"
        )));
    }
    Ok(())
}

fn drift(values: &[usize], level: usize, what: &'static str) -> Option<Verdict> {
    let expected = majority(values);
    let found: Vec<RankWitness> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != expected)
        .map(|(node, &rank)| RankWitness { node, rank })
        .collect();
    (!found.is_empty()).then_some(Verdict::RankDrift {
        level,
        what,
        expected,
        found,
    })
}

fn majority(values: &[usize]) -> usize {
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for &v in values {
        match counts.iter_mut().find(|(x, _)| *x == v) {
            Some((_, c)) => *c += 1,
            None => counts.push((v, 1)),
        }
    }
    counts
        .iter()
        .max_by_key(|(v, c)| (*c, usize::MAX - *v))
        .map_or(0, |(v, _)| *v)
}

/// Level-0 pre-regularity: constant `rank E`, full row rank `[E F]`,
/// constant `dim(ker E ∩ S)`.
pub fn pre_regularity(pair: &CoefficientPair, opts: &Options) -> Result<PreRegularityReport> {
    check_grid(opts.grid_n)?;
    let tol = opts.rank_tol;
    let m = pair.m();
    let mut report = PreRegularityReport {
        ok: true,
        r: 0,
        theta: 0,
        rank_e: Vec::new(),
        rank_ef: Vec::new(),
        theta_nodes: Vec::new(),
        failure_nodes: Vec::new(),
    };
    for (k, t) in pair.times(opts.grid_n).into_iter().enumerate() {
        let (e, f) = pair.jets(t, 1)?;
        let scale = norm2(&hstack(e.value(), f.value()));
        let step = reduce_once(&e, &f, tol, scale, &StepReference::default());
        report.rank_e.push(step.r);
        report.rank_ef.push(step.row_rank);
        report.theta_nodes.push(step.theta);
        if step.row_rank < m {
            report.failure_nodes.push(k);
        }
    }
    if let Some(Verdict::RankDrift {
        level,
        what,
        expected,
        found,
    }) = drift(&report.rank_e, 0, "E").or_else(|| drift(&report.theta_nodes, 0, "dim(ker E ∩ S)"))
    {
        return Err(Error::RankDrift {
            level,
            what,
            expected,
            found,
        });
    }
    report.r = report.rank_e[0];
    report.theta = report.theta_nodes[0];
    report.ok = report.failure_nodes.is_empty();
    Ok(report)
}

/// Runs the reduction to its verdict on the uniform grid of `opts.grid_n`
/// nodes.
pub fn reduce_full(pair: &CoefficientPair, opts: &Options) -> Result<ReductionChain> {
    check_grid(opts.grid_n)?;
    let tol = opts.rank_tol;
    let mut nodes: Vec<NodeReduction> = Vec::with_capacity(opts.grid_n);
    for t in pair.times(opts.grid_n) {
        let node = reduce_node(pair, t, tol, nodes.last())?;
        nodes.push(node);
    }
    Ok(assemble_chain(pair, nodes, tol))
}

fn assemble_chain(pair: &CoefficientPair, nodes: Vec<NodeReduction>, tol: f64) -> ReductionChain {
    let m = pair.m();
    let (t0, t1) = pair.interval;
    let mut levels = Vec::new();
    let mut verdict = None;
    let depth = nodes.iter().map(|n| n.steps.len()).max().unwrap_or(0);
    for j in 0..depth {
        let present: Vec<&NodeReduction> = nodes.iter().filter(|n| n.steps.len() > j).collect();
        if present.len() < nodes.len() {
            // Some nodes terminated earlier: their θ at the previous level was 0.
            let thetas: Vec<usize> = nodes
                .iter()
                .map(|n| n.steps.get(j - 1).map_or(0, |s| s.theta))
                .collect();
            verdict = drift(&thetas, j - 1, "dim(ker E ∩ S)");
            break;
        }
        let m_j = nodes[0].pairs[j].0.nrows();
        let ranks: Vec<usize> = nodes.iter().map(|n| n.steps[j].r).collect();
        let rank_drift = drift(&ranks, j, "E");
        let try_grid = |f: &dyn Fn(&NodeReduction) -> Matrix| -> Option<GridFunction> {
            GridFunction::new(t0, t1, nodes.iter().map(f).collect(), true).ok()
        };
        let e = try_grid(&|n| n.pairs[j].0.value().clone()).expect("level dimensions agree");
        let f = try_grid(&|n| n.pairs[j].1.value().clone()).expect("level dimensions agree");
        if rank_drift.is_some() {
            verdict = rank_drift;
            break;
        }
        levels.push(Level {
            m: m_j,
            r: ranks[0],
            theta: majority(&nodes.iter().map(|n| n.steps[j].theta).collect::<Vec<_>>()),
            e,
            f,
            y: try_grid(&|n| n.steps[j].y.value().clone()).expect("constant rank"),
            z: try_grid(&|n| n.steps[j].z.value().clone()).expect("constant rank"),
            c: try_grid(&|n| n.steps[j].c.value().clone()),
            min_sigma: nodes.iter().map(|n| n.steps[j].min_sigma).fold(f64::INFINITY, f64::min),
        });
        let failing: Vec<usize> = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.steps[j].row_rank < m_j)
            .map(|(k, _)| k)
            .collect();
        if !failing.is_empty() {
            verdict = Some(Verdict::NotPreRegularAtLevel {
                level: j,
                reason: format!(
                    "[E_{j} F_{j}] has rank {} < {m_j} at {} of {} nodes (first node {})",
                    nodes[failing[0]].steps[j].row_rank,
                    failing.len(),
                    nodes.len(),
                    failing[0]
                ),
            });
            break;
        }
        if let Some(v) = drift(
            &nodes.iter().map(|n| n.steps[j].theta).collect::<Vec<_>>(),
            j,
            "dim(ker E ∩ S)",
        ) {
            verdict = Some(v);
            break;
        }
        if let Some(NodeOutcome::Exhausted { level }) = nodes
            .iter()
            .map(|n| n.outcome)
            .find(|o| matches!(o, NodeOutcome::Exhausted { level } if *level == j))
        {
            verdict = Some(Verdict::NotPreRegularAtLevel {
                level,
                reason: format!("reduction did not terminate within {} levels", m + 1),
            });
            break;
        }
    }
    let mut chain = ReductionChain {
        m,
        levels,
        mu: None,
        verdict: Verdict::Regular { mu: 0 },
        tol,
        terminal: None,
        terminal_min_sigma: None,
        nodes,
    };
    if let Some(v) = verdict {
        chain.verdict = v;
        return chain;
    }
    let mu = chain.nodes[0].mu().expect("all nodes terminated consistently");
    let terminal_e: Vec<Matrix> = chain
        .nodes
        .iter()
        .map(|n| n.terminal_pair().unwrap().0.value().clone())
        .collect();
    let terminal_f: Vec<Matrix> = chain
        .nodes
        .iter()
        .map(|n| n.terminal_pair().unwrap().1.value().clone())
        .collect();
    let d = chain.levels.last().map_or(m, |l| l.r);
    let mut min_sigma = f64::INFINITY;
    let mut singular = Vec::new();
    for (k, (e_mu, node)) in terminal_e.iter().zip(&chain.nodes).enumerate() {
        let rr = RankRevealing::with_floor(e_mu, tol, node.scale);
        if rr.rank() < d {
            singular.push(RankWitness {
                node: k,
                rank: rr.rank(),
            });
        }
        if d > 0 {
            min_sigma = min_sigma.min(rr.singular_values()[d - 1]);
        }
    }
    if !singular.is_empty() {
        chain.verdict = Verdict::RankDrift {
            level: chain.levels.len(),
            what: "E_mu",
            expected: d,
            found: singular,
        };
        return chain;
    }
    chain.terminal = Some((
        GridFunction::new(t0, t1, terminal_e, true).expect("analysis grid is valid"),
        GridFunction::new(t0, t1, terminal_f, true).expect("analysis grid is valid"),
    ));
    chain.terminal_min_sigma = Some(min_sigma);
    chain.mu = Some(mu);
    chain.verdict = Verdict::Regular { mu };
    chain
}

/// `C = C₀C₁⋯C_{μ−1}` (identity for index zero), an `m × d` basis of `S_can`.
pub fn s_can_basis(chain: &ReductionChain) -> Result<GridFunction> {
    chain.require_regular()?;
    if chain.d() == Some(0) {
        return Err(Error::ZeroFlow);
    }
    let values: Vec<Matrix> = chain
        .nodes
        .iter()
        .map(|n| n.s_can_jet().expect("regular chain").value().clone())
        .collect();
    let (t0, t1) = (chain.levels[0].e.t0(), chain.levels[0].e.t1());
    GridFunction::new(t0, t1, values, true)
}

/// `S^[j] = im(C₀⋯C_j)` with `dim(S^[j] ∩ ker E)`.
#[derive(Debug, Clone)]
pub struct ChainSubspace {
    pub basis: GridFunction,
    pub dim: usize,
    pub kernel_intersection: usize,
}

pub fn subspace_chain(chain: &ReductionChain) -> Result<Vec<ChainSubspace>> {
    chain.require_regular()?;
    let tol = chain.tol;
    let levels = chain.levels.len();
    let (t0, t1) = (chain.levels[0].e.t0(), chain.levels[0].e.t1());
    let mut out = Vec::with_capacity(levels);
    let mut products: Vec<Matrix> = chain.levels[0].c.as_ref().expect("regular chain").values().to_vec();
    for j in 0..levels {
        if j > 0 {
            for (p, c) in products
                .iter_mut()
                .zip(chain.levels[j].c.as_ref().expect("regular chain").values())
            {
                *p = &*p * c;
            }
        }
        let mut dims = Vec::with_capacity(products.len());
        for (k, p) in products.iter().enumerate() {
            let e = chain.levels[0].e.value(k);
            let ker = RankRevealing::with_floor(e, tol, chain.nodes[k].scale).nullspace();
            let s = SubspaceBasis::span_of(p, tol);
            dims.push(subspace_intersect(&s, &ker, tol).dim());
        }
        if let Some(Verdict::RankDrift {
            level,
            what,
            expected,
            found,
        }) = drift(&dims, j, "dim(S^[j] ∩ ker E)")
        {
            return Err(Error::RankDrift {
                level,
                what,
                expected,
                found,
            });
        }
        if dims[0] != chain.levels[j].theta {
            return Err(Error::RankDrift {
                level: j,
                what: "dim(S^[j] ∩ ker E) vs θ_j",
                expected: chain.levels[j].theta,
                found: alloc::vec![RankWitness { node: 0, rank: dims[0] }],
            });
        }
        out.push(ChainSubspace {
            basis: GridFunction::new(t0, t1, products.clone(), true)?,
            dim: products[0].ncols(),
            kernel_intersection: dims[0],
        });
    }
    Ok(out)
}

/// `Ẽ = LEK`, `F̃ = LFK + LEK'`, with `L`, `K` checked nonsingular on the
/// analysis grid.
pub fn apply_equivalence(
    pair: &CoefficientPair,
    l: &ExprMatrix,
    k: &ExprMatrix,
    opts: &Options,
) -> Result<CoefficientPair> {
    let m = pair.m();
    if (l.nrows(), l.ncols(), k.nrows(), k.ncols()) != (m, m, m, m) {
        return Err(Error::Dimension(format!("L and K must be {m}×{m}")));
    }
    for (node, t) in pair.times(opts.grid_n.max(2)).into_iter().enumerate() {
        let lv = l.eval(t, &pair.params)?;
        let kv = k.eval(t, &pair.params)?;
        let tol = opts.rank_tol;
        if RankRevealing::new(&lv, tol).rank() < m || RankRevealing::new(&kv, tol).rank() < m {
            return Err(Error::SingularTransform(node));
        }
    }
    let le = l.mul(&pair.e);
    let e = le.mul(k);
    let f = l.mul(&pair.f).mul(k).add(&le.mul(&k.differentiate()));
    CoefficientPair::new(e, f, pair.interval, pair.params.clone())
}
