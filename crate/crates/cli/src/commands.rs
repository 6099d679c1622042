use std::fmt::Write;

use daecan_core::canonical::{canonical_frame, ic_matrix, ic_matrix_rank};
use daecan_core::characteristics::{derive_characteristics, Characteristics};
use daecan_core::expr::{ExprMatrix, Params};
use daecan_core::fixtures::{campbell_moore, plant_regular, semi_explicit, two_by_two_example};
use daecan_core::ivp::{solve_semiexplicit_index1, HomogeneousSolver, SemiExplicit, Trajectory};
use daecan_core::linalg::{
    condition_number, hstack, idempotency_residual, onb_nullspace, projector_from_columns, subspace_gap, SubspaceBasis,
};
use daecan_core::pencil::{derivative_chain, is_regular_pencil, quasi_weierstrass, solve_constant_ivp, wong_chains};
use daecan_core::problem::{parse_problem, Problem};
use daecan_core::reduction::{pre_regularity, reduce_full, reduce_node, CoefficientPair, ReductionChain, Verdict};
use daecan_core::tractability::{admissible_sequence, ProjectorChoice};
use daecan_core::{Error, Matrix, Options, Vector};

use crate::report::{text, word, Report};

#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub opts: Options,
    pub seed: u64,
}

/// What a command produced and the process exit code that goes with it.
pub enum Output {
    Report(Report, u8),
    /// Problem text or CSV, followed by an optional summary for stderr.
    Raw(String, Option<Report>),
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

/// 1 = input, 2 = not regular, 3 = rank drift or numerical trouble.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_)
        | Error::UnboundParameter(_)
        | Error::Dimension(_)
        | Error::InvalidGrid(_)
        | Error::InvalidProfile(_)
        | Error::ZeroRho => 1,
        Error::NotPreRegularAtLevel { .. }
        | Error::NotRegular
        | Error::NotRegularTractability(_)
        | Error::NotRegularInput
        | Error::AdjointNotRegular(_) => 2,
        _ => 3,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

type Outcome = Result<Output, Failure>;

pub struct Input {
    pub source: String,
    pub problem: Problem,
    pub pair: CoefficientPair,
}

pub fn load(path: &str) -> Result<Input, Failure> {
    let content = if path == "-" {
        std::io::read_to_string(std::io::stdin())
    } else {
        std::fs::read_to_string(path)
    }
    .map_err(|e| Failure::usage(format!("{path}: {e}")))?;
    let problem = parse_problem(&content)
        .map_err(|e| Failure::usage(format!("{path}:{}:{}: {}", e.line, e.column, e.message)))?;
    let pair = problem.pair().map_err(|e| Failure::usage(format!("{path}: {e}")))?;
    Ok(Input {
        source: path.to_string(),
        problem,
        pair,
    })
}

fn header(r: &mut Report, command: &str, s: &Settings, input: Option<&Input>) {
    r.push("daecan.version", text(env!("CARGO_PKG_VERSION")));
    r.push("daecan.command", word(command));
    r.push("settings.grid_n", s.opts.grid_n);
    r.push("settings.rank_tol", s.opts.rank_tol);
    r.push("settings.seed", s.seed as usize);
    if let Some(input) = input {
        let p = &input.problem;
        r.push("problem.source", text(&input.source));
        r.push("problem.m", p.m);
        r.push("problem.interval", vec![p.interval.0, p.interval.1]);
        for (name, v) in &p.params {
            r.push(format!("problem.param.{name}"), *v);
        }
        for (tag, entries) in [("E", &p.e), ("F", &p.f)] {
            for x in entries {
                r.push(format!("problem.{tag}[{}][{}]", x.i + 1, x.j + 1), text(&x.text));
            }
        }
        for x in &p.q {
            r.push(format!("problem.q[{}]", x.i + 1), text(&x.text));
        }
    }
}

fn check_time(pair: &CoefficientPair, t: f64) -> Result<(), Failure> {
    let (t0, t1) = pair.interval;
    if (t0..=t1).contains(&t) {
        Ok(())
    } else {
        Err(Failure::usage(format!("--at {t} is outside [{t0}, {t1}]")))
    }
}

fn push_verdict(r: &mut Report, chain: &ReductionChain) -> u8 {
    match &chain.verdict {
        Verdict::Regular { mu } => {
            r.push("verdict.kind", word("Regular"));
            r.push("verdict.mu", *mu);
            0
        }
        Verdict::NotPreRegularAtLevel { level, reason } => {
            r.push("verdict.kind", word("NotPreRegular"));
            r.push("verdict.level", *level);
            r.push("verdict.reason", text(reason));
            2
        }
        Verdict::RankDrift {
            level,
            what,
            expected,
            found,
        } => {
            r.push("verdict.kind", word("RankDrift"));
            r.push("verdict.level", *level);
            r.push("verdict.what", text(*what));
            r.push("verdict.expected_rank", *expected);
            r.push("verdict.drift_nodes", found.iter().map(|w| w.node).collect::<Vec<_>>());
            r.push("verdict.drift_ranks", found.iter().map(|w| w.rank).collect::<Vec<_>>());
            3
        }
    }
}

fn push_characteristics(r: &mut Report, c: &Characteristics) {
    r.push("characteristics.mu", c.mu);
    r.push("characteristics.d", c.d);
    r.push("characteristics.r", c.r_list.clone());
    r.push("characteristics.theta", c.theta_list.clone());
    r.push("characteristics.strangeness.mu_s", c.strangeness.mu_s);
    for (i, row) in c.strangeness.rows.iter().enumerate() {
        r.push(
            format!("characteristics.strangeness.row.{i}"),
            vec![row.r, row.a, row.s, row.d, row.u],
        );
    }
    r.push("characteristics.tractability", c.tractability.clone());
    r.push("characteristics.dissection", c.dissection.clone());
}

/// Pointwise `S_can(t)`, `N_can(t)` (orthonormal) and `Π_can(t)`.
pub struct Subspaces {
    pub mu: usize,
    pub s_can: Matrix,
    pub n_can: Matrix,
    pub pi_can: Matrix,
    pub g: Matrix,
    pub condition: f64,
}

pub fn subspaces_at(pair: &CoefficientPair, opts: &Options, t: f64) -> Result<Subspaces, Error> {
    let tol = opts.rank_tol;
    let node = reduce_node(pair, t, tol, None)?;
    let (Some(mu), Some(c)) = (node.mu(), node.s_can_jet()) else {
        return Err(Error::NotPreRegularAtLevel {
            level: node.steps.len().saturating_sub(1),
            reason: format!("pointwise reduction did not terminate at t = {t}"),
        });
    };
    let s_can = SubspaceBasis::span_of(c.value(), tol).into_columns();
    let g = ic_matrix(pair, opts, t)?;
    let n_can = onb_nullspace(&g, tol).into_columns();
    let pi_can =
        projector_from_columns(&s_can, &n_can, tol).map_err(|cond| Error::ComplementError { node: 0, cond })?;
    let condition = condition_number(&hstack(&s_can, &n_can));
    Ok(Subspaces {
        mu,
        s_can,
        n_can,
        pi_can,
        g,
        condition,
    })
}

fn push_subspaces(r: &mut Report, prefix: &str, t: f64, s: &Subspaces) {
    r.push(format!("{prefix}.t"), t);
    r.push(format!("{prefix}.mu"), s.mu);
    r.push(format!("{prefix}.d"), s.s_can.ncols());
    r.push(format!("{prefix}.s_can"), &s.s_can);
    r.push(format!("{prefix}.n_can"), &s.n_can);
    r.push(format!("{prefix}.pi_can"), &s.pi_can);
    r.push(format!("{prefix}.complement_condition"), s.condition);
    r.push(
        format!("{prefix}.pi_idempotency_residual"),
        idempotency_residual(&s.pi_can),
    );
}

pub fn analyze(input: &Input, s: &Settings, at: &[f64]) -> Outcome {
    for &t in at {
        check_time(&input.pair, t)?;
    }
    let pair = &input.pair;
    let opts = &s.opts;
    let mut r = Report::default();
    header(&mut r, "analyze", s, Some(input));

    match pre_regularity(pair, opts) {
        Ok(pre) => {
            r.push("pre_regularity.ok", word(if pre.ok { "yes" } else { "no" }));
            r.push("pre_regularity.rank_e", pre.r);
            r.push("pre_regularity.theta", pre.theta);
            r.push("pre_regularity.row_rank_failure_nodes", pre.failure_nodes);
        }
        Err(e @ Error::RankDrift { .. }) => r.push("pre_regularity.error", text(e.to_string())),
        Err(e) => return Err(e.into()),
    }
    let chain = reduce_full(pair, opts)?;
    let mut code = push_verdict(&mut r, &chain);

    r.push("reduction.levels", chain.levels.len());
    for (j, level) in chain.levels.iter().enumerate() {
        r.push(format!("reduction.level.{j}.m"), level.m);
        r.push(format!("reduction.level.{j}.r"), level.r);
        r.push(format!("reduction.level.{j}.theta"), level.theta);
        r.push(format!("reduction.level.{j}.min_sigma"), level.min_sigma);
    }
    if let Some(sigma) = chain.terminal_min_sigma {
        r.push("reduction.terminal_min_sigma", sigma);
    }

    let nodes = chain.nodes();
    r.push("nodes.t", chain.times());
    let depth = nodes.iter().map(|n| n.steps.len()).min().unwrap_or(0);
    for j in 0..depth {
        r.push(
            format!("nodes.level.{j}.rank_e"),
            nodes.iter().map(|n| n.steps[j].r).collect::<Vec<_>>(),
        );
        r.push(
            format!("nodes.level.{j}.row_rank"),
            nodes.iter().map(|n| n.steps[j].row_rank).collect::<Vec<_>>(),
        );
        r.push(
            format!("nodes.level.{j}.min_sigma"),
            nodes.iter().map(|n| n.steps[j].min_sigma).collect::<Vec<_>>(),
        );
    }

    if chain.is_regular() {
        let ch = derive_characteristics(pair.m(), &chain)?;
        push_characteristics(&mut r, &ch);

        match canonical_frame(pair, &chain, opts) {
            Ok(frame) => {
                r.push("canonical.d", frame.d);
                r.push("canonical.adjoint_mu", frame.adjoint.mu.unwrap_or(0));
                let max_cond = frame.condition_log.iter().copied().fold(0.0, f64::max);
                r.push("canonical.max_complement_condition", max_cond);
                let idem = frame
                    .pi_can
                    .values()
                    .iter()
                    .map(idempotency_residual)
                    .fold(0.0, f64::max);
                r.push("canonical.max_pi_idempotency_residual", idem);
                r.push("nodes.complement_condition", frame.condition_log.clone());

                match admissible_sequence(pair, opts, &ProjectorChoice::WidelyOrthogonal) {
                    Ok(seq) => {
                        r.push("tractability.mu", seq.mu_t);
                        r.push("tractability.r", seq.r_t.clone());
                        let agrees = seq.mu_t == ch.mu && seq.r_t == ch.tractability;
                        r.push(
                            "tractability.agrees_with_reduction",
                            word(if agrees { "yes" } else { "no" }),
                        );
                        r.push(
                            "tractability.max_admissibility_residual",
                            seq.max_admissibility_residual,
                        );
                        r.push("tractability.max_idempotency_residual", seq.max_idempotency_residual);
                        let gap = seq
                            .n_can
                            .values()
                            .iter()
                            .zip(frame.c_ncan.values())
                            .map(|(a, b)| {
                                subspace_gap(
                                    &SubspaceBasis::from_orthonormal(a.clone()),
                                    &SubspaceBasis::from_orthonormal(b.clone()),
                                )
                            })
                            .fold(0.0, f64::max);
                        r.push("tractability.max_n_can_gap", gap);
                        if !agrees {
                            code = code.max(3);
                        }
                    }
                    Err(e) => {
                        r.push("tractability.error", text(e.to_string()));
                        code = code.max(3);
                    }
                }
            }
            Err(e) => {
                r.push("canonical.error", text(e.to_string()));
                code = code.max(exit_code(&e).max(3));
            }
        }

        if pair.is_constant() {
            let (e, f) = pair.eval(pair.interval.0)?;
            match quasi_weierstrass(&e, &f, opts.rank_tol) {
                Ok(form) => {
                    r.push("pencil.d", form.d);
                    r.push("pencil.mu", form.mu);
                    let agrees = form.d == ch.d && form.mu == ch.mu;
                    r.push("pencil.agrees_with_reduction", word(if agrees { "yes" } else { "no" }));
                }
                Err(e) => r.push("pencil.error", text(e.to_string())),
            }
        }

        for (k, &t) in at.iter().enumerate() {
            match subspaces_at(pair, opts, t) {
                Ok(sub) => push_subspaces(&mut r, &format!("at.{k}"), t, &sub),
                Err(e) => {
                    r.push(format!("at.{k}.t"), t);
                    r.push(format!("at.{k}.error"), text(e.to_string()));
                    code = code.max(3);
                }
            }
        }
    }
    Ok(Output::Report(r, code))
}

/// Runs the chain verdict and stops with its report when it is not regular.
fn require_regular(r: &mut Report, pair: &CoefficientPair, opts: &Options) -> Result<Option<u8>, Failure> {
    let chain = reduce_full(pair, opts)?;
    let code = push_verdict(r, &chain);
    Ok((code != 0).then_some(code))
}

pub fn subspaces(input: &Input, s: &Settings, t: f64) -> Outcome {
    check_time(&input.pair, t)?;
    let mut r = Report::default();
    header(&mut r, "subspaces", s, Some(input));
    if let Some(code) = require_regular(&mut r, &input.pair, &s.opts)? {
        return Ok(Output::Report(r, code));
    }
    let sub = subspaces_at(&input.pair, &s.opts, t)?;
    push_subspaces(&mut r, "at", t, &sub);
    Ok(Output::Report(r, 0))
}

pub fn ic_matrix_cmd(input: &Input, s: &Settings, t: f64) -> Outcome {
    check_time(&input.pair, t)?;
    let mut r = Report::default();
    header(&mut r, "ic-matrix", s, Some(input));
    if let Some(code) = require_regular(&mut r, &input.pair, &s.opts)? {
        return Ok(Output::Report(r, code));
    }
    let sub = subspaces_at(&input.pair, &s.opts, t)?;
    r.push("ic.t", t);
    r.push("ic.g", &sub.g);
    r.push("ic.rank", ic_matrix_rank(&sub.g, s.opts.rank_tol));
    r.push("ic.nullspace", &sub.n_can);
    // G·C must be nonsingular for the condition to fix x(t) ∈ S_can(t).
    r.push("ic.condition_g_s_can", condition_number(&(&sub.g * &sub.s_can)));
    Ok(Output::Report(r, 0))
}

/// Exact block orders from `θ_j` = number of blocks of order ≥ j + 2.
fn block_orders(theta: &[usize], nilpotent_dim: usize) -> Vec<usize> {
    let mut orders = Vec::new();
    for j in (0..theta.len()).rev() {
        let exact = theta[j] - theta.get(j + 1).copied().unwrap_or(0);
        orders.extend(std::iter::repeat_n(j + 2, exact));
    }
    let used: usize = orders.iter().sum();
    orders.extend(std::iter::repeat_n(1, nilpotent_dim.saturating_sub(used)));
    orders
}

pub fn pencil(input: &Input, s: &Settings, at: Option<f64>) -> Outcome {
    let pair = &input.pair;
    let t = at.unwrap_or(pair.interval.0);
    check_time(pair, t)?;
    let tol = s.opts.rank_tol;
    let mut r = Report::default();
    header(&mut r, "pencil", s, Some(input));
    let (e, f) = pair.eval(t)?;
    r.push("pencil.frozen_at", t);
    r.push(
        "pencil.time_varying",
        word(if pair.is_constant() { "no" } else { "yes" }),
    );
    r.push("pencil.e", &e);
    r.push("pencil.f", &f);
    let regular = is_regular_pencil(&e, &f, tol);
    r.push("pencil.regular", word(if regular { "yes" } else { "no" }));
    let wong = |r: &mut Report| {
        let chains = wong_chains(&e, &f, tol);
        r.push(
            "wong.v_dims",
            chains.v.iter().map(SubspaceBasis::dim).collect::<Vec<_>>(),
        );
        r.push(
            "wong.w_dims",
            chains.w.iter().map(SubspaceBasis::dim).collect::<Vec<_>>(),
        );
    };
    if !regular {
        wong(&mut r);
        return Ok(Output::Report(r, 2));
    }
    let form = quasi_weierstrass(&e, &f, tol)?;
    let theta = daecan_core::pencil::block_counts_of(&form.n_block, tol);
    r.push("pencil.d", form.d);
    r.push("pencil.mu", form.mu);
    r.push("pencil.block_counts", theta.clone());
    r.push("pencil.block_orders", block_orders(&theta, pair.m() - form.d));
    r.push("pencil.condition", form.condition);
    r.push("pencil.w_block", &form.w_block);
    r.push("pencil.n_block", &form.n_block);
    r.push("pencil.s", &form.s);
    r.push("pencil.t", &form.t);
    r.push("pencil.s_can", form.s_can.columns());
    r.push("pencil.n_can", form.n_can.columns());
    r.push("pencil.pi_can", form.pi_can.matrix());
    r.push("pencil.pi_idempotency_residual", form.pi_can.idempotency_residual());
    wong(&mut r);
    Ok(Output::Report(r, 0))
}

fn csv(tr: &Trajectory) -> String {
    let m = tr.m();
    let mut s = String::from("t");
    for i in 1..=m {
        let _ = write!(s, ",x{i}");
    }
    s.push_str(",residual\n");
    for (k, (t, x)) in tr.times.iter().zip(&tr.states).enumerate() {
        let _ = write!(s, "{t:e}");
        for v in x.iter() {
            let _ = write!(s, ",{v:e}");
        }
        let _ = writeln!(s, ",{:e}", tr.residuals.get(k).copied().unwrap_or(f64::NAN));
    }
    s
}

/// `E = diag(I_r, 0)` exactly, with `0 < r < m`.
fn semi_explicit_split(pair: &CoefficientPair) -> Option<SemiExplicit> {
    if !pair.e.is_constant() {
        return None;
    }
    let e = pair.e.eval(pair.interval.0, &pair.params).ok()?;
    let m = pair.m();
    let r = (0..m).take_while(|&i| e[(i, i)] == 1.0).count();
    let expected = Matrix::from_fn(m, m, |i, j| if i == j && i < r { 1.0 } else { 0.0 });
    if r == 0 || r == m || e != expected {
        return None;
    }
    let block = |i0: usize, j0: usize, rows: usize, cols: usize| {
        ExprMatrix::from_fn(rows, cols, |i, j| pair.f.get(i0 + i, j0 + j).clone())
    };
    Some(SemiExplicit {
        f11: block(0, 0, r, r),
        f12: block(0, r, r, m - r),
        f21: block(r, 0, m - r, r),
        f22: block(r, r, m - r, m - r),
        params: pair.params.clone(),
    })
}

pub fn solve(input: &Input, s: &Settings, ic: &[f64], from: Option<f64>, to: Option<f64>) -> Outcome {
    let pair = &input.pair;
    let m = pair.m();
    let (t0, t1) = pair.interval;
    let (a, b) = (from.unwrap_or(t0), to.unwrap_or(t1));
    if !(t0 <= a && a < b && b <= t1) {
        return Err(Failure::usage(format!(
            "need {t0} ≤ --from < --to ≤ {t1}, got [{a}, {b}]"
        )));
    }
    if ic.len() != m {
        return Err(Failure::usage(format!(
            "--ic has {} values, the problem has m = {m}",
            ic.len()
        )));
    }
    let x_a = Vector::from_column_slice(ic);
    let n = s.opts.grid_n;
    let tol = s.opts.rank_tol;
    let mut r = Report::default();
    header(&mut r, "solve", s, Some(input));
    r.push("solve.interval", vec![a, b]);
    r.push("solve.nodes", n);

    let q = input.problem.q_matrix();
    let tr = match &q {
        None => {
            let sub = CoefficientPair::new(pair.e.clone(), pair.f.clone(), (a, b), pair.params.clone())?;
            let chain = reduce_full(&sub, &s.opts)?;
            chain.require_regular()?;
            let frame = canonical_frame(&sub, &chain, &s.opts)?;
            r.push("solve.method", word("canonical-flow"));
            HomogeneousSolver::new(&sub, &chain, &frame, a)?.solve(&x_a)?
        }
        Some(q) if pair.is_constant() => {
            let (e, f) = pair.eval(a)?;
            let form = quasi_weierstrass(&e, &f, tol)?;
            r.push("solve.method", word("constant-pencil"));
            // Sup norms of q, q', …, q^(μ−1) on the grid: the data side of the
            // stability bound for the nilpotent part.
            let times = daecan_core::linalg::grid_times(a, b, n);
            let sups = derivative_chain(q, form.mu.max(1))
                .iter()
                .take(form.mu.max(1))
                .map(|dq| {
                    times.iter().try_fold(0.0f64, |acc, &t| {
                        Ok::<_, Error>(acc.max(dq.eval(t, &pair.params)?.amax()))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            r.push("solve.q_derivative_sup", sups);
            let mut tr = solve_constant_ivp(&e, &f, q, &pair.params, &x_a, (a, b), n, tol)?;
            tr.attach_fd_residuals(|t| Ok((e.clone(), f.clone(), q.eval(t, &pair.params)?.column(0).into_owned())))?;
            tr
        }
        Some(q) => {
            let sys = semi_explicit_split(pair).ok_or_else(|| {
                Failure::usage(
                    "inhomogeneous problems need constant coefficients or the semi-explicit form E = diag(I_r, 0)",
                )
            })?;
            r.push("solve.method", word("semi-explicit-index-1"));
            let x1 = x_a.rows(0, sys.r()).into_owned();
            let mut tr = solve_semiexplicit_index1(&sys, Some(q), (a, b), n, &x1)?;
            let params: &Params = &pair.params;
            tr.attach_fd_residuals(|t| {
                let (e, f) = pair.eval(t)?;
                Ok((e, f, q.eval(t, params)?.column(0).into_owned()))
            })?;
            tr
        }
    };
    r.push("solve.d", tr.d);
    r.push("solve.initial_value", tr.states[0].iter().copied().collect::<Vec<_>>());
    r.push("solve.max_residual", tr.max_residual());
    Ok(Output::Raw(csv(&tr), Some(r)))
}

pub fn selftest(s: &Settings) -> Outcome {
    let mut r = Report::default();
    header(&mut r, "selftest", s, None);
    let failed = crate::selftest::run(&mut r, &s.opts, s.seed);
    Ok(Output::Report(r, u8::from(failed > 0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FixtureName {
    CampbellMoore,
    TwoByTwo,
    SemiExplicit,
    Plant,
}

pub struct FixtureArgs {
    pub rho: f64,
    pub r: usize,
    pub k: usize,
    pub m: usize,
    pub profile: Vec<usize>,
    pub time_varying: bool,
}

pub fn export_fixture(name: FixtureName, args: &FixtureArgs, seed: u64) -> Outcome {
    let (title, pair) = match name {
        FixtureName::CampbellMoore => {
            let cm = campbell_moore(args.rho)?;
            (
                format!("linearized Campbell–Moore problem, rho = {}", args.rho),
                cm.fixture.pair,
            )
        }
        FixtureName::TwoByTwo => {
            let fx = two_by_two_example();
            ("not pre-regular at level 1".to_string(), fx.pair)
        }
        FixtureName::SemiExplicit => {
            let (_, fx) = semi_explicit(args.r, args.k, seed);
            (fx.name, fx.pair)
        }
        FixtureName::Plant => {
            let plant = plant_regular(args.m, &args.profile, seed, args.time_varying)?;
            let orders = plant
                .block_orders
                .iter()
                .map(|o| o.to_string())
                .collect::<Vec<_>>()
                .join(",");
            (
                format!("{}; d = {}, block orders {orders}", plant.fixture.name, plant.d),
                plant.fixture.pair,
            )
        }
    };
    Ok(Output::Raw(Problem::from_pair(&pair, None).to_text(Some(&title)), None))
}
