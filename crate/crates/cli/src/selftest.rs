//! Fixture assertions bundled with the binary.

use daecan_core::canonical::{canonical_frame, ic_matrix};
use daecan_core::characteristics::derive_characteristics;
use daecan_core::fixtures::{
    campbell_moore, plant_regular, semi_explicit, two_by_two_example, CampbellMoore, Expected,
};
use daecan_core::ivp::{solve_semiexplicit_index1, HomogeneousSolver};
use daecan_core::linalg::{onb_nullspace, subspace_gap, SubspaceBasis};
use daecan_core::pencil::{jordan_block_counts, quasi_weierstrass};
use daecan_core::problem::{parse_problem, Problem};
use daecan_core::reduction::{reduce_full, Verdict};
use daecan_core::tractability::{admissible_at, admissible_sequence, ProjectorChoice};
use daecan_core::{Matrix, Options, Vector};

use crate::report::{text, word, Report};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn span(m: &Matrix) -> SubspaceBasis {
    SubspaceBasis::span_of(m, 1e-12)
}

fn cm_characteristics(cm: &CampbellMoore, opts: &Options) -> Check {
    let chain = reduce_full(&cm.fixture.pair, opts).map_err(fail)?;
    let ch = derive_characteristics(7, &chain).map_err(fail)?;
    ensure(Some(&ch) == cm.fixture.characteristics(), || format!("got {ch:?}"))?;
    Ok(format!("μ = {}, r = {:?}, θ = {:?}", ch.mu, ch.r_list, ch.theta_list))
}

fn cm_subspaces(cm: &CampbellMoore, opts: &Options) -> Check {
    let pair = &cm.fixture.pair;
    let chain = reduce_full(pair, opts).map_err(fail)?;
    let frame = canonical_frame(pair, &chain, opts).map_err(fail)?;
    let mut worst: f64 = 0.0;
    for (k, t) in frame.times().into_iter().enumerate() {
        let s = cm.c_scan.eval(t, &pair.params).map_err(fail)?;
        let n = cm.c_ncan.eval(t, &pair.params).map_err(fail)?;
        worst = worst
            .max(subspace_gap(&span(&s), &span(frame.c_scan.value(k))))
            .max(subspace_gap(&span(&n), &span(frame.c_ncan.value(k))));
    }
    ensure(worst < 1e-7, || format!("largest gap {worst:e}"))?;
    Ok(format!("largest S_can/N_can gap {worst:.2e}"))
}

fn cm_projectors(cm: &CampbellMoore, opts: &Options) -> Check {
    let p = &cm.fixture.pair.params;
    let mut worst: f64 = 0.0;
    for t in [0.0, 1.0, 2.5] {
        let s = admissible_at(&cm.fixture.pair, t, opts.rank_tol, &cm.projector_choice).map_err(fail)?;
        for (got, want) in [
            (&s.g[1], &cm.g1),
            (&s.q[1], &cm.q1),
            (&s.pi[1], &cm.pi1),
            (&s.g[2], &cm.g2),
            (&s.pi[2], &cm.pi2),
        ] {
            worst = worst.max((got - want.eval(t, p).map_err(fail)?).norm());
        }
    }
    ensure(worst < 1e-8, || format!("largest deviation {worst:e}"))?;
    Ok(format!("G₁, Q₁, Π₁, G₂, Π₂ within {worst:.2e}"))
}

fn cm_n_can_routes(cm: &CampbellMoore, opts: &Options) -> Check {
    let pair = &cm.fixture.pair;
    let seq = admissible_sequence(pair, opts, &ProjectorChoice::WidelyOrthogonal).map_err(fail)?;
    ensure(seq.r_t == [6, 6, 6, 7], || format!("r^T = {:?}", seq.r_t))?;
    let mut worst: f64 = 0.0;
    for k in (0..opts.grid_n).step_by(16) {
        let t = seq.n_can.time(k);
        let closed = span(&cm.c_ncan.eval(t, &pair.params).map_err(fail)?);
        let via_g = onb_nullspace(&ic_matrix(pair, opts, t).map_err(fail)?, opts.rank_tol);
        worst = worst
            .max(subspace_gap(
                &SubspaceBasis::from_orthonormal(seq.n_can.value(k).clone()),
                &closed,
            ))
            .max(subspace_gap(&via_g, &closed));
    }
    let g0 = ic_matrix(pair, opts, 0.0).map_err(fail)?;
    let g0_gap = subspace_gap(&onb_nullspace(&g0, 1e-9), &onb_nullspace(&cm.g_ic_at_zero, 1e-9));
    ensure(worst < 1e-7 && g0_gap < 1e-8, || {
        format!("gaps {worst:e}, G(0) {g0_gap:e}")
    })?;
    Ok(format!(
        "tractability/adjoint/closed form within {worst:.2e}; ker G(0) within {g0_gap:.2e}"
    ))
}

fn two_by_two(opts: &Options) -> Check {
    let fx = two_by_two_example();
    let chain = reduce_full(&fx.pair, opts).map_err(fail)?;
    let Expected::NotPreRegularAtLevel(level) = fx.expected else {
        return Err("fixture expectation changed".into());
    };
    match chain.verdict {
        Verdict::NotPreRegularAtLevel { level: got, .. } if got == level => {
            Ok(format!("not pre-regular at level {got}"))
        }
        other => Err(format!("verdict {other:?}")),
    }
}

fn semi_explicit_check(seed: u64, opts: &Options) -> Check {
    let (sys, fx) = semi_explicit(2, 2, seed);
    let chain = reduce_full(&fx.pair, opts).map_err(fail)?;
    let ch = derive_characteristics(4, &chain).map_err(fail)?;
    ensure(Some(&ch) == fx.characteristics(), || format!("got {ch:?}"))?;
    let x1 = Vector::from_column_slice(&[1.0, -0.5]);
    let closed = solve_semiexplicit_index1(&sys, None, (0.0, 1.0), opts.grid_n, &x1).map_err(fail)?;
    let frame = canonical_frame(&fx.pair, &chain, opts).map_err(fail)?;
    let generic = HomogeneousSolver::new(&fx.pair, &chain, &frame, 0.0)
        .and_then(|s| s.solve(&closed.states[0]))
        .map_err(fail)?;
    let dist = closed.max_distance(&generic);
    ensure(dist < 1e-6, || format!("closed form vs canonical flow {dist:e}"))?;
    Ok(format!("index 1; closed form vs canonical flow {dist:.2e}"))
}

fn plant_check(theta: &[usize], m: usize, seed: u64, time_varying: bool, opts: &Options) -> Check {
    let plant = plant_regular(m, theta, seed, time_varying).map_err(fail)?;
    let pair = &plant.fixture.pair;
    let chain = reduce_full(pair, opts).map_err(fail)?;
    let ch = derive_characteristics(m, &chain).map_err(fail)?;
    ensure(Some(&ch) == plant.fixture.characteristics(), || {
        format!("got θ = {:?}", ch.theta_list)
    })?;
    let frame = canonical_frame(pair, &chain, opts).map_err(fail)?;
    let mut worst: f64 = 0.0;
    for k in (0..opts.grid_n).step_by(8) {
        let t = frame.c_scan.time(k);
        worst = worst.max((frame.pi_can.value(k) - plant.pi_can(t).map_err(fail)?).norm());
    }
    ensure(worst < 1e-7, || format!("Π_can deviation {worst:e}"))?;
    if !time_varying {
        let (e, f) = pair.eval(0.0).map_err(fail)?;
        let counts = jordan_block_counts(&e, &f, opts.rank_tol).map_err(fail)?;
        ensure(counts == theta[..theta.len() - 1], || {
            format!("pencil block counts {counts:?}")
        })?;
        let form = quasi_weierstrass(&e, &f, opts.rank_tol).map_err(fail)?;
        ensure(form.d == plant.d, || format!("pencil d = {}", form.d))?;
    }
    Ok(format!("θ = {theta:?}, d = {}, Π_can within {worst:.2e}", plant.d))
}

fn round_trip(cm: &CampbellMoore) -> Check {
    let text = Problem::from_pair(&cm.fixture.pair, None).to_text(None);
    let parsed = parse_problem(&text).map_err(fail)?.pair().map_err(fail)?;
    let mut worst: f64 = 0.0;
    for t in [0.0, 0.7, 3.0] {
        let (e0, f0) = cm.fixture.pair.eval(t).map_err(fail)?;
        let (e1, f1) = parsed.eval(t).map_err(fail)?;
        worst = worst.max((e0 - e1).amax()).max((f0 - f1).amax());
    }
    ensure(worst == 0.0, || format!("coefficients differ by {worst:e}"))?;
    Ok("problem text reproduces the coefficients exactly".into())
}

/// Runs every check into `r`; returns the number of failures.
pub fn run(r: &mut Report, opts: &Options, seed: u64) -> usize {
    let cm = campbell_moore(1.0).expect("rho = 1 is valid");
    let checks: Vec<(&str, Box<dyn Fn() -> Check + '_>)> = vec![
        (
            "campbell_moore.characteristics",
            Box::new(|| cm_characteristics(&cm, opts)),
        ),
        ("campbell_moore.subspaces", Box::new(|| cm_subspaces(&cm, opts))),
        ("campbell_moore.projectors", Box::new(|| cm_projectors(&cm, opts))),
        ("campbell_moore.n_can_routes", Box::new(|| cm_n_can_routes(&cm, opts))),
        ("campbell_moore.round_trip", Box::new(|| round_trip(&cm))),
        ("two_by_two.verdict", Box::new(|| two_by_two(opts))),
        ("semi_explicit.solution", Box::new(|| semi_explicit_check(seed, opts))),
        ("plant.index1", Box::new(|| plant_check(&[0], 4, seed, false, opts))),
        (
            "plant.index3",
            Box::new(|| plant_check(&[2, 1, 0], 8, seed, false, opts)),
        ),
        (
            "plant.time_varying",
            Box::new(|| plant_check(&[1, 0], 5, seed, true, opts)),
        ),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        match check() {
            Ok(detail) => {
                r.push(format!("check.{name}.status"), word("pass"));
                r.push(format!("check.{name}.detail"), text(detail));
            }
            Err(detail) => {
                failed += 1;
                r.push(format!("check.{name}.status"), word("FAIL"));
                r.push(format!("check.{name}.detail"), text(detail));
            }
        }
    }
    r.push("selftest.passed", checks.len() - failed);
    r.push("selftest.failed", failed);
    failed
}
