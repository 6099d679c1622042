use daecan_core::canonical::{canonical_frame, ic_matrix, n_can_via_adjoint};
use daecan_core::characteristics::derive_characteristics;
use daecan_core::fixtures::campbell_moore;
use daecan_core::linalg::{onb_nullspace, subspace_gap, SubspaceBasis};
use daecan_core::reduction::reduce_full;
use daecan_core::tractability::{admissible_at, admissible_sequence, ProjectorChoice};
use daecan_core::Options;

#[test]
fn characteristics_and_frame() {
    let cm = campbell_moore(1.0).unwrap();
    let opts = Options::default();
    let chain = reduce_full(&cm.fixture.pair, &opts).unwrap();
    let ch = derive_characteristics(7, &chain).unwrap();
    assert_eq!(Some(&ch), cm.fixture.characteristics());

    let frame = canonical_frame(&cm.fixture.pair, &chain, &opts).unwrap();
    let p = &cm.fixture.pair.params;
    for k in [0, 20, 64, 100, 128] {
        let t = frame.times()[k];
        let scan = SubspaceBasis::span_of(&cm.c_scan.eval(t, p).unwrap(), 1e-12);
        let ncan = SubspaceBasis::span_of(&cm.c_ncan.eval(t, p).unwrap(), 1e-12);
        let got_s = SubspaceBasis::span_of(frame.c_scan.value(k), 1e-12);
        let got_n = SubspaceBasis::span_of(frame.c_ncan.value(k), 1e-12);
        assert!(subspace_gap(&scan, &got_s) < 1e-7, "S_can gap at {t}");
        assert!(subspace_gap(&ncan, &got_n) < 1e-7, "N_can gap at {t}");
    }
}

#[test]
fn sequence_with_complement_rows_reproduces_closed_forms() {
    let cm = campbell_moore(1.0).unwrap();
    let p = &cm.fixture.pair.params;
    for t in [0.0, 0.3, 1.0, 2.0, std::f64::consts::PI] {
        let s = admissible_at(&cm.fixture.pair, t, 1e-9, &cm.projector_choice).unwrap();
        assert_eq!(s.mu, 3);
        assert_eq!(s.r_t, vec![6, 6, 6, 7]);
        let diff = |a: &daecan_core::Matrix, b: &daecan_core::expr::ExprMatrix| (a - b.eval(t, p).unwrap()).norm();
        assert!(diff(&s.g[1], &cm.g1) < 1e-8, "G1 at {t}");
        assert!(diff(&s.q[1], &cm.q1) < 1e-8, "Q1 at {t}");
        assert!(diff(&s.pi[1], &cm.pi1) < 1e-8, "Π1 at {t}");
        assert!(diff(&s.g[2], &cm.g2) < 1e-8, "G2 at {t}");
        assert!(diff(&s.pi[2], &cm.pi2) < 1e-8, "Π2 at {t}: {}", diff(&s.pi[2], &cm.pi2));
    }
}

#[test]
fn three_routes_to_n_can_agree() {
    let cm = campbell_moore(1.0).unwrap();
    let opts = Options::default();
    let seq = admissible_sequence(&cm.fixture.pair, &opts, &ProjectorChoice::WidelyOrthogonal).unwrap();
    assert_eq!(seq.r_t, vec![6, 6, 6, 7]);
    let adj = n_can_via_adjoint(&cm.fixture.pair, &opts).unwrap();
    let p = &cm.fixture.pair.params;
    for k in [0, 32, 64, 96, 128] {
        let t = seq.n_can.time(k);
        let closed = SubspaceBasis::span_of(&cm.c_ncan.eval(t, p).unwrap(), 1e-12);
        let a = SubspaceBasis::from_orthonormal(seq.n_can.value(k).clone());
        let b = SubspaceBasis::from_orthonormal(adj.n_can.value(k).clone());
        assert!(subspace_gap(&a, &closed) < 1e-7);
        assert!(subspace_gap(&b, &closed) < 1e-7);
    }
    let g0 = ic_matrix(&cm.fixture.pair, &opts, 0.0).unwrap();
    let gap = subspace_gap(&onb_nullspace(&g0, 1e-9), &onb_nullspace(&cm.g_ic_at_zero, 1e-9));
    assert!(gap < 1e-8, "{gap}");
}
