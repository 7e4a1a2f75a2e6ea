use slatkit::conic::{solve, svec_index, ConeBlock, ConeSpec, ConicBackend, ConicProblem, EmbeddedIpm, SolveStatus, SolverSettings};

fn settings() -> SolverSettings {
    SolverSettings::default()
}

fn lp_x_ge_3() -> ConicProblem {
    // min x0 s.t. x0 - x1 = 3, x >= 0
    let mut p = ConicProblem::new(ConeSpec::new(vec![ConeBlock::Nonnegative(2)]).unwrap());
    p.c[0] = 1.0;
    p.add_constraint(vec![(0, 1.0), (1, -1.0)], 3.0).unwrap();
    p
}

#[test]
fn lp_optimum() {
    let sol = solve(&lp_x_ge_3(), &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal_objective - 3.0).abs() < 1e-7, "{}", sol.primal_objective);
    assert!((sol.dual_objective - 3.0).abs() < 1e-7);
}

#[test]
fn soc_norm() {
    // min t s.t. (t, u, v) in SOC, u = 3, v = 4
    let mut p = ConicProblem::new(ConeSpec::new(vec![ConeBlock::SecondOrder(3)]).unwrap());
    p.c[0] = 1.0;
    p.add_constraint(vec![(1, 1.0)], 3.0).unwrap();
    p.add_constraint(vec![(2, 1.0)], 4.0).unwrap();
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal_objective - 5.0).abs() < 1e-7, "{}", sol.primal_objective);
}

fn sdp_trace() -> ConicProblem {
    // min tr X s.t. X11 = X22 = 1, X PSD 3x3, X33 free in PSD
    let n = 3;
    let mut p = ConicProblem::new(ConeSpec::new(vec![ConeBlock::SemidefiniteReal(n)]).unwrap());
    for i in 0..n {
        p.c[svec_index(n, i, i)] = 1.0;
    }
    p.add_constraint(vec![(svec_index(n, 0, 0), 1.0)], 1.0).unwrap();
    p.add_constraint(vec![(svec_index(n, 1, 1), 1.0)], 1.0).unwrap();
    p
}

#[test]
fn sdp_trace_optimum() {
    let sol = solve(&sdp_trace(), &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal_objective - 2.0).abs() < 1e-7, "{}", sol.primal_objective);
    let comp: f64 = sol.x.iter().zip(&sol.s).map(|(a, b)| a * b).sum();
    assert!(comp.abs() <= 1e-6);
}

#[test]
fn deterministic() {
    let a = solve(&sdp_trace(), &settings()).unwrap();
    let b = solve(&sdp_trace(), &settings()).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.y, b.y);
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn weak_duality_along_iterates() {
    for p in [lp_x_ge_3(), sdp_trace()] {
        let sol = solve(&p, &settings()).unwrap();
        for it in &sol.history {
            let diff = it.primal_objective - it.dual_objective;
            assert!(diff >= -it.residual_slack - 1e-10, "{diff} {}", it.residual_slack);
            // identity: pcost - dcost = gap + r_dᵀx − r_pᵀy, bounded by gap ± slack
            assert!((diff - it.gap).abs() <= it.residual_slack + 1e-9 * (1.0 + diff.abs()));
        }
    }
}

#[test]
fn dependent_rows_are_dropped() {
    let mut p = sdp_trace();
    let (i0, i1) = (svec_index(3, 0, 0), svec_index(3, 1, 1));
    p.add_constraint(vec![(i0, 2.0), (i1, 2.0)], 4.0).unwrap();
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal_objective - 2.0).abs() < 1e-7);
    assert_eq!(sol.y.len(), 3);
}

#[test]
fn inconsistent_rows_are_infeasible() {
    let mut p = sdp_trace();
    let (i0, i1) = (svec_index(3, 0, 0), svec_index(3, 1, 1));
    p.add_constraint(vec![(i0, 1.0), (i1, 1.0)], 5.0).unwrap();
    assert_eq!(solve(&p, &settings()).unwrap().status, SolveStatus::Infeasible);
}

#[test]
fn detects_infeasible() {
    // x0 + x1 = -1 with x >= 0
    let mut p = ConicProblem::new(ConeSpec::new(vec![ConeBlock::Nonnegative(2)]).unwrap());
    p.c = vec![1.0, 1.0];
    p.add_constraint(vec![(0, 1.0), (1, 1.0)], -1.0).unwrap();
    assert_eq!(solve(&p, &settings()).unwrap().status, SolveStatus::Infeasible);
}

#[test]
fn detects_unbounded() {
    // min -x0 s.t. x0 - x1 = 1, x >= 0
    let mut p = ConicProblem::new(ConeSpec::new(vec![ConeBlock::Nonnegative(2)]).unwrap());
    p.c = vec![-1.0, 0.0];
    p.add_constraint(vec![(0, 1.0), (1, -1.0)], 1.0).unwrap();
    assert_eq!(solve(&p, &settings()).unwrap().status, SolveStatus::Unbounded);
}

#[test]
fn dump_round_trip() {
    let p = sdp_trace();
    let text = slatkit::conic::write_dump(&p);
    let q = slatkit::conic::parse_dump(&text).unwrap();
    assert_eq!(p, q);
}

#[test]
fn two_by_two_trace_matches_sweep() {
    // min tr X, X00 = X11 = 1, X ⪰ 0 (2×2): feasible family X01 = t, |t| ≤ 1, trace constant 2.
    let n = 2;
    let mut p = ConicProblem::new(ConeSpec::new(vec![ConeBlock::SemidefiniteReal(n)]).unwrap());
    p.c[svec_index(n, 0, 0)] = 1.0;
    p.c[svec_index(n, 1, 1)] = 1.0;
    p.add_constraint(vec![(svec_index(n, 0, 0), 1.0)], 1.0).unwrap();
    p.add_constraint(vec![(svec_index(n, 1, 1), 1.0)], 1.0).unwrap();
    let swept = (-100..=100)
        .map(|k| k as f64 / 100.0)
        .filter(|t| 1.0 - t * t >= 0.0)
        .map(|_| 2.0)
        .fold(f64::INFINITY, f64::min);
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal_objective - swept).abs() < 1e-6);
}

#[test]
fn complementary_slackness_on_optimal_solutions() {
    for p in [lp_x_ge_3(), sdp_trace()] {
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let comp: f64 = sol.x.iter().zip(&sol.s).map(|(a, b)| a * b).sum();
        assert!(comp.abs() <= 1e-6, "{comp}");
    }
}

#[test]
fn backend_trait_wraps_embedded_solver() {
    let backend: Box<dyn ConicBackend> = Box::new(EmbeddedIpm);
    let a = backend.solve(&sdp_trace(), &settings()).unwrap();
    let b = solve(&sdp_trace(), &settings()).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(backend.name(), "embedded-ipm");
}

mod embedding {
    use nalgebra::{DMatrix, SymmetricEigen};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use slatkit::conic::hermitian_embed;

    fn sorted_eigs(m: DMatrix<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn identity_maps_to_identity() {
        let h = DMatrix::<Complex64>::identity(3, 3);
        assert_eq!(hermitian_embed(&h).unwrap(), DMatrix::<f64>::identity(6, 6));
    }

    #[test]
    fn pauli_spectrum_doubles() {
        let i = Complex64::new(0.0, 1.0);
        let z = Complex64::new(0.0, 0.0);
        let h = DMatrix::from_row_slice(2, 2, &[z, i, -i, z]);
        let e = sorted_eigs(hermitian_embed(&h).unwrap());
        for (got, want) in e.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let h = DMatrix::from_row_slice(2, 2, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(0.0, 1.0), Complex64::new(1.0, 0.0)]);
        assert!(hermitian_embed(&h).is_err());
    }

    proptest! {
        #[test]
        fn random_psd_stays_psd(n in 1usize..6, entries in proptest::collection::vec(-1.0f64..1.0, 72)) {
            let a = DMatrix::from_fn(n, n, |r, c| Complex64::new(entries[2 * (r * 6 + c)], entries[2 * (r * 6 + c) + 1]));
            let h = &a * a.adjoint();
            let e = sorted_eigs(hermitian_embed(&h).unwrap());
            let scale = 1.0 + h.iter().map(|v| v.norm()).fold(0.0, f64::max);
            prop_assert!(e[0] >= -1e-12 * scale, "{:?}", e);
            // Each eigenvalue of H appears twice.
            for k in 0..n {
                prop_assert!((e[2 * k] - e[2 * k + 1]).abs() <= 1e-9 * scale);
            }
        }
    }
}
