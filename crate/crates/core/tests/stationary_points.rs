use htst_cg::chain::{gradient, ChainSystem, Configuration};
use htst_cg::linalg::{count_negative, inf_norm, symmetric_eigen};
use htst_cg::rate::unstable_mode;
use htst_cg::stationary::{
    analytic_unstable_mode, find_minimum, find_saddle_analytic, find_saddle_drag, force_balance_roots,
    symmetric_configuration, AnalyticEigenmode, StationaryKind,
};
use htst_cg::Error;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn minimum_of_strained_chain() {
    let sys = ChainSystem::new(202, 1.02).unwrap();
    let m = find_minimum(&sys, &Configuration::uniform(&sys)).unwrap();
    assert_eq!(m.kind, StationaryKind::Minimum);
    assert!(m.residual < 1e-10);
    let h = m.hessian(&sys).unwrap();
    let spec = symmetric_eigen(&h);
    assert!(spec.values[0] > 0.0, "minimum Hessian not positive definite");
    let q = sys.full_positions(&m.positions(&sys));
    let c = sys.center_left;
    // the LJ bond sits just past its own rest length of 1
    let central = q[c + 1] - q[c];
    assert!(central > 1.0 && central < 1.001, "LJ bond {central}");
    for b in (0..201).filter(|&b| b != c) {
        let r = q[b + 1] - q[b];
        assert!((r - 1.02).abs() < 1e-3, "spring bond {b} = {r}");
    }
}

#[test]
fn saddles_agree_and_are_symmetric() {
    for s in [1.02, 1.035] {
        let sys = ChainSystem::new(202, s).unwrap();
        let drag = find_saddle_drag(&sys).unwrap();
        let poly = find_saddle_analytic(&sys).unwrap();
        assert_eq!(drag.kind, StationaryKind::Saddle);
        assert_eq!(drag.negative_count, 1);
        assert_eq!(poly.negative_count, 1);
        assert!(drag.residual < 1e-10 && poly.residual < 1e-10);
        let (qd, qp) = (drag.positions(&sys), poly.positions(&sys));
        assert!(max_diff(&qd, &qp) < 1e-8, "s={s}: {}", max_diff(&qd, &qp));

        let q = sys.full_positions(&qd);
        let n = q.len();
        for i in 0..n {
            assert!(((q[i] - q[0]) - (q[n - 1] - q[n - 1 - i])).abs() < 1e-10);
        }
        let spring = q[sys.center_left] / sys.center_left as f64;
        for b in (0..n - 1).filter(|&b| b != sys.center_left) {
            assert!((q[b + 1] - q[b] - spring).abs() < 1e-10);
        }
    }
}

#[test]
fn force_balance_roots_and_signatures() {
    // three roots at both strains: a nearly broken state, the saddle and the
    // intact chain; only the middle one is a first-order saddle
    for (s, r_saddle) in [(1.02, 2.694), (1.035, 2.371)] {
        let sys = ChainSystem::new(202, s).unwrap();
        let roots = force_balance_roots(&sys).unwrap();
        assert_eq!(roots.len(), 3, "s={s}");
        let signatures: Vec<usize> = roots.iter().map(|r| r.negative_count).collect();
        assert_eq!(signatures.iter().filter(|&&k| k == 1).count(), 1);
        let saddle = roots.iter().find(|r| r.negative_count == 1).unwrap();
        assert!((saddle.central_bond - r_saddle).abs() < 1e-3);
        for r in &roots {
            assert!(r.balance_residual < 1e-10);
            assert!(r.q_center > 0.0 && r.q_center < 0.5 * sys.length());
            // interior spring atoms are balanced by construction
            let cfg = Configuration::from_positions(&sys, &symmetric_configuration(&sys, r.q_center)).unwrap();
            let g = gradient(&sys, &cfg).unwrap();
            let c = sys.center_free();
            let interior = g.iter().enumerate().filter(|&(i, _)| i != c && i != c + 1);
            assert!(interior.map(|(_, v)| v.abs()).fold(0.0, f64::max) < 1e-12);
        }
    }
}

#[test]
fn unstretched_chains_have_no_saddle() {
    let sys = ChainSystem::new(8, 1.0).unwrap();
    assert!(find_saddle_drag(&sys).is_err());
    assert!(find_saddle_analytic(&sys).is_err());
}

#[test]
fn small_chain_saddle() {
    let sys = ChainSystem::new(8, 1.3).unwrap();
    let drag = find_saddle_drag(&sys).unwrap();
    let poly = find_saddle_analytic(&sys).unwrap();
    assert!(max_diff(&drag.positions(&sys), &poly.positions(&sys)) < 1e-8);
    let h = drag.hessian(&sys).unwrap();
    assert_eq!(count_negative(&symmetric_eigen(&h).values, inf_norm(&h)), 1);
}

#[test]
fn analytic_mode_matches_dense_eigenvector() {
    for s in [1.02, 1.035] {
        let sys = ChainSystem::new(202, s).unwrap();
        let saddle = find_saddle_drag(&sys).unwrap();
        let (lambda, u) = unstable_mode(&saddle.hessian(&sys).unwrap()).unwrap();
        let c = sys.center_free();
        let mode = analytic_unstable_mode(lambda, u[c], u.len()).unwrap();
        let cos = mode.dot(&u).abs() / (mode.norm() * u.norm());
        assert!(cos > 1.0 - 1e-8, "s={s}: cos={cos}");
        // numeric mode is antisymmetric about the central bond
        let n = u.len();
        for i in 0..n {
            assert!((u[i] + u[n - 1 - i]).abs() < 1e-8);
        }
        let am = AnalyticEigenmode::new(lambda, u[c], sys.center_left).unwrap();
        assert!((am.r_plus * am.r_minus - 1.0).abs() < 1e-12);
        assert!((am.r_plus + am.r_minus - (2.0 - lambda)).abs() < 1e-12);
        assert!(am.r_plus > 1.0 && am.r_minus > 0.0 && am.r_minus < 1.0);
        assert_eq!(am.left_value(0), 0.0);
        assert!((am.left_value(sys.center_left) - u[c]).abs() < 1e-14);
    }
}

#[test]
fn analytic_mode_rejects_bad_eigenvalues() {
    assert!(matches!(analytic_unstable_mode(0.1, 1.0, 10), Err(Error::ComplexRoots(_))));
    assert!(analytic_unstable_mode(-0.1, 1.0, 9).is_err());
}
