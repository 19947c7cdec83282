use htst_cg::chain::ChainSystem;
use htst_cg::coarse::{
    delocalized_indices, delocalized_minimal_indices, embed_min, localized_indices, partition_hessian,
    relaxed_response, schur_complement, MeshScheme, RepatomSet,
};
use htst_cg::linalg::symmetric_eigen;
use htst_cg::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Atom labels (1-based, boundary atom 0) of a free-DOF index set.
fn atoms(set: &RepatomSet) -> Vec<usize> {
    set.indices().iter().map(|i| i + 1).collect()
}

#[test]
fn localized_meshes() {
    let sys = ChainSystem::new(202, 1.02).unwrap();
    assert_eq!(atoms(&localized_indices(&sys, 2).unwrap()), vec![100, 101]);
    assert_eq!(atoms(&localized_indices(&sys, 4).unwrap()), vec![99, 100, 101, 102]);
    assert_eq!(atoms(&localized_indices(&sys, 200).unwrap()), (1..=200).collect::<Vec<_>>());
    for bad in [0, 3, 202] {
        assert!(localized_indices(&sys, bad).is_err());
    }
}

#[test]
fn delocalized_core_six() {
    let sys = ChainSystem::new(202, 1.02).unwrap();
    let mut expect = vec![29, 62, 79, 88, 93, 96, 105, 108, 113, 122, 139, 172];
    expect.extend(98..=103);
    expect.sort_unstable();
    assert_eq!(atoms(&delocalized_indices(&sys, 6).unwrap()), expect);
}

#[test]
fn delocalized_structure_for_every_core() {
    let sys = ChainSystem::new(202, 1.035).unwrap();
    for n in (2..=200).step_by(2) {
        let set = delocalized_indices(&sys, n).unwrap();
        let a = atoms(&set);
        // mirror symmetry about the central bond (atoms 100|101)
        for &x in &a {
            assert!(a.contains(&(201 - x)), "core {n}: {x} has no mirror");
        }
        // constrained gaps outside the core double: 1, 2, 4, ...
        let right: Vec<usize> = a.iter().copied().filter(|&x| x >= 101 + n / 2 - 1).collect();
        for (k, w) in right.windows(2).enumerate() {
            assert_eq!(w[1] - w[0] - 1, 1 << k, "core {n}");
        }
        assert!(localized_indices(&sys, n).unwrap().positions_within(&set).is_some());
    }
    let minimal = delocalized_minimal_indices(&sys, 6).unwrap();
    assert_eq!(atoms(&minimal), vec![96, 98, 99, 100, 101, 102, 103, 105]);
}

#[test]
fn scheme_names_round_trip() {
    for s in [MeshScheme::Localized, MeshScheme::Delocalized, MeshScheme::DelocalizedMinimal] {
        assert_eq!(s.to_string().parse::<MeshScheme>().unwrap(), s);
    }
    assert!("uniform".parse::<MeshScheme>().is_err());
}

#[test]
fn hand_schur_example() {
    let d = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
    let part = partition_hessian(&d, &RepatomSet::new(vec![0], 3).unwrap()).unwrap();
    let cg = schur_complement(&part).unwrap();
    // dense-solve oracle: R − B C⁻¹ Bᵀ
    let oracle = &part.r - &part.b * part.c.clone().lu().solve(&part.b.transpose()).unwrap();
    assert!((cg.d_cg[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
    assert!((oracle[(0, 0)] - cg.d_cg[(0, 0)]).abs() < 1e-15);
    assert!((cg.log_det_c - 3f64.ln()).abs() < 1e-15);
}

#[test]
fn full_resolution_and_reassembly() {
    let d = DMatrix::from_fn(5, 5, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
    let part = partition_hessian(&d, &RepatomSet::full(5)).unwrap();
    assert!(part.constrained.is_empty());
    let cg = schur_complement(&part).unwrap();
    assert_eq!(cg.d_cg, d);
    assert_eq!(cg.log_det_c, 0.0);
    let part = partition_hessian(&d, &RepatomSet::new(vec![1, 3], 5).unwrap()).unwrap();
    assert_eq!(part.reassemble(), d);
}

#[test]
fn bad_constrained_block_is_a_typed_error() {
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 2.0]));
    let part = partition_hessian(&d, &RepatomSet::new(vec![0], 3).unwrap()).unwrap();
    assert!(matches!(schur_complement(&part), Err(Error::ConstrainedNotPositiveDefinite)));
    assert!(relaxed_response(&part, &DVector::from_vec(vec![1.0])).is_err());
    assert!(embed_min(&part, &DVector::from_vec(vec![1.0])).is_err());
    assert!(RepatomSet::new(vec![], 3).is_err());
    assert!(RepatomSet::new(vec![3], 3).is_err());
}

/// Symmetric matrix whose constrained block (indices not in `reps`) is
/// positive definite, with an indefinite shift on the repatom block.
fn block_matrix() -> impl Strategy<Value = (DMatrix<f64>, RepatomSet)> {
    (3usize..9)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(-1.0f64..1.0, n * n),
                prop::collection::btree_set(0..n, 1..n),
                0.0f64..4.0,
            )
        })
        .prop_map(|(n, a, reps, shift)| {
            let m = DMatrix::from_vec(n, n, a);
            let mut d = &m * m.transpose() + DMatrix::identity(n, n) * 0.3;
            let reps: Vec<usize> = reps.into_iter().collect();
            d[(reps[0], reps[0])] -= shift;
            (d, RepatomSet::new(reps, n).unwrap())
        })
}

fn log_abs_det(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().u().diagonal().iter().map(|x| x.abs().ln()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn determinant_identity((d, reps) in block_matrix()) {
        let cg = schur_complement(&partition_hessian(&d, &reps).unwrap()).unwrap();
        let r = log_abs_det(&d) - cg.log_det_c - log_abs_det(&cg.d_cg);
        prop_assert!(r.abs() < 1e-8, "residual {r}");
        prop_assert_eq!(&cg.d_cg, &cg.d_cg.transpose());
    }

    #[test]
    fn embedding_theorem((d, reps) in block_matrix(), seed in prop::collection::vec(-1.0f64..1.0, 9)) {
        let part = partition_hessian(&d, &reps).unwrap();
        let cg = schur_complement(&part).unwrap();
        let v = DVector::from_iterator(reps.len(), seed.iter().copied().take(reps.len()));
        let v_min = embed_min(&part, &v).unwrap();
        let image = &d * &v_min;
        let (img_r, img_c) = part.split(&image);
        let scale = d.amax();
        prop_assert!(img_c.amax() < 1e-10 * scale);
        prop_assert!((img_r - &cg.d_cg * &v).amax() < 1e-10 * scale);
        let q_cg = v.dot(&(&cg.d_cg * &v));
        prop_assert!((q_cg - v_min.dot(&image)).abs() < 1e-10 * scale.max(1.0));
    }

    #[test]
    fn relaxed_response_minimizes((d, reps) in block_matrix(), seed in prop::collection::vec(-1.0f64..1.0, 9), dirs in prop::collection::vec(-1.0f64..1.0, 800)) {
        let part = partition_hessian(&d, &reps).unwrap();
        let u_r = DVector::from_iterator(reps.len(), seed.iter().copied().take(reps.len()));
        let uc = relaxed_response(&part, &u_r).unwrap();
        let nc = part.constrained.len();
        let energy = |uc: &DVector<f64>| {
            let u = part.merge(&u_r, uc);
            u.dot(&(&d * &u))
        };
        let e0 = energy(&uc);
        for k in 0..100 {
            let delta = DVector::from_fn(nc, |i, _| dirs[(k * 8 + i) % dirs.len()]);
            prop_assert!(energy(&(&uc + delta)) >= e0 - 1e-12 * (1.0 + e0.abs()));
        }
        prop_assert_eq!(relaxed_response(&part, &DVector::zeros(reps.len())).unwrap(), DVector::zeros(nc));
    }

    #[test]
    fn nested_schur_composition((d, reps) in block_matrix(), pick in 0usize..64) {
        let outer = reps.indices().to_vec();
        let inner: Vec<usize> = outer.iter().enumerate()
            .filter(|(k, _)| (pick >> (k % 6)) & 1 == 1 || *k == 0)
            .map(|(_, &i)| i)
            .collect();
        let inner = RepatomSet::new(inner, d.nrows()).unwrap();
        let direct = schur_complement(&partition_hessian(&d, &inner).unwrap()).unwrap();
        let step = schur_complement(&partition_hessian(&d, &reps).unwrap()).unwrap();
        let pos = RepatomSet::new(inner.positions_within(&reps).unwrap(), reps.len()).unwrap();
        let two = schur_complement(&partition_hessian(&step.d_cg, &pos).unwrap()).unwrap();
        prop_assert!((direct.d_cg - two.d_cg).amax() < 1e-9 * d.amax().max(1.0));
    }

    #[test]
    fn inverse_spectra_interlace((d, reps) in block_matrix()) {
        let cg = schur_complement(&partition_hessian(&d, &reps).unwrap()).unwrap();
        let inv = |m: &DMatrix<f64>| {
            let mut s: Vec<f64> = symmetric_eigen(m).values.iter().map(|x| 1.0 / x).collect();
            s.sort_by(f64::total_cmp);
            s
        };
        let (sigma, tau) = (inv(&d), inv(&cg.d_cg));
        let (n, m) = (sigma.len(), tau.len());
        let tol = 1e-8 * sigma.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for j in 0..m {
            prop_assert!(sigma[j] <= tau[j] + tol && tau[j] <= sigma[n - m + j] + tol);
        }
    }
}
