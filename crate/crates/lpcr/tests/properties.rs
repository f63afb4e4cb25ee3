//! Randomized invariants for the echelon parameterization and the profile
//! objective.

use lpcr::likelihood::{profile_objective, ObjectiveVariant};
use lpcr::model::{echelon_canonicalize, spiked_cov_assemble, spiked_eigen, SpikedCovariance};
use lpcr::{Dataset, EchelonLoadings};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix_strategy(p: usize, k: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0_f64..3.0, p * k)
        .prop_map(move |v| DMatrix::from_vec(p, k, v))
}

fn orthogonal_strategy(k: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0_f64..1.0, k * k).prop_filter_map("needs full rank", move |v| {
        let g = DMatrix::from_vec(k, k, v);
        let qr = nalgebra::QR::new(g.clone());
        let r = qr.r();
        (0..k)
            .all(|j| r[(j, j)].abs() > 1e-6)
            .then(|| qr.q())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonicalization_preserves_gram(m in matrix_strategy(5, 2)) {
        prop_assume!(nalgebra::SVD::new(m.clone(), false, false).singular_values[1] > 1e-3);
        let l = echelon_canonicalize(&m).unwrap();
        let gram_l = l.matrix() * l.matrix().transpose();
        let gram_m = &m * m.transpose();
        prop_assert!((gram_l - &gram_m).norm() <= 1e-10 * gram_m.norm().max(1.0));
    }

    #[test]
    fn canonical_form_ignores_right_rotations(m in matrix_strategy(6, 3), o in orthogonal_strategy(3)) {
        prop_assume!(nalgebra::SVD::new(m.clone(), false, false).singular_values[2] > 1e-2);
        let l = echelon_canonicalize(&m).unwrap();
        let l2 = echelon_canonicalize(&(&m * &o)).unwrap();
        prop_assert!((l.matrix() - l2.matrix()).norm() <= 1e-8 * l.matrix().norm().max(1.0));
    }

    #[test]
    fn spiked_eigen_reassembles(m in matrix_strategy(6, 2), tau in 0.2_f64..4.0) {
        prop_assume!(nalgebra::SVD::new(m.clone(), false, false).singular_values[1] > 1e-3);
        let loadings = echelon_canonicalize(&m).unwrap();
        let cov = SpikedCovariance::new(tau, loadings.clone()).unwrap();
        let (u, d, t) = spiked_eigen(&cov);
        let rebuilt = (DMatrix::identity(6, 6) + &u * DMatrix::from_diagonal(&d) * u.transpose()) * t;
        let direct = spiked_cov_assemble(tau, &loadings).unwrap();
        prop_assert!((rebuilt - &direct).norm() <= 1e-12 * direct.norm());
    }

    #[test]
    fn profile_depends_only_on_span(
        xv in prop::collection::vec(-2.0_f64..2.0, 20 * 4),
        yv in prop::collection::vec(-2.0_f64..2.0, 20 * 2),
        m in matrix_strategy(4, 2),
        o in orthogonal_strategy(2),
    ) {
        prop_assume!(nalgebra::SVD::new(m.clone(), false, false).singular_values[1] > 1e-2);
        let x = DMatrix::from_vec(20, 4, xv);
        let y = DMatrix::from_vec(20, 2, yv);
        let data = match Dataset::new(y, x) {
            Ok(d) => d,
            Err(_) => return Ok(()),
        };
        let l1 = echelon_canonicalize(&m).unwrap();
        let l2 = echelon_canonicalize(&(&m * &o)).unwrap();
        let e1 = match profile_objective(&l1, &data) {
            Ok(e) => e,
            Err(_) => return Ok(()),
        };
        let e2 = profile_objective(&l2, &data).unwrap();
        let scale = e1.value.abs().max(1.0);
        prop_assert!((e1.value - e2.value).abs() <= 1e-10 * scale);
        let f1 = e1.objective(ObjectiveVariant::FullProfile);
        let f2 = e2.objective(ObjectiveVariant::FullProfile);
        prop_assert!((f1 - f2).abs() <= 1e-10 * scale);
    }

    #[test]
    fn free_vector_round_trips(v in prop::collection::vec(-5.0_f64..5.0, 9)) {
        // p = 4, k = 3 has 9 free entries
        let vec = DVector::from_vec(v);
        let l = EchelonLoadings::from_free_vec(4, 3, &vec);
        prop_assert_eq!(l.to_free_vec(), vec);
    }
}
