mod common;

use common::{explicit_e, explicit_e_scaled, gaussian, rel_frobenius, rows_of, to_dmatrix};
use nalgebra::DVector;
use pdcov::estimators::estimate_mle;
use pdcov::pairdiff::{
    accumulate_e, apply_scaler, fit_scaler, index_pair_plan, pairwise_differences, ScalerKind,
    ScalerScope, ScalerSpec, ScalerState, Stat,
};
use pdcov::DataMatrix;
use proptest::prelude::*;

const KINDS: [ScalerKind; 5] = [
    ScalerKind::None,
    ScalerKind::Standardize,
    ScalerKind::Local,
    ScalerKind::MaxAbs,
    ScalerKind::Range,
];
const SCOPES: [ScalerScope; 3] = [
    ScalerScope::PerDimension,
    ScalerScope::GlobalScalar,
    ScalerScope::PerPair,
];

#[test]
fn two_rows_direct_subtraction() {
    let d = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 5.0]]).unwrap();
    let set = pairwise_differences(&d).unwrap();
    assert_eq!(set.get(0, 1).as_slice(), &[-2.0, -3.0]);
    assert_eq!(set.get(1, 0).as_slice(), &[2.0, 3.0]);
}

#[test]
fn unscaled_e_matches_explicit_on_5x4() {
    let d = gaussian(5, 4, 11);
    let e = accumulate_e(&d, &ScalerSpec::none()).unwrap();
    let oracle = to_dmatrix(&explicit_e(&rows_of(&d), |r, _, _| r.to_vec()));
    assert!(rel_frobenius(e.matrix.as_matrix(), &oracle) < 1e-12);
}

#[test]
fn hand_example_e_is_eight() {
    let d = DataMatrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
    let e = accumulate_e(&d, &ScalerSpec::none()).unwrap();
    assert_eq!(e.matrix.get(0, 0), 8.0);
}

#[test]
fn every_scaler_matches_explicit_oracle() {
    for kind in KINDS {
        for scope in SCOPES {
            let spec = ScalerSpec::new(kind, scope, 1e-12).unwrap();
            for (n, p, seed) in [(3, 2, 1), (5, 4, 2), (7, 3, 3)] {
                let d = gaussian(n, p, seed);
                let e = accumulate_e(&d, &spec).unwrap();
                let oracle = explicit_e_scaled(&d, &spec);
                let err = rel_frobenius(e.matrix.as_matrix(), &oracle);
                assert!(err < 1e-12, "{kind:?}/{scope:?} n={n} p={p}: {err}");
            }
        }
    }
}

#[test]
fn plan_counts() {
    assert_eq!(index_pair_plan(2).unwrap().total_pairs(), 2);
    let p3 = index_pair_plan(3).unwrap();
    assert_eq!(p3.pairs(), &[(0, 0), (1, 1), (0, 1)]);
    assert_eq!(p3.total_pairs(), 9);
    assert_eq!(index_pair_plan(5).unwrap().total_pairs(), 50);
    assert!(index_pair_plan(1).is_err());
}

#[test]
fn maxabs_global_direct_division() {
    let state = ScalerState::MaxAbs {
        scale: Stat::Global(4.0),
        eps: 1e-12,
    };
    let out = apply_scaler(&DVector::from_vec(vec![2.0, -4.0]), (0, 1), &state);
    assert_eq!(out.as_slice(), &[0.5, -1.0]);
}

#[test]
fn standardized_columns_have_unit_std() {
    let d = gaussian(4, 3, 5);
    let set = pairwise_differences(&d).unwrap();
    let spec = ScalerSpec::with_default_scope(ScalerKind::Standardize);
    let state = fit_scaler(&set, &spec).unwrap();
    let rows: Vec<DVector<f64>> = (0..4)
        .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| apply_scaler(&set.get(i, j), (i, j), &state))
        .collect();
    for c in 0..3 {
        let m = rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64;
        let v = rows.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / rows.len() as f64;
        assert!((v.sqrt() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn local_variances_brute_force_3x2() {
    let d = DataMatrix::from_rows(&[vec![1.0, 4.0], vec![2.0, -1.0], vec![5.0, 0.5]]).unwrap();
    let set = pairwise_differences(&d).unwrap();
    let state = fit_scaler(&set, &ScalerSpec::with_default_scope(ScalerKind::Local)).unwrap();
    let ScalerState::Local { variances: pdcov::pairdiff::LocalVariances::PerDimension(v), .. } = state
    else {
        panic!("unexpected state");
    };
    let x = rows_of(&d);
    for i in 0..3 {
        for c in 0..2 {
            let ds: Vec<f64> = (0..3).filter(|&j| j != i).map(|j| x[i][c] - x[j][c]).collect();
            let m = (ds[0] + ds[1]) / 2.0;
            let var = ((ds[0] - m).powi(2) + (ds[1] - m).powi(2)) / 2.0;
            assert!((v[i][c] - var).abs() < 1e-14);
        }
    }
}

fn data_strategy() -> impl Strategy<Value = DataMatrix> {
    (2usize..8, 1usize..6).prop_flat_map(|(n, p)| {
        prop::collection::vec(-50.0f64..50.0, n * p)
            .prop_map(move |v| DataMatrix::from_row_slice(n, p, &v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn differences_are_antisymmetric(d in data_strategy()) {
        let set = pairwise_differences(&d).unwrap();
        let n = d.nrows();
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                prop_assert_eq!(set.get(i, j), -set.get(j, i));
            }
        }
    }

    #[test]
    fn unscaled_e_is_multiple_of_mle(d in data_strategy()) {
        let n = d.nrows() as f64;
        let e = accumulate_e(&d, &ScalerSpec::none()).unwrap();
        let s = estimate_mle(&d).unwrap();
        let expected = s.matrix.as_matrix() * (n * n * (n + 2.0) / 2.0);
        let scale = expected.norm().max(1.0);
        prop_assert!((e.matrix.as_matrix() - &expected).norm() / scale < 1e-10);
    }

    #[test]
    fn standardize_means_vanish(d in data_strategy()) {
        let set = pairwise_differences(&d).unwrap();
        let state = fit_scaler(&set, &ScalerSpec::with_default_scope(ScalerKind::Standardize)).unwrap();
        let ScalerState::Standardize { mean: Stat::PerDimension(m), .. } = state else {
            panic!("unexpected state");
        };
        prop_assert!(m.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn global_range_is_twice_max_abs(d in data_strategy()) {
        let set = pairwise_differences(&d).unwrap();
        let spec = ScalerSpec::new(ScalerKind::Range, ScalerScope::GlobalScalar, 1e-12).unwrap();
        let ScalerState::Range { scale: Stat::Global(r), .. } = fit_scaler(&set, &spec).unwrap() else {
            panic!("unexpected state");
        };
        let max_abs = set.rows().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_abs * 2.0 >= 1e-12 {
            prop_assert_eq!(r, 2.0 * max_abs);
        }
    }

    #[test]
    fn global_scalar_is_rescaled_unscaled_e(d in data_strategy()) {
        let base = accumulate_e(&d, &ScalerSpec::none()).unwrap();
        for kind in [ScalerKind::MaxAbs, ScalerKind::Range] {
            let spec = ScalerSpec::new(kind, ScalerScope::GlobalScalar, 1e-12).unwrap();
            let set = pairwise_differences(&d).unwrap();
            let c = match fit_scaler(&set, &spec).unwrap() {
                ScalerState::MaxAbs { scale: Stat::Global(c), .. } | ScalerState::Range { scale: Stat::Global(c), .. } => c,
                other => panic!("unexpected state {other:?}"),
            };
            let e = accumulate_e(&d, &spec).unwrap();
            let expected = base.matrix.as_matrix() / (c * c);
            let scale = expected.norm().max(1e-300);
            prop_assert!((e.matrix.as_matrix() - &expected).norm() / scale < 1e-12);
        }
    }

    #[test]
    fn streaming_matches_explicit(d in data_strategy(), k in 0usize..5, s in 0usize..3) {
        let spec = ScalerSpec::new(KINDS[k], SCOPES[s], 1e-12).unwrap();
        let e = accumulate_e(&d, &spec).unwrap();
        let oracle = explicit_e_scaled(&d, &spec);
        prop_assert!(rel_frobenius(e.matrix.as_matrix(), &oracle) < 1e-12);
    }
}
