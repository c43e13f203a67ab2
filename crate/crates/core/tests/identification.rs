use ivboot::identify::{
    min_norm_solution, nonparam_bias_tail, rank_classify, single_iv_solution, strength_classify,
    Completeness, MomentSystem, StrengthBands, StrengthClass,
};
use ivboot::IvError;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, rows * cols)
        .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

fn null_projection(a: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let gram = a * a.transpose();
    let coef = gram.lu().solve(&(a * v)).unwrap();
    v - a.transpose() * coef
}

proptest! {
    #[test]
    fn min_norm_beats_null_space_perturbations(
        a in matrix(2, 5),
        x0 in prop::collection::vec(-3.0..3.0f64, 5),
        v in prop::collection::vec(-1.0..1.0f64, 5),
        scale in 0.01..10.0f64,
    ) {
        prop_assume!((&a * a.transpose()).determinant().abs() > 1e-3);
        let b = &a * DVector::from_vec(x0);
        let sol = min_norm_solution(&MomentSystem::new(a.clone(), b.clone()).unwrap()).unwrap();
        prop_assert!((&a * &sol.x - &b).norm() <= 1e-9 * (1.0 + b.norm()));
        let dv = null_projection(&a, &DVector::from_vec(v)) * scale;
        prop_assert!((&a * &dv).norm() < 1e-9 * (1.0 + dv.norm()));
        let perturbed = &sol.x + &dv;
        prop_assert!(perturbed.norm_squared() >= sol.c_ident - 1e-10);
        prop_assert!(sol.x.dot(&dv).abs() <= 1e-8 * (1.0 + dv.norm() * sol.x.norm()));
    }

    #[test]
    fn single_instrument_matches_min_norm(
        eta in prop::collection::vec(-2.0..2.0f64, 1..8),
        ewy in -5.0..5.0f64,
    ) {
        let eta = DVector::from_vec(eta);
        prop_assume!(eta.norm() > 1e-3);
        let closed = single_iv_solution(&eta, ewy).unwrap();
        let system = MomentSystem::new(DMatrix::from_row_slice(1, eta.len(), eta.as_slice()), DVector::from_vec(vec![ewy])).unwrap();
        let general = min_norm_solution(&system).unwrap();
        prop_assert!((closed - general.x).amax() <= 1e-10);
    }

    #[test]
    fn rank_is_scale_invariant(blocks in prop::collection::vec(matrix(2, 3), 1..6), s in 1e-3..1e3f64) {
        let scaled: Vec<DMatrix<f64>> = blocks.iter().map(|b| b * s).collect();
        prop_assert_eq!(rank_classify(&blocks, 3).unwrap(), rank_classify(&scaled, 3).unwrap());
    }

    #[test]
    fn strength_exponent_is_scale_invariant(alpha in -1.5..1.5f64, s in 1e-3..1e3f64) {
        let sizes = [50usize, 100, 200, 400];
        let mats: Vec<DMatrix<f64>> = sizes.iter().map(|&m| DMatrix::identity(2, 2) * (m as f64).powf(alpha)).collect();
        let scaled: Vec<DMatrix<f64>> = mats.iter().map(|m| m * s).collect();
        let a = strength_classify(&mats, &sizes, StrengthBands::default()).unwrap();
        let b = strength_classify(&scaled, &sizes, StrengthBands::default()).unwrap();
        prop_assert!((a.exponent - alpha).abs() < 1e-10);
        prop_assert!((a.exponent - b.exponent).abs() < 1e-10);
        prop_assert_eq!(a.class, b.class);
    }
}

#[test]
fn inconsistent_rows_are_infeasible() {
    let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 2.0, 4.0, 0.0]);
    let err = min_norm_solution(&MomentSystem::new(a.clone(), DVector::from_vec(vec![1.0, 3.0])).unwrap());
    assert!(matches!(err, Err(IvError::Infeasible { .. })));
    let ok = min_norm_solution(&MomentSystem::new(a, DVector::from_vec(vec![1.0, 2.0])).unwrap()).unwrap();
    assert!(ok.dropped_redundant);
    assert_eq!(ok.rank, 1);
    assert!((ok.c_ident - 0.2).abs() < 1e-12);
}

#[test]
fn rank_detects_missing_directions() {
    let blocks: Vec<DMatrix<f64>> = (0..10)
        .map(|i| DMatrix::from_row_slice(1, 3, &[i as f64, 2.0 * i as f64, 1.0]))
        .collect();
    let r = rank_classify(&blocks, 3).unwrap();
    assert_eq!(r.rank, 2);
    assert_eq!(r.class, Completeness::Incomplete);
    let r = rank_classify(&blocks, 1).unwrap();
    assert_eq!(r.class, Completeness::Complete);
}

#[test]
fn decaying_concentration_is_weak() {
    // first-stage signal pi' Z_m Z_m' pi held at 4 / m
    let sizes = [50usize, 100, 200, 400, 800];
    let mats: Vec<DMatrix<f64>> = sizes.iter().map(|&m| DMatrix::from_element(1, 1, 4.0 / m as f64)).collect();
    let r = strength_classify(&mats, &sizes, StrengthBands::default()).unwrap();
    assert_eq!(r.class, StrengthClass::Weak);
    assert!((r.exponent + 1.0).abs() < 1e-12);

    let linear: Vec<DMatrix<f64>> = sizes.iter().map(|&m| DMatrix::identity(3, 3) * m as f64).collect();
    assert_eq!(strength_classify(&linear, &sizes, StrengthBands::default()).unwrap().class, StrengthClass::Strong);
    let root: Vec<DMatrix<f64>> = sizes.iter().map(|&m| DMatrix::identity(3, 3) * (m as f64).sqrt()).collect();
    assert_eq!(strength_classify(&root, &sizes, StrengthBands::default()).unwrap().class, StrengthClass::SemiStrong);
}

#[test]
fn bias_tail_matches_brute_force_and_rate() {
    let coeffs: Vec<f64> = (1..=20_000).map(|k| (k as f64).powi(-2)).collect();
    for j in [5usize, 10, 20, 40, 80] {
        let tail = nonparam_bias_tail(&coeffs, j).unwrap();
        let mut brute = 0.0;
        for c in &coeffs[j..] {
            brute += c * c;
        }
        assert!((tail - brute.sqrt()).abs() <= 1e-12 * tail);
        // sum_{k>J} k^-4 lies between the integrals from J+1 and from J
        let lo = ((j + 1) as f64).powi(-3) / 3.0;
        let hi = (j as f64).powi(-3) / 3.0;
        assert!(tail * tail >= lo * 0.999 && tail * tail <= hi);
        let rate = (j as f64 + 0.5).powf(-1.5) / 3f64.sqrt();
        assert!((tail - rate).abs() <= 0.10 * rate, "j={j}: {tail} vs {rate}");
    }
    assert_eq!(nonparam_bias_tail(&coeffs[..3], 3).unwrap(), 0.0);
    assert!(nonparam_bias_tail(&coeffs[..3], 4).is_err());
}
