use num_complex::Complex64;
use proptest::prelude::*;
use rydsync::dynamics::{eom_rhs, MeanField};
use rydsync::linalg::{eigen_residual, eigenvalues, eigenvector, Matrix};
use rydsync::lattice::ModelParams;
use rydsync::steady::{census, SolutionClass};

fn model(vi: f64) -> MeanField<f64> {
    MeanField::new(ModelParams::paper_default().with_v_inter(vi), 2, 2).unwrap()
}

#[test]
fn census_signature_is_stable_under_more_seeds_and_new_streams() {
    let m = model(1.0);
    let base = census(&m, 100, 0).unwrap().signature();
    assert_eq!(census(&m, 200, 0).unwrap().signature(), base);
    assert_eq!(census(&m, 100, 17).unwrap().signature(), base);
}

#[test]
fn census_roots_are_roots_and_unique() {
    let m = model(2.0);
    let c = census(&m, 100, 3).unwrap();
    for (k, r) in c.roots.iter().enumerate() {
        let f = eom_rhs(&r.state, &m).unwrap();
        assert!(f.0.iter().all(|v| v.abs() < 1e-10));
        assert!(r.jacobian_check < 1e-6);
        for other in &c.roots[..k] {
            assert!(rydsync::scalar::max_abs_diff(&r.state.0, &other.state.0) > 1e-6);
        }
    }
    assert!(c.of_class(SolutionClass::Af2).any(|r| r.stable));
}

#[test]
fn every_fixed_point_spectrum_is_closed_under_conjugation() {
    let m = model(1.0);
    let c = census(&m, 100, 0).unwrap();
    for r in &c.roots {
        for z in &r.eigenvalues {
            if z.im.abs() > 1e-9 {
                assert!(r.eigenvalues.iter().any(|w| (w - z.conj()).norm() < 1e-8));
            }
        }
    }
}

fn matrix_strategy() -> impl Strategy<Value = Matrix<f64>> {
    (2usize..14).prop_flat_map(|n| {
        prop::collection::vec(-3.0..3.0f64, n * n).prop_map(move |d| Matrix::from_row_major(n, n, d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn eigenvalue_sum_is_the_trace(m in matrix_strategy()) {
        let ev = eigenvalues(&m).unwrap();
        prop_assert_eq!(ev.len(), m.rows());
        let sum: Complex64 = ev.iter().sum();
        prop_assert!((sum.re - m.trace()).abs() < 1e-8);
        prop_assert!(sum.im.abs() < 1e-8);
    }

    #[test]
    fn eigenpairs_have_small_residuals(m in matrix_strategy()) {
        let ev = eigenvalues(&m).unwrap();
        let scale = m.norm_inf().max(1.0);
        for &z in ev.iter().take(3) {
            let v = eigenvector(&m, z).unwrap();
            prop_assert!(eigen_residual(&m, z, &v) < 1e-7 * scale);
        }
    }
}
