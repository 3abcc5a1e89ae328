use pinning_core::numerics::loglog_slope;
use pinning_core::wick::{
    gaussian_expectation_oracle, gaussian_moment, gaussian_moment_oracle, project_even, quotient_error,
    truncate_degree, HalfInt, MultiIndex, Polynomial,
};
use pinning_core::Error;
use proptest::prelude::*;

fn index(n: usize) -> impl Strategy<Value = MultiIndex> {
    (0i32..3, prop::collection::vec(0u32..5, n)).prop_map(|(k0, ks)| MultiIndex::new(k0, ks))
}

fn polynomial(n: usize) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((index(n), -2.0f64..2.0), 0..8)
        .prop_map(move |terms| Polynomial::from_terms(n, terms).unwrap())
}

proptest! {
    #[test]
    fn truncation_and_projection_are_idempotent(f in polynomial(2), twice in 0i64..8) {
        let cut = HalfInt::from_twice(twice);
        let once = truncate_degree(&f, cut).unwrap();
        prop_assert_eq!(&truncate_degree(&once, cut).unwrap(), &once);
        let even = project_even(&f);
        prop_assert_eq!(&project_even(&even), &even);
        prop_assert!(once.degrees().iter().all(|d| *d < cut));
    }

    #[test]
    fn moments_scale_with_degree(k in index(3), t in 1e-3f64..0.5, lambda in 0.1f64..4.0) {
        let base = gaussian_moment(&k, t).unwrap();
        let scaled = gaussian_moment(&k, lambda * t).unwrap();
        let expect = lambda.powf(k.degree().to_f64()) * base;
        prop_assert!((scaled - expect).abs() <= 1e-12 * expect.abs().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn moments_match_oracle(k in index(2), t in 1e-3f64..0.1) {
        let exact = gaussian_moment(&k, t).unwrap();
        let oracle = gaussian_moment_oracle(&k, t, 12.0 * (2.0 * t).sqrt()).unwrap();
        let scale = t.powf(k.degree().to_f64()) * 1e3;
        prop_assert!((exact - oracle).abs() <= 1e-12 * scale);
    }

    #[test]
    fn integral_is_linear(f in polynomial(2), g in polynomial(2), a in -3.0f64..3.0) {
        let t = 0.05;
        let lhs = f.add(&g.scale(a)).gaussian_integral(t).unwrap();
        let rhs = f.gaussian_integral(t).unwrap() + a * g.gaussian_integral(t).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }
}

#[test]
fn tensor_oracle_matches_factorized_oracle() {
    let k = MultiIndex::new(0, vec![2, 4]);
    let t: f64 = 0.02;
    let r = 12.0 * (2.0 * t).sqrt();
    let full = gaussian_expectation_oracle(2, t, r, |x| x[0].powi(2) * x[1].powi(4)).unwrap();
    assert!((full - gaussian_moment(&k, t).unwrap()).abs() < 1e-12 * full);
}

#[test]
fn quotient_error_is_higher_order() {
    // f = 1 + ξ₁ + t + ξ₁² + ξ₁ξ₂² + t ξ₂² (degree-2 even term) + ξ₁⁴.
    let n = 2;
    let f = Polynomial::from_terms(
        n,
        [
            (MultiIndex::new(0, vec![0, 0]), 1.0),
            (MultiIndex::new(0, vec![1, 0]), 1.0),
            (MultiIndex::new(1, vec![0, 0]), 1.0),
            (MultiIndex::new(0, vec![2, 0]), -0.5),
            (MultiIndex::new(0, vec![1, 2]), 2.0),
            (MultiIndex::new(1, vec![0, 2]), 0.7),
            (MultiIndex::new(0, vec![4, 0]), 1.3),
        ],
    )
    .unwrap();
    let ts = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
    let errs: Vec<f64> = ts.iter().map(|&t| quotient_error(&f, t, 12.0 * (2.0 * t).sqrt()).unwrap()).collect();
    let slope = loglog_slope(&ts, &errs);
    assert!(slope >= 1.4, "slope {slope}, errors {errs:?}");
    assert!((slope - 2.0).abs() < 0.05);
}

#[test]
fn errors_are_reported() {
    assert!(matches!(
        gaussian_moment(&MultiIndex::new(-2, vec![2]), 0.1),
        Err(Error::NegativeDegree { twice_degree: -2 })
    ));
    assert!(matches!(gaussian_moment(&MultiIndex::new(0, vec![34]), 0.1), Err(Error::ExponentTooLarge(34))));
    assert!(matches!(
        gaussian_moment_oracle(&MultiIndex::new(0, vec![2]), 0.1, 0.5),
        Err(Error::OracleRadius { .. })
    ));
    assert!(matches!(
        gaussian_moment_oracle(&MultiIndex::new(0, vec![0; 5]), 0.1, 100.0),
        Err(Error::OracleDimension(5))
    ));
}
