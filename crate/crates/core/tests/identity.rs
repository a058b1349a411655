use num_rational::BigRational;
use proptest::prelude::*;
use sticky_bethe::identity::{
    a_coefficient, extract_vandermonde_constants, harmonic_range, parse_theta, theta_kl, verify_alternating_identity, verify_b_boundary_identity,
    verify_determinant_identity, verify_summation_formula, Method, Part,
};

proptest! {
    #[test]
    fn splitting_rates_are_consistent(k in 1usize..20, l in 1usize..20, p in 1i64..20, q in 1i64..20) {
        let th = BigRational::new(p.into(), q.into());
        let lhs = theta_kl(k, l, &th).unwrap();
        let rhs = theta_kl(k + 1, l, &th).unwrap() + theta_kl(k, l + 1, &th).unwrap();
        prop_assert_eq!(lhs, rhs);
        prop_assert_eq!(theta_kl(k, l, &th).unwrap(), theta_kl(l, k, &th).unwrap());
    }

    #[test]
    fn coefficient_matches_harmonic_range(m in 2usize..40, j in 1usize..40) {
        prop_assume!(j <= m);
        let a = a_coefficient(m, j).unwrap();
        prop_assert_eq!(a / BigRational::from_integer(2.into()), harmonic_range(j, m));
    }
}

#[test]
fn pointwise_routes_agree_with_full_expansion() {
    for n in 2..=4 {
        assert!(verify_b_boundary_identity(n, Method::Expansion).unwrap().passed);
        assert!(verify_b_boundary_identity(n, Method::Grid).unwrap().passed);
        assert!(verify_alternating_identity(n, Method::Grid).unwrap().passed);
        assert!(verify_alternating_identity(n, Method::Random { trials: 30, seed: 7 }).unwrap().passed);
    }
}

#[test]
fn constants_from_both_routes() {
    for n in 2..=4 {
        for part in [Part::Diffusion, Part::Drift] {
            let e = extract_vandermonde_constants(n, part, Method::Expansion).unwrap();
            let g = extract_vandermonde_constants(n, part, Method::Grid).unwrap();
            assert!(e.passed && g.passed);
            assert_eq!(e.coefficients, g.coefficients);
        }
    }
}

#[test]
fn seeded_certificates_reproduce() {
    let th = parse_theta("5/3").unwrap();
    let a = verify_summation_formula(4, &th, 50, 12).unwrap();
    let b = verify_summation_formula(4, &th, 50, 12).unwrap();
    assert!(a.passed && a.checks >= 50);
    assert_eq!(a, b);
    assert!(verify_determinant_identity(3, &th, 10, 1).unwrap().passed);
}

#[test]
fn theta_parsing() {
    assert_eq!(parse_theta("3/2").unwrap(), BigRational::new(3.into(), 2.into()));
    assert!(parse_theta("-1").is_err());
    assert!(parse_theta("x").is_err());
    assert!(theta_kl(2, 0, &parse_theta("1").unwrap()).is_err());
}
