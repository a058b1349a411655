use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sticky_bethe::density::QuadratureSpec;
use sticky_bethe::rwre::{compare, empirical_expectation, sample_beta, simulate_paths, split_law, Preset, Route, RwreConfig};

proptest! {
    #[test]
    fn split_law_is_a_symmetric_distribution(k in 0usize..9, a in 0.001f64..5.0) {
        let p = split_law(k, a);
        prop_assert_eq!(p.len(), k + 1);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 0..=k {
            prop_assert!(p[j] >= 0.0);
            prop_assert!((p[j] - p[k - j]).abs() <= 1e-12 * (1.0 + p[j]));
        }
    }

    #[test]
    fn split_law_matches_beta_moments(a in 0.05f64..3.0) {
        // P(both of two walkers go right) = E q² = (a+1)/(2(2a+1)) for Beta(a,a)
        let p = split_law(2, a);
        prop_assert!((p[2] - (a + 1.0) / (2.0 * (2.0 * a + 1.0))).abs() < 1e-14);
    }
}

#[test]
fn beta_draws_have_the_right_mean_and_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for a in [0.02, 0.5, 3.0] {
        let n = 200_000;
        let qs: Vec<f64> = (0..n).map(|_| sample_beta(a, &mut rng).q()).collect();
        let mean = qs.iter().sum::<f64>() / n as f64;
        let var = qs.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / n as f64;
        let want_var = 1.0 / (4.0 * (2.0 * a + 1.0));
        assert!((mean - 0.5).abs() < 5.0 * (want_var / n as f64).sqrt(), "a={a}: {mean}");
        assert!((var - want_var).abs() < 0.02 * want_var, "a={a}: {var} vs {want_var}");
    }
}

#[test]
fn single_walker_is_a_simple_random_walk() {
    // E cos(ε S_N) = cos(ε)^N exactly
    let cfg = RwreConfig::new(1, 1.0, 0.05, 1.0, 100_000, 2);
    let r = empirical_expectation(|y: &[f64]| y[0].cos(), &cfg).unwrap();
    let want = 0.05f64.cos().powi(cfg.steps() as i32);
    assert!(((r.estimate - want) / r.std_error).abs() < 4.0, "{r:?} vs {want}");
}

#[test]
fn annealed_and_quenched_routes_agree() {
    let f = |y: &[f64]| Preset::Gap.eval(y);
    let mut a = RwreConfig::new(3, 0.7, 0.1, 1.0, 100_000, 3);
    let ra = empirical_expectation(f, &a).unwrap();
    a.route = Route::Quenched;
    a.paths = 50_000;
    let rq = empirical_expectation(f, &a).unwrap();
    let z = (ra.estimate - rq.estimate) / (ra.std_error.powi(2) + rq.std_error.powi(2)).sqrt();
    assert!(z.abs() < 4.0, "{ra:?} {rq:?}");
}

#[test]
fn walks_match_the_density_at_moderate_resolution() {
    for theta in [0.5, 2.0] {
        let cfg = RwreConfig::new(2, theta, 0.05, 1.0, 100_000, 4);
        let c = compare(|y: &[f64]| Preset::Cos.eval(y), 1.0, theta, &cfg, &QuadratureSpec::for_dim(2)).unwrap();
        assert!(c.z.abs() < 4.0, "θ={theta}: {c:?}");
    }
}

#[test]
fn seeds_fix_the_paths() {
    let cfg = RwreConfig::new(3, 1.0, 0.1, 1.0, 500, 5);
    let a = simulate_paths(&cfg).unwrap();
    assert_eq!(a, simulate_paths(&cfg).unwrap());
    let other = RwreConfig { seed: 6, ..cfg.clone() };
    assert_ne!(a, simulate_paths(&other).unwrap());
    for p in &a {
        assert!(p.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn too_few_steps_is_rejected() {
    assert!(RwreConfig::new(2, 1.0, 0.2, 1.0, 10, 1).validate().is_err());
    assert!(RwreConfig::new(2, 1.0, 0.02, 1.0, 0, 1).validate().is_err());
}
