use proptest::prelude::*;
use sticky_bethe::density::{density_derivative, evaluate_density, expectation, Axis, DensityEngine, QuadratureSpec};
use sticky_bethe::measure::{integrate, ChamberRule, WeylPoint};

fn wp(v: &[f64]) -> WeylPoint {
    WeylPoint::new(v.to_vec()).unwrap()
}

fn point2() -> impl Strategy<Value = Vec<f64>> {
    (-1.5f64..1.5, 0.0f64..2.0).prop_map(|(a, g)| vec![a, a - g])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn symmetric_in_start_and_end(x in point2(), y in point2(), t in 0.3f64..2.0, theta in 0.2f64..3.0) {
        let spec = QuadratureSpec::for_dim(2);
        let a = evaluate_density(&wp(&x), &wp(&y), t, theta, &spec).unwrap();
        let b = evaluate_density(&wp(&y), &wp(&x), t, theta, &spec).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-10, "{a:?} {b:?}");
        prop_assert!(a.value >= -a.est_error);
    }

    #[test]
    fn translation_invariant(x in point2(), y in point2(), c in -2.0f64..2.0, t in 0.3f64..2.0, theta in 0.2f64..3.0) {
        let spec = QuadratureSpec::for_dim(2);
        let a = evaluate_density(&wp(&x), &wp(&y), t, theta, &spec).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v + c).collect();
        let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
        let b = evaluate_density(&wp(&xs), &wp(&ys), t, theta, &spec).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-10);
    }

    #[test]
    fn brownian_scaling(x in point2(), y in point2(), t in 0.3f64..3.0, theta in 0.2f64..3.0) {
        // u_t(x, y; θ) = t^{-n/2} u_1(x/√t, y/√t; θ√t)
        let spec = QuadratureSpec::for_dim(2);
        let s = t.sqrt();
        let a = evaluate_density(&wp(&x), &wp(&y), t, theta, &spec).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v / s).collect();
        let ys: Vec<f64> = y.iter().map(|v| v / s).collect();
        let b = evaluate_density(&wp(&xs), &wp(&ys), 1.0, theta * s, &spec).unwrap();
        prop_assert!((a.value - b.value / t).abs() <= 1e-10);
    }
}

#[test]
fn brownian_scaling_three_points() {
    let spec = QuadratureSpec::for_dim(3);
    let (x, y, t, theta) = ([0.8, 0.1, -0.4], [0.5, 0.5, -0.9], 1.7f64, 0.6);
    let s = t.sqrt();
    let a = evaluate_density(&wp(&x), &wp(&y), t, theta, &spec).unwrap();
    let xs: Vec<f64> = x.iter().map(|v| v / s).collect();
    let ys: Vec<f64> = y.iter().map(|v| v / s).collect();
    let b = evaluate_density(&wp(&xs), &wp(&ys), 1.0, theta * s, &spec).unwrap();
    assert!((a.value - b.value * t.powf(-1.5)).abs() <= 1e-10);
}

#[test]
fn x_derivative_matches_central_differences() {
    let spec = QuadratureSpec::for_dim(2);
    let (x, y, t, theta) = ([0.6, -0.2], [0.1, -0.5], 0.8, 1.3);
    let d = density_derivative(&wp(&x), &wp(&y), t, theta, &[Axis::X(0)], &spec).unwrap().value;
    let fd = |h: f64| {
        let up = evaluate_density(&wp(&[x[0] + h, x[1]]), &wp(&y), t, theta, &spec).unwrap().value;
        let dn = evaluate_density(&wp(&[x[0] - h, x[1]]), &wp(&y), t, theta, &spec).unwrap().value;
        (up - dn) / (2.0 * h)
    };
    let e1 = (fd(0.02) - d).abs();
    let e2 = (fd(0.01) - d).abs();
    // O(h²): halving h cuts the error by about 4
    assert!(e1 < 1e-3 && (e1 / e2 - 4.0).abs() < 0.2, "{e1} {e2}");
}

#[test]
fn reference_measure_is_stationary() {
    // ∫ u_t(x, y) m_θ(dx) = 1 for every y
    let (t, theta) = (1.0, 0.7);
    let y = [0.3, -0.2];
    let spec = QuadratureSpec::for_dim(2);
    let rule = ChamberRule::around(-0.2, 0.3, 1.0, 7.0, 40);
    let bound = rule.z_hi - rule.y_min(2) + 1.0;
    let eng = DensityEngine::new(2, t, theta, &spec, bound).unwrap();
    let mass = integrate(|x: &[f64]| eng.density(x, &y).unwrap().value, 2, theta, &rule).unwrap();
    assert!((mass - 1.0).abs() < 1e-3, "{mass}");
}

#[test]
fn each_particle_is_a_brownian_motion() {
    // Σ_i cos(Y_i) has mean e^{-t/2} Σ_i cos(x_i) whatever the interaction
    let f = |y: &[f64]| y.iter().map(|v| v.cos()).sum::<f64>();
    for (x, theta) in [(vec![0.0, 0.0], 0.5), (vec![0.7, -0.3], 2.0), (vec![0.5, 0.0, -0.5], 1.0)] {
        let t = 0.8;
        let e = expectation(f, &wp(&x), t, theta, &QuadratureSpec::for_dim(x.len())).unwrap();
        let want = (-t / 2.0).exp() * f(&x);
        assert!((e.value - want).abs() < 1e-6, "{x:?}: {} vs {want}", e.value);
    }
}

#[test]
fn pairs_of_three_move_as_two_point_motions() {
    // Exchangeable, consistent n-point motions: the unordered pairs of the
    // 3-point motion follow the 2-point motion.
    let h = |a: f64, b: f64| (-(a - b) * (a - b)).exp() * (0.3 * (a + b)).cos();
    let x = [0.6, 0.0, -0.6];
    let (t, theta) = (0.7, 1.4);
    let three = expectation(|y: &[f64]| h(y[0], y[1]) + h(y[0], y[2]) + h(y[1], y[2]), &wp(&x), t, theta, &QuadratureSpec::for_dim(3)).unwrap();
    let mut two = 0.0;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        two += expectation(|y: &[f64]| h(y[0], y[1]), &wp(&[x[i], x[j]]), t, theta, &QuadratureSpec::for_dim(2)).unwrap().value;
    }
    assert!((three.value - two).abs() < 1e-5, "{} vs {two}", three.value);
}

#[test]
fn short_time_limit_is_the_start_point() {
    // E_x f(Y_t) = f(x) + t/2 Δf(x) + O(t²) away from the walls
    let f = |y: &[f64]| (-(y[0] * y[0] + y[1] * y[1])).exp();
    let x = [0.5, -0.5];
    let t = 0.01;
    let r2 = 0.5;
    let lap = (4.0 * r2 - 4.0) * f(&x);
    let e = expectation(f, &wp(&x), t, 1.0, &QuadratureSpec::for_dim(2)).unwrap();
    assert!((e.value - f(&x) - 0.5 * t * lap).abs() < 2e-4, "{}", e.value);
}
