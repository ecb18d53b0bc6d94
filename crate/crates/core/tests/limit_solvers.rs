use bkl_core::limit_solvers::*;
use bkl_core::offspring::{make_stable_tail, BranchingSpec};

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + inner + f(b)) * h / 3.0
}

/// `∫_0^∞ du/√(1 + a u³)`, with `u = v^{-2}` on the tail.
fn cubic_integral(a: f64) -> f64 {
    simpson(|u| 1.0 / (1.0 + a * u * u * u).sqrt(), 0.0, 1.0, 2000) + simpson(|v| 2.0 / (v.powi(6) + a).sqrt(), 0.0, 1.0, 2000)
}

fn coarse() -> GridParams {
    GridParams { h: 0.02, ..Default::default() }
}

#[test]
fn binary_survival_is_two_over_two_plus_t() {
    let spec = BranchingSpec::binary();
    assert_eq!(gw_survival(&spec, 0.0).unwrap(), 1.0);
    for t in [0.5, 1.0, 10.0, 100.0, 1000.0] {
        let u = gw_survival(&spec, t).unwrap();
        assert!((u - 2.0 / (2.0 + t)).abs() < 1e-8, "t={t}: {u}");
    }
    assert!(gw_survival(&spec, -1.0).is_err());
}

#[test]
fn stable_survival_follows_power_law() {
    let spec = BranchingSpec::new(make_stable_tail(1.5, 0.5).unwrap(), 1.0).unwrap();
    let c = spec.mechanism_constant();
    let gap = |t: f64| (gw_survival(&spec, t).unwrap() / (0.5 * c * t).powf(-2.0) - 1.0).abs();
    let (g3, g5) = (gap(1e3), gap(1e5));
    assert!(g5 < g3 && g5 < 0.02, "{g3} {g5}");
}

#[test]
fn csbp_extinction_closed_form() {
    assert!((csbp_extinction(2.0, 0.5, 1.0, 3.0).unwrap() - 2.0).abs() < 1e-14);
    let a: f64 = 1.5;
    let base = csbp_extinction(a, 0.7, 1.0, 1.0).unwrap();
    for r in [0.1, 2.0, 50.0] {
        let v = csbp_extinction(a, 0.7, r, 1.0).unwrap();
        assert!((v * r.powf(1.0 / (a - 1.0)) - base).abs() < 1e-12 * base);
    }
    assert!(csbp_extinction(2.0, 0.5, 1e12, 1.0).unwrap() < 1e-11);
    assert!(csbp_extinction(2.0, 0.5, 0.0, 1.0).is_err());
}

#[test]
fn zero_data_stays_zero() {
    let pde = solve_semilinear(|_| 0.0, 2.0, 0.5, 1.0, 1.0, &coarse()).unwrap();
    assert!(pde.profile(1.0).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn constant_data_far_field_follows_the_ode() {
    let (v0, c, t): (f64, f64, f64) = (3.0, 0.5, 1.0);
    let pde = solve_semilinear(|_| v0, 2.0, c, 1.0, t, &GridParams { h: 0.01, ..Default::default() }).unwrap();
    let exact = 1.0 / (1.0 / v0 + c * t);
    for y in [7.0, 9.0] {
        let v = pde.at(t, y).unwrap();
        assert!((v - exact).abs() < 1e-5, "y={y}: {v} vs {exact}");
    }
    // Same with α = 3/2: (v0^{−1/2} + c t/2)^{−2}.
    let pde = solve_semilinear(|_| v0, 1.5, c, 1.0, t, &GridParams { h: 0.01, ..Default::default() }).unwrap();
    let exact = (v0.powf(-0.5) + 0.5 * c * t).powi(-2);
    let v = pde.at(t, 8.0).unwrap();
    assert!((v - exact).abs() < 1e-5, "{v} vs {exact}");
}

#[test]
fn stationary_residual_is_second_order() {
    let k = |y: f64| 6.0 / (1.0 - y).powi(2);
    let r: Vec<f64> = [0.02, 0.01, 0.005].iter().map(|&h| stationary_residual(2.0, 0.5, 1.0, k, h, 0.0, 0.8).unwrap()).collect();
    for w in r.windows(2) {
        assert!((w[0] / w[1] - 4.0).abs() < 0.1, "{r:?}");
    }
    // Leading truncation term (σ²/2)(h²/12) K''''(0.8), with K'''' = 720/(1−y)^6.
    let lead = 0.5 / 12.0 * 720.0 / 0.2f64.powi(6);
    assert!((r[2] / (0.005 * 0.005) / lead - 1.0).abs() < 0.01, "{r:?}");
}

#[test]
fn v_infinity_shape() {
    let pde = solve_v_infinity(2.0, 0.5, 1.0, 1.0, &GridParams::default()).unwrap();
    let prof = pde.profile(1.0).unwrap();
    assert_eq!(prof[0], 0.0);
    assert!(prof.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    assert!((pde.at(1.0, 8.0).unwrap() - 2.0).abs() < 1e-4);
}

#[test]
fn canonical_survival_value() {
    let grid = GridParams { refinement_tol: Some(1e-3), ..Default::default() };
    let pde = solve_v_infinity(2.0, 0.5, 1.0, 1.0, &grid).unwrap();
    let v = n_measure_survival(&pde, 1.0).unwrap();
    assert!((v - 1.624882).abs() < 1e-4, "{v}");
    assert!(pde.diagnostics.refinement_change.unwrap() < 1e-3);
}

#[test]
fn boundary_layer_constant() {
    let ws = [0.04, 0.02, 0.01, 0.005];
    let grid = GridParams { output_times: ws.iter().map(|w| 1.0 - w).collect(), ..Default::default() };
    let pde = solve_v_infinity(2.0, 0.5, 1.0, 1.0, &grid).unwrap();
    let e = constant_c0inf(&pde, 1.0, &ws).unwrap();
    assert!((e.value - 2.2529).abs() < 2e-3, "{e:?}");
    assert!(e.spread <= 0.02);
    assert!(e.g_values.windows(2).all(|g| g[1] < g[0]), "{e:?}");
}

#[test]
fn laplace_functional_of_vanishing_data_is_one() {
    let ws = [0.04, 0.02, 0.01];
    let grid = GridParams { output_times: ws.iter().map(|w| 1.0 - w).collect(), ..coarse() };
    let zero = solve_semilinear(|_| 0.0, 2.0, 0.5, 1.0, 1.0, &grid).unwrap();
    assert_eq!(eta1_laplace(&zero, 2.2529, 1.0, &ws).unwrap(), 1.0);
    let mut last = 0.0;
    for eps in [1e-1, 1e-2, 1e-3] {
        let pde = solve_semilinear(|_| eps, 2.0, 0.5, 1.0, 1.0, &grid).unwrap();
        let eta = eta1_laplace(&pde, 2.2529, 1.0, &ws).unwrap();
        assert!(eta < 1.0 && eta > last, "eps={eps}: {eta}");
        last = eta;
    }
    assert!(1.0 - last < 1e-2, "{last}");
}

#[test]
fn v_infinity_is_self_similar() {
    // v(r t, √r y) = r^{−1} v(t, y) for α = 2.
    let grid = GridParams { output_times: vec![0.25, 1.0], ..coarse() };
    let pde = solve_v_infinity(2.0, 0.5, 1.0, 4.0, &grid).unwrap();
    for y in [0.4, 1.0, 2.0] {
        let base = pde.at(1.0, y).unwrap();
        let small = pde.at(0.25, 0.5 * y).unwrap();
        let large = pde.at(4.0, 2.0 * y).unwrap();
        assert!((small / (4.0 * base) - 1.0).abs() < 2e-3, "y={y}: {small} vs {}", 4.0 * base);
        assert!((large / (0.25 * base) - 1.0).abs() < 2e-3, "y={y}: {large} vs {}", 0.25 * base);
    }
}

#[test]
fn slope_matches_independent_quadrature() {
    let sol = shoot_k(2.0, 0.5, 1.0, 1e-10).unwrap();
    let oracle = cubic_integral(2.0 / 3.0).powi(3);
    assert!((sol.slope_at_0 / oracle - 1.0).abs() < 1e-6, "{} vs {oracle}", sol.slope_at_0);
    assert!((sol.slope_at_0 - 33.0822).abs() < 1e-3);
    assert!(sol.first_integral_violation < 1e-8);
    let k = sol.value_at(1e-4).unwrap();
    assert!((k / 1e-4 / sol.slope_at_0 - 1.0).abs() < 1e-3);
    assert!((sol.blowup_location - 1.0).abs() < 1e-8);
}

#[test]
fn blowup_moves_in_as_slope_grows() {
    let locs: Vec<f64> = [5.0, 20.0, 33.0, 100.0, 1000.0].iter().map(|&th| blowup_location(2.0, 0.5, 1.0, th).unwrap().0).collect();
    assert!(locs.windows(2).all(|w| w[1] < w[0]), "{locs:?}");
}

#[test]
fn profile_rescales_with_interval_length() {
    let base = shoot_k(2.0, 0.5, 1.0, 1e-10).unwrap();
    for z in [0.5, 2.0] {
        let sol = shoot_k_on(2.0, 0.5, 1.0, z, 1e-10, 100).unwrap();
        for (y, k) in sol.grid.iter().zip(&sol.k_values).skip(1) {
            let want = z.powi(-2) * base.value_at(y / z).unwrap();
            assert!((k / want - 1.0).abs() < 1e-6, "z={z}, y={y}");
        }
    }
}

#[test]
fn yaglom_curve_is_a_distribution_function() {
    let zs: Vec<f64> = (1..=12).map(|i| i as f64 * 0.5).collect();
    let curve = yaglom_max_curve(2.0, 0.5, 1.0, 1.0, &zs, &coarse()).unwrap();
    assert!(curve.windows(2).all(|w| w[1].1 >= w[0].1), "{curve:?}");
    assert!(curve[0].1 < 0.05, "{curve:?}");
    assert!(curve[11].1 > 0.999, "{curve:?}");
    assert!(yaglom_max_cdf(2.0, 0.5, 1.0, 1.0, 0.0, &coarse()).is_err());
}

#[test]
fn bad_mechanisms_are_rejected() {
    assert!(Mechanism::new(1.0, 0.5, 1.0).is_err());
    assert!(Mechanism::new(2.5, 0.5, 1.0).is_err());
    assert!(Mechanism::new(2.0, 0.0, 1.0).is_err());
    assert!(shoot_k(2.0, 0.5, 0.0, 1e-10).is_err());
}
