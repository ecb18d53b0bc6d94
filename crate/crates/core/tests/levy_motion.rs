use bkl_core::estimators::Moments;
use bkl_core::levy_motion::*;
use bkl_core::rng::{stream, Purpose};
use bkl_core::stats::ks_one_sample;
use statrs::distribution::{ContinuousCDF, Normal};

fn phi(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

fn reference_jd() -> LevyModel {
    LevyModel::jump_diffusion(1.0, 1.0, JumpLaw::Laplace { scale: 0.5 }).unwrap()
}

fn opts(seed: u64) -> McOptions {
    McOptions { seed, threads: 2, ..Default::default() }
}

#[test]
fn brownian_segment_minimum_follows_reflection_law() {
    let model = LevyModel::brownian(2.0).unwrap();
    let dt: f64 = 0.7;
    let scale = (2.0 * dt).sqrt();
    let mut rng = stream(1, 0, Purpose::Motion);
    let mins: Vec<f64> = (0..50_000).map(|_| sample_segment(&model, 0.0, dt, &mut rng).min).collect();
    // P(min <= m) = 2 Φ(m / σ√dt) for m <= 0.
    let ks = ks_one_sample(&mins, |m| if m >= 0.0 { 1.0 } else { 2.0 * phi(m / scale) });
    assert!(ks.p_value > 0.001, "{ks:?}");
}

#[test]
fn segment_extremes_bracket_the_path() {
    for model in [LevyModel::brownian(1.0).unwrap(), reference_jd()] {
        let mut rng = stream(2, 0, Purpose::Motion);
        for _ in 0..20_000 {
            let s = sample_segment(&model, 1.5, 0.3, &mut rng);
            assert!(s.min <= s.end.min(1.5) && s.max >= s.end.max(1.5), "{model}: {s:?}");
        }
    }
}

#[test]
fn tiny_segments_stay_put() {
    let model = reference_jd();
    let mut rng = stream(3, 0, Purpose::Motion);
    for _ in 0..10_000 {
        let s = sample_segment(&model, 2.0, 1e-8, &mut rng);
        assert!((s.max - s.min) < 1e-2, "{s:?}");
    }
}

#[test]
fn segment_increments_have_model_moments() {
    for model in [LevyModel::brownian(1.5).unwrap(), reference_jd()] {
        let dt = 0.4;
        let mut rng = stream(4, 0, Purpose::Motion);
        let mut m = Moments::default();
        let n = 200_000;
        for _ in 0..n {
            m.push(sample_segment(&model, 0.0, dt, &mut rng).end);
        }
        let var = model.sigma2() * dt;
        assert!(m.mean().abs() < 4.0 * (var / n as f64).sqrt(), "{model}: mean {}", m.mean());
        assert!((m.variance() / var - 1.0).abs() < 0.02, "{model}: var {}", m.variance());
    }
}

#[test]
fn brownian_passage_has_no_overshoot() {
    let model = LevyModel::brownian(1.0).unwrap();
    let mut rng = stream(5, 0, Purpose::Motion);
    for _ in 0..2000 {
        let rec = first_passage(&model, 1.0, 0.0, Direction::Down, 1e3, &mut rng);
        if !rec.censored {
            assert_eq!(rec.overshoot, 0.0);
        }
    }
}

#[test]
fn jump_passage_overshoot_is_below_level_and_light_tailed() {
    let model = reference_jd();
    let mut rng = stream(6, 0, Purpose::Motion);
    let mut m = Moments::default();
    for _ in 0..20_000 {
        let rec = first_passage(&model, 1.0, 0.0, Direction::Down, 1e4, &mut rng);
        if rec.censored {
            continue;
        }
        assert!(rec.overshoot <= 0.0);
        m.push(rec.overshoot);
    }
    // Laplace jumps of scale 0.5: the undershoot is at most an exponential tail.
    assert!(m.mean() > -0.5 && m.variance() < 0.5, "mean {} var {}", m.mean(), m.variance());
}

#[test]
fn brownian_exit_is_gamblers_ruin() {
    let model = LevyModel::brownian(1.0).unwrap();
    let mut rng = stream(7, 0, Purpose::Motion);
    let n = 200_000;
    let up = (0..n).filter(|_| exit_interval(&model, 0.3, 0.0, 1.0, 10, &mut rng).upward).count();
    let p = up as f64 / n as f64;
    assert!((p - 0.3).abs() < 4.0 * (0.21 / n as f64).sqrt(), "{p}");
}

#[test]
fn exit_position_is_a_stopped_martingale() {
    let model = reference_jd();
    let mut rng = stream(8, 0, Purpose::Motion);
    let mut m = Moments::default();
    for _ in 0..100_000 {
        let rec = exit_interval(&model, 1.0, 0.0, 4.0, 1_000_000, &mut rng);
        assert!(!rec.censored);
        assert!(rec.position <= 0.0 || rec.position >= 4.0);
        assert_eq!(rec.upward, rec.position >= 4.0);
        m.push(rec.position);
    }
    assert!((m.mean() - 1.0).abs() < 4.0 * m.std_err(), "{} ± {}", m.mean(), m.std_err());
}

#[test]
fn walk_on_spheres_matches_time_stepping() {
    // Exact segments detect a crossing between steps, so the stepped walk has
    // no discretization bias either.
    let model = reference_jd();
    let n = 40_000;
    let mut rng = stream(9, 0, Purpose::Motion);
    let wos = (0..n).filter(|_| exit_interval(&model, 1.0, 0.0, 3.0, 1_000_000, &mut rng).upward).count();
    let mut rng = stream(9, 1, Purpose::Motion);
    let (mut stepped, mut ambiguous) = (0, 0);
    for _ in 0..n {
        let mut x = 1.0;
        loop {
            let s = sample_segment(&model, x, 0.05, &mut rng);
            if s.min <= 0.0 && s.max >= 3.0 {
                // Both ends crossed within one step; the order is unknown.
                ambiguous += 1;
                break;
            }
            if s.min <= 0.0 {
                break;
            }
            if s.max >= 3.0 {
                stepped += 1;
                break;
            }
            x = s.end;
        }
    }
    assert!(ambiguous < n / 1000, "{ambiguous}");
    let (a, b) = (wos as f64 / n as f64, stepped as f64 / (n - ambiguous) as f64);
    let se = ((a * (1.0 - a) + b * (1.0 - b)) / n as f64).sqrt();
    assert!((a - b).abs() < 4.0 * se, "{a} vs {b}");
}

#[test]
fn renewal_function_is_identity_for_brownian() {
    let model = LevyModel::brownian(1.0).unwrap();
    let r = renewal_r(&model, 2.0, 10, &opts(0)).unwrap();
    assert_eq!(r.value, 2.0);
    assert_eq!(r.std_err, 0.0);
}

#[test]
fn renewal_function_of_jump_model_is_affine_above_identity() {
    let model = reference_jd();
    let r0 = renewal_r(&model, 0.0, 20_000, &opts(10)).unwrap();
    assert!(r0.value >= 0.0);
    let mut ratios = Vec::new();
    for (k, x) in [1.0, 4.0, 16.0].into_iter().enumerate() {
        let r = renewal_r(&model, x, 20_000, &opts(11 + k as u64)).unwrap();
        assert!(r.value >= x - 4.0 * r.std_err, "R({x}) = {} ± {}", r.value, r.std_err);
        // The offset R(x) − x settles to a constant.
        assert!((r.value - x - 0.09).abs() < 0.05, "R({x}) − x = {}", r.value - x);
        ratios.push(r.value / x);
    }
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

#[test]
fn renewal_function_is_harmonic_for_the_killed_motion() {
    let bm = harmonicity_residual(&LevyModel::brownian(1.0).unwrap(), 5.0, 2.0, 200_000, &opts(20)).unwrap();
    assert!(bm.value.abs() < 4.0 * bm.std_err, "{bm:?}");
    let jd = harmonicity_residual(&reference_jd(), 5.0, 2.0, 80_000, &opts(21)).unwrap();
    assert!(jd.value.abs() < 4.0 * jd.std_err, "{jd:?}");
}

#[test]
fn brownian_exit_asymptotic_is_exact_at_every_scale() {
    let model = LevyModel::brownian(1.0).unwrap();
    let rows = exit_up_asymptotic(&model, 0.3, 1.0, &[2.0, 10.0, 100.0], 400_000, &opts(30)).unwrap();
    for (x, est) in rows {
        assert!((est.value - 0.3).abs() < 3.0 * est.std_err, "x={x}: {est:?}");
    }
    let rows = exit_up_asymptotic(&model, 0.5, 2.0, &[5.0], 400_000, &opts(31)).unwrap();
    assert!((rows[0].1.value - 0.25).abs() < 3.0 * rows[0].1.std_err);
}

#[test]
fn jump_exit_asymptotic_approaches_renewal_value() {
    let model = reference_jd();
    let r1 = renewal_r(&model, 1.0, 40_000, &opts(40)).unwrap();
    let rows = exit_up_asymptotic(&model, 1.0, 1.0, &[50.0], 200_000, &opts(41)).unwrap();
    let est = rows[0].1;
    let se = (est.std_err.powi(2) + r1.std_err.powi(2)).sqrt();
    assert!((est.value - r1.value).abs() < 4.0 * se, "{est:?} vs R(1) = {r1:?}");
}

#[test]
fn killed_functional_matches_reflection_formulas() {
    let model = LevyModel::brownian(1.0).unwrap();
    let (y, t): (f64, f64) = (1.0, 4.0);
    let zero = killed_clt_functional(&model, y, t, |_| 0.0, 1000, &opts(50)).unwrap();
    assert_eq!(zero.value, 0.0);

    let n = 400_000;
    let one = killed_clt_functional(&model, y, t, |_| 1.0, n, &opts(51)).unwrap();
    let oracle = t.sqrt() * (2.0 * phi(y / t.sqrt()) - 1.0);
    assert!((one.value - oracle).abs() < 4.0 * one.std_err, "{one:?} vs {oracle}");

    // E_y[ξ_t > b; τ > t] = Φ((y − b)/√t) − Φ((−y − b)/√t) with b = a√t.
    let a = 1.2;
    let b = a * t.sqrt();
    let ind = killed_clt_functional(&model, y, t, |u| if u > a { 1.0 } else { 0.0 }, n, &opts(52)).unwrap();
    let oracle = t.sqrt() * (phi((y - b) / t.sqrt()) - phi((-y - b) / t.sqrt()));
    assert!((ind.value - oracle).abs() < 4.0 * ind.std_err, "{ind:?} vs {oracle}");
}

#[test]
fn killed_functional_tends_to_rayleigh_mean() {
    let model = LevyModel::brownian(1.0).unwrap();
    let est = killed_clt_functional(&model, 1.0, 400.0, |_| 1.0, 400_000, &opts(53)).unwrap();
    let oracle = 2.0 / (2.0 * std::f64::consts::PI).sqrt();
    assert!((est.value - oracle).abs() < 4.0 * est.std_err, "{est:?}");
}

#[test]
fn invalid_arguments_are_rejected() {
    let model = LevyModel::brownian(1.0).unwrap();
    assert!(renewal_r(&model, -1.0, 10, &opts(0)).is_err());
    assert!(harmonicity_residual(&model, 0.0, 1.0, 10, &opts(0)).is_err());
    assert!(exit_up_asymptotic(&model, 1.0, 0.0, &[1.0], 10, &opts(0)).is_err());
    assert!(killed_clt_functional(&model, 1.0, 0.0, |_| 1.0, 10, &opts(0)).is_err());
    assert!(LevyModel::brownian(0.0).is_err());
    assert!(LevyModel::jump_diffusion(1.0, 1.0, JumpLaw::StudentT { dof: 2.0, scale: 1.0 }).is_err());
}
