use bkl_core::estimators::*;
use bkl_core::levy_motion::LevyModel;
use bkl_core::offspring::BranchingSpec;

fn ensemble(seed: u64, n: u64) -> Ensemble {
    let mut ens = Ensemble::new(BranchingSpec::binary(), LevyModel::brownian(1.0).unwrap(), seed, n);
    ens.threads = 2;
    ens
}

#[test]
fn unkilled_survival_decays_like_one_over_t() {
    let ts = [25.0, 50.0, 100.0, 200.0, 400.0];
    let est = survival_tail(&ensemble(1, 40_000), YMode::Fixed, 1e6, &ts).unwrap();
    for (t, e) in ts.iter().zip(&est) {
        assert!(e.z_score(2.0 / (2.0 + t)).abs() < 4.0, "t={t}: {e:?}");
    }
    let pts: Vec<(f64, f64, f64)> = ts.iter().zip(&est).map(|(&t, e)| (t, e.value, e.std_err)).collect();
    let fit = fit_exponent(&pts).unwrap();
    assert!((fit.slope + 1.0).abs() < 0.1, "{fit:?}");
    assert!(fit.slope_ci.0 < fit.slope && fit.slope < fit.slope_ci.1);
}

#[test]
fn survival_and_maximum_curves_are_monotone() {
    let ens = ensemble(2, 20_000);
    let s = survival_tail(&ens, YMode::Fixed, 1.0, &[1.0, 4.0, 16.0, 64.0]).unwrap();
    assert!(s.windows(2).all(|w| w[1].value <= w[0].value), "{s:?}");
    let m = max_tail(&ens, XMode::Fixed, 1.0, &[2.0, 4.0, 8.0, 16.0]).unwrap();
    assert!(m.windows(2).all(|w| w[1].value <= w[0].value), "{m:?}");
    assert!(m.iter().all(|e| e.censored_fraction == 0.0));
}

#[test]
fn maximum_from_above_the_level_is_certain() {
    let m = max_tail(&ensemble(3, 100), XMode::Fixed, 5.0, &[1.0, 5.0]).unwrap();
    assert!(m.iter().all(|e| e.value == 1.0));
}

#[test]
fn scaled_maximum_needs_start_below_level() {
    let ens = ensemble(4, 10);
    assert!(matches!(max_tail(&ens, XMode::XScaled, 1.0, &[10.0]), Err(EstimatorError::InvalidInput(_))));
    assert!(matches!(survival_tail(&ens, YMode::Fixed, 0.0, &[1.0]), Err(EstimatorError::InvalidInput(_))));
}

#[test]
fn standard_error_shrinks_with_root_n() {
    let small = survival_tail(&ensemble(5, 20_000), YMode::Fixed, 1.0, &[4.0]).unwrap()[0];
    let large = survival_tail(&ensemble(6, 40_000), YMode::Fixed, 1.0, &[4.0]).unwrap()[0];
    let ratio = small.std_err / large.std_err;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.05, "{ratio}");
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let mut a = ensemble(7, 5000);
    a.threads = 1;
    let mut b = a.clone();
    b.threads = 3;
    let ts = [2.0, 8.0];
    assert_eq!(survival_tail(&a, YMode::SqrtTScaled, 1.0, &ts).unwrap(), survival_tail(&b, YMode::SqrtTScaled, 1.0, &ts).unwrap());
    let law_a = yaglom_empirical(&a, 4.0, 1.0, &[Statistic::Max, Statistic::Mass]).unwrap();
    let law_b = yaglom_empirical(&b, 4.0, 1.0, &[Statistic::Max, Statistic::Mass]).unwrap();
    assert_eq!(law_a, law_b);
}

#[test]
fn conditional_laws_are_positive_and_sorted() {
    let laws = yaglom_empirical(&ensemble(8, 20_000), 9.0, 1.0, &[Statistic::Max, Statistic::Mass]).unwrap();
    for law in &laws {
        assert!(law.survivors() > 100);
        assert!(law.values.windows(2).all(|w| w[0] <= w[1]));
        assert!(law.values.iter().all(|&v| v > 0.0));
        assert_eq!(law.cdf(f64::INFINITY), 1.0);
    }
    assert_eq!(laws[0].survivors(), laws[1].survivors());
}

#[test]
fn plateau_accepts_flat_tails_and_rejects_trends() {
    let e = |value: f64| TailEstimate { value, std_err: 0.1, n: 100, censored_fraction: 0.0 };
    let flat = plateau(&[e(0.0), e(2.0), e(2.05), e(1.95)]).unwrap();
    assert!((flat.value - 2.0).abs() < 1e-12);
    assert!((flat.std_err - 0.1 / 3f64.sqrt()).abs() < 1e-12);
    assert!(matches!(plateau(&[e(1.0), e(1.5), e(2.0)]), Err(EstimatorError::NotConverged { .. })));
}

#[test]
fn noiseless_power_law_fit_is_exact() {
    let pts: Vec<(f64, f64, f64)> = [1.0, 2.0, 4.0, 8.0, 16.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(-1.5), 0.0)).collect();
    let fit = fit_exponent(&pts).unwrap();
    assert!((fit.slope + 1.5).abs() < 1e-12 && (fit.intercept - 3f64.ln()).abs() < 1e-12);
    assert!(fit_exponent(&pts[..3]).is_err());
}
