use bkl_core::estimators::{fit_exponent, Moments};
use bkl_core::levy_motion::*;
use bkl_core::limit_solvers::{csbp_extinction, gw_survival, solve_semilinear, GridParams};
use bkl_core::offspring::{make_stable_tail, BranchingSpec, OffspringLaw};
use bkl_core::rng::{stream, Purpose};
use proptest::prelude::*;

/// Critical law on {0, 1, 2, 3}: `p0 = p2 + 2 p3`, `p1 = 1 − 2 p2 − 3 p3`.
fn finite_law() -> impl Strategy<Value = BranchingSpec> {
    (0.0..0.1f64, 0.01..0.3f64, 0.1..5.0f64).prop_map(|(p3, p2, beta)| {
        let law = OffspringLaw::critical_from_probabilities(vec![p2 + 2.0 * p3, 1.0 - 2.0 * p2 - 3.0 * p3, p2, p3]).unwrap();
        BranchingSpec::new(law, beta).unwrap()
    })
}

fn stable_law() -> impl Strategy<Value = BranchingSpec> {
    (1.1..1.95f64, 0.02..0.3f64, 0.1..5.0f64)
        .prop_filter_map("infeasible scale", |(a, s, beta)| Some(BranchingSpec::new(make_stable_tail(a, s).ok()?, beta).unwrap()))
}

fn any_spec() -> impl Strategy<Value = BranchingSpec> {
    prop_oneof![Just(BranchingSpec::binary()), finite_law(), stable_law()]
}

fn any_model() -> impl Strategy<Value = LevyModel> {
    prop_oneof![
        (0.1..4.0f64).prop_map(|s| LevyModel::brownian(s).unwrap()),
        (0.1..4.0f64, 0.0..3.0f64, 0.05..2.0f64)
            .prop_map(|(s, r, b)| LevyModel::jump_diffusion(s, r, JumpLaw::Laplace { scale: b }).unwrap()),
        (0.1..4.0f64, 0.0..3.0f64, 2.5..10.0f64)
            .prop_map(|(s, r, d)| LevyModel::jump_diffusion(s, r, JumpLaw::StudentT { dof: d, scale: 0.5 }).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mechanism_is_nonnegative_and_convex(spec in any_spec()) {
        prop_assert_eq!(spec.phi(0.0).unwrap(), 0.0);
        let vals: Vec<f64> = (0..=100).map(|i| spec.phi(i as f64 / 100.0).unwrap()).collect();
        prop_assert!(vals.iter().all(|&v| v >= 0.0));
        let scale = vals[100].max(1e-300);
        for w in vals.windows(3) {
            prop_assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-12 * scale, "{:?}", w);
        }
    }

    #[test]
    fn rescaled_mechanism_identities(spec in any_spec(), t in 1.0..1e6f64, v in 0.01..5.0f64, s in 0.1..10.0f64) {
        let phi_t = spec.phi_scaled(t, v).unwrap();
        let psi_t = spec.psi_scaled(t, v).unwrap();
        prop_assert!((phi_t - v * psi_t).abs() <= 1e-12 * phi_t.abs().max(1e-300));
        // φ^{(st)}(v) = s^{α/(α−1)} φ^{(t)}(v s^{−1/(α−1)}), inside the unit ball.
        let e = 1.0 / (spec.alpha() - 1.0);
        if v * (s * t).powf(-e) <= 1.0 && v * s.powf(-e) * t.powf(-e) <= 1.0 {
            let lhs = spec.phi_scaled(s * t, v).unwrap();
            let rhs = s.powf(spec.alpha() * e) * spec.phi_scaled(t, v * s.powf(-e)).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-300), "{} vs {}", lhs, rhs);
        }
    }

    #[test]
    fn moments_merge_is_exact(xs in prop::collection::vec(-1e6..1e6f64, 1..200), cut in 0usize..200) {
        let cut = cut.min(xs.len());
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let (mut a, mut b) = (Moments::default(), Moments::default());
        xs[..cut].iter().for_each(|&x| a.push(x));
        xs[cut..].iter().rev().for_each(|&x| b.push(x));
        let mut ab = a;
        ab.merge(&b);
        let mut ba = b;
        ba.merge(&a);
        prop_assert_eq!(ab, whole);
        prop_assert_eq!(ba, whole);
    }

    #[test]
    fn segment_extremes_are_ordered(model in any_model(), x0 in -5.0..5.0f64, dt in 1e-6..3.0f64, seed in any::<u64>()) {
        let mut rng = stream(seed, 0, Purpose::Motion);
        let s = sample_segment(&model, x0, dt, &mut rng);
        prop_assert!(s.min <= x0.min(s.end) && x0.max(s.end) <= s.max, "{:?}", s);
    }

    #[test]
    fn downward_passage_lands_below_the_level(model in any_model(), x0 in 0.1..5.0f64, seed in any::<u64>()) {
        let mut rng = stream(seed, 0, Purpose::Motion);
        let rec = first_passage(&model, x0, 0.0, Direction::Down, 1e3, &mut rng);
        prop_assert!(rec.overshoot <= 0.0);
        prop_assert!(rec.time >= 0.0 && rec.time <= 1e3);
        if model.is_continuous() && !rec.censored {
            prop_assert_eq!(rec.overshoot, 0.0);
        }
    }

    #[test]
    fn fit_recovers_noiseless_exponents(slope in -3.0..3.0f64, c in 0.01..100.0f64) {
        let pts: Vec<(f64, f64, f64)> = [1.0, 3.0, 10.0, 30.0, 100.0].iter().map(|&x: &f64| (x, c * x.powf(slope), 0.0)).collect();
        let fit = fit_exponent(&pts).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-10);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-9);
    }

    #[test]
    fn unkilled_survival_decreases(spec in any_spec(), t in 0.0..50.0f64, dt in 0.01..50.0f64) {
        let a = gw_survival(&spec, t).unwrap();
        let b = gw_survival(&spec, t + dt).unwrap();
        prop_assert!(b < a && b > 0.0 && a <= 1.0);
    }

    #[test]
    fn csbp_extinction_is_homogeneous(alpha in 1.05..2.0f64, c in 0.1..5.0f64, r in 0.01..100.0f64, k in 0.1..10.0f64) {
        let base = csbp_extinction(alpha, c, r, 1.0).unwrap();
        let scaled = csbp_extinction(alpha, c, k * r, 7.0).unwrap();
        let want = base * k.powf(-1.0 / (alpha - 1.0));
        prop_assert!((scaled - want).abs() <= 1e-12 * want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn larger_data_gives_larger_solutions(
        alpha in 1.2..2.0f64,
        lo in 0.0..2.0f64,
        bump in 0.0..3.0f64,
        centre in 0.5..3.0f64,
    ) {
        let grid = GridParams { h: 0.05, y_max: Some(8.0), ..Default::default() };
        let f = |y: f64| lo * (1.0 - (-y).exp());
        let g = |y: f64| f(y) + bump * (-(y - centre).powi(2)).exp();
        let a = solve_semilinear(f, alpha, 0.5, 1.0, 0.5, &grid).unwrap();
        let b = solve_semilinear(g, alpha, 0.5, 1.0, 0.5, &grid).unwrap();
        let (pa, pb) = (a.profile(0.5).unwrap(), b.profile(0.5).unwrap());
        for (x, y) in pa.iter().zip(pb) {
            prop_assert!(*x <= *y + 1e-12, "{} > {}", x, y);
        }
        // Bounded above by the space-homogeneous solution from sup g.
        let top = lo + bump;
        if top > 0.0 {
            let ceiling = (top.powf(1.0 - alpha) + (alpha - 1.0) * 0.5 * 0.5).powf(-1.0 / (alpha - 1.0));
            prop_assert!(pb.iter().all(|&v| v <= ceiling * (1.0 + 1e-9)));
        }
    }
}
