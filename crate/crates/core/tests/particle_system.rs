use bkl_core::estimators::Moments;
use bkl_core::levy_motion::{JumpLaw, LevyModel};
use bkl_core::offspring::{make_stable_tail, BranchingSpec, OffspringLaw};
use bkl_core::particle_system::*;
use bkl_core::stats::ks_one_sample;
use statrs::distribution::{ContinuousCDF, Normal};

fn bm() -> LevyModel {
    LevyModel::brownian(1.0).unwrap()
}

fn runs(spec: &BranchingSpec, model: &LevyModel, y0: f64, opts: &SimOptions, seed: u64, n: u64) -> Vec<SimOutcome> {
    (0..n).map(|i| simulate_replica(spec, model, y0, opts, seed, i).unwrap()).collect()
}

fn survival_fraction(outs: &[SimOutcome], t: f64) -> f64 {
    outs.iter().filter(|o| o.survives(t).expect("decided")).count() as f64 / outs.len() as f64
}

#[test]
fn far_start_reproduces_unkilled_survival() {
    let spec = BranchingSpec::binary();
    let opts = SimOptions { horizon: 100.0, track_max: false, ..Default::default() };
    let n = 20_000;
    let outs = runs(&spec, &bm(), 1e6, &opts, 1, n);
    for t in [1.0, 5.0, 20.0, 100.0] {
        let p = survival_fraction(&outs, t);
        let exact = 2.0 / (2.0 + t);
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((p - exact).abs() < 4.0 * se, "t={t}: {p} vs {exact}");
    }
    // Extinction times below the horizon follow the conditioned closed form.
    let times: Vec<f64> = outs.iter().filter(|o| !o.censored).map(|o| o.extinction_time).collect();
    let top = 1.0 - 2.0 / 102.0;
    let ks = ks_one_sample(&times, |t| (1.0 - 2.0 / (2.0 + t)) / top);
    assert!(ks.p_value > 0.001, "{ks:?}");
}

#[test]
fn start_next_to_the_boundary_dies_at_once() {
    let opts = SimOptions { horizon: 1.0, track_max: false, ..Default::default() };
    let outs = runs(&BranchingSpec::binary(), &bm(), 1e-6, &opts, 2, 10_000);
    let alive = outs.iter().filter(|o| o.survives(1.0) == Some(true)).count();
    assert!(alive <= 2, "{alive}");
}

#[test]
fn sterile_law_is_killed_motion_with_exponential_clock() {
    let spec = BranchingSpec::new(OffspringLaw::from_probabilities(vec![1.0]).unwrap(), 0.5).unwrap();
    let (y, t): (f64, f64) = (1.0, 2.0);
    let opts = SimOptions { horizon: t, track_max: false, ..Default::default() };
    let n = 100_000;
    let outs = runs(&spec, &bm(), y, &opts, 3, n);
    let p = survival_fraction(&outs, t);
    let exact = (-0.5 * t).exp() * (2.0 * Normal::standard().cdf(y / t.sqrt()) - 1.0);
    let se = (exact * (1.0 - exact) / n as f64).sqrt();
    assert!((p - exact).abs() < 4.0 * se, "{p} vs {exact}");
}

#[test]
fn killed_and_stopped_constructions_agree() {
    for (spec, model) in [
        (BranchingSpec::binary(), bm()),
        (
            BranchingSpec::new(make_stable_tail(1.5, 0.5).unwrap(), 1.0).unwrap(),
            LevyModel::jump_diffusion(1.0, 1.0, JumpLaw::Laplace { scale: 0.5 }).unwrap(),
        ),
    ] {
        let rep = stopped_motion_equivalence_test(&spec, &model, 1.0, 2.0, 20_000, 4, 2).unwrap();
        assert!(rep.alive_count.p_value > 0.001, "{rep:?}");
        assert!(rep.max_at_t.p_value > 0.001, "{rep:?}");
    }
}

#[test]
fn mean_population_is_conserved_without_killing() {
    let t = 3.0;
    let opts = SimOptions { snapshot_times: vec![t], horizon: t, track_max: false, ..Default::default() };
    let mut m = Moments::default();
    for out in runs(&BranchingSpec::binary(), &bm(), 1e6, &opts, 5, 40_000) {
        m.push(out.snapshot(t).unwrap().positions.len() as f64);
    }
    assert!((m.mean() - 1.0).abs() < 4.0 * m.std_err(), "{} ± {}", m.mean(), m.std_err());
}

#[test]
fn snapshot_maximum_never_exceeds_all_time_maximum() {
    let opts = SimOptions { snapshot_times: vec![0.5, 2.0, 8.0], horizon: 8.0, ..Default::default() };
    for out in runs(&BranchingSpec::binary(), &bm(), 1.0, &opts, 6, 5000) {
        assert!(out.max_all_time >= 1.0);
        for snap in &out.snapshots {
            if let Some(m) = snap.max() {
                assert!(m <= out.max_all_time && m > 0.0, "{m} vs {}", out.max_all_time);
            }
        }
    }
}

#[test]
fn whole_tree_outlives_the_positive_population() {
    let opts = SimOptions { horizon: 50.0, track_max: false, motion: Motion::Stopped, ..Default::default() };
    let mut open = 0;
    for out in runs(&BranchingSpec::binary(), &bm(), 1.0, &opts, 7, 5000) {
        // Unknown when the frozen part is still alive at the horizon.
        let Some(tree) = out.tree_extinction_time else {
            open += 1;
            continue;
        };
        assert!(tree >= out.extinction_time, "{tree} < {}", out.extinction_time);
        assert!(tree > 0.0);
    }
    // About 2/52 of critical binary trees are alive at time 50.
    assert!(open < 400, "{open}");
}

#[test]
fn survival_increases_with_start_position() {
    let t = 10.0;
    let opts = SimOptions { horizon: t, track_max: false, ..Default::default() };
    let n = 40_000;
    let p: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|&y| survival_fraction(&runs(&BranchingSpec::binary(), &bm(), y, &opts, 8, n), t)).collect();
    let se = (p[2] / n as f64).sqrt();
    assert!(p[1] - p[0] > 4.0 * se && p[2] - p[1] > 4.0 * se, "{p:?}");
}

#[test]
fn bad_inputs_are_rejected() {
    let spec = BranchingSpec::binary();
    let err = |y0: f64, opts: SimOptions| simulate_replica(&spec, &bm(), y0, &opts, 0, 0).is_err();
    assert!(err(0.0, SimOptions::default()));
    assert!(err(-1.0, SimOptions::default()));
    assert!(err(1.0, SimOptions { horizon: 0.0, ..Default::default() }));
    assert!(err(1.0, SimOptions { snapshot_times: vec![2.0], horizon: 1.0, ..Default::default() }));
}

#[test]
fn event_cap_reports_partial_run() {
    let opts = SimOptions { max_events: 3, horizon: 1e3, ..Default::default() };
    let spec = BranchingSpec::binary();
    let capped = (0..200).map(|i| simulate_replica(&spec, &bm(), 1e3, &opts, 9, i)).find_map(|r| match r {
        Err(SimError::CapExceeded { cap, partial, .. }) => Some((cap, partial)),
        _ => None,
    });
    let (cap, partial) = capped.expect("some replica exceeds three events");
    assert_eq!(cap, 3);
    assert!(partial.censored);
}
