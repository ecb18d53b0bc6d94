//! Acceptance criteria as runnable checks.
//!
//! Each criterion compares a Monte Carlo or numerical result against an
//! independent oracle with a fixed tolerance and reports the measured value,
//! the oracle, the tolerance and a pass flag. Replica counts are multiplied
//! by [`VerifyConfig::scale`]; the tolerances are not.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ensemble::fold_replicas;
use crate::estimators::{
    fit_exponent, max_tail, plateau, survival_tail, yaglom_empirical, Ensemble, Merge, Moments, Statistic, TailEstimate,
    XMode, YMode,
};
use crate::levy_motion::{exit_up_asymptotic, harmonicity_residual, killed_clt_functional, renewal_r, JumpLaw, LevyModel, McOptions};
use crate::limit_solvers::{
    gw_survival, shoot_k, shoot_k_on, solve_semilinear, solve_v_infinity, stationary_residual, yaglom_max_curve, GridParams,
};
use crate::numerics::integrate;
use crate::offspring::{make_stable_tail, BranchingSpec};
use crate::particle_system::{simulate_replica, SimOptions};

pub const GW_TOL: f64 = 1e-8;
pub const GW_RUNTIME_S: f64 = 1.0;
pub const FAR_FIELD_TOL: f64 = 1e-3;
pub const FAR_FIELD_RUNTIME_S: f64 = 60.0;
/// Residual bound as a multiple of `h²`.
pub const RESIDUAL_FACTOR: f64 = 10.0;
pub const RESIDUAL_H: f64 = 0.01;
pub const CLT_SE: f64 = 4.0;
pub const CLT_RUNTIME_S: f64 = 120.0;
pub const EXIT_SE: f64 = 3.0;
pub const SURVIVAL_SE: f64 = 3.0;
pub const SURVIVAL_REL: f64 = 0.10;
pub const SURVIVAL_RUNTIME_S: f64 = 1800.0;
pub const EXPONENT_TOL: f64 = 0.15;
pub const RATIO_SE: f64 = 3.0;
pub const THETA_QUAD_REL: f64 = 1e-3;
pub const MAX_TAIL_REL: f64 = 0.15;
pub const SCALED_MAX_REL: f64 = 0.15;
pub const YAGLOM_KS: f64 = 0.05;
pub const YAGLOM_SURVIVORS: u64 = 10_000;
pub const FIRST_INTEGRAL_TOL: f64 = 1e-8;
pub const HARMONICITY_SE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Multiplier on every replica count.
    pub scale: f64,
    pub threads: usize,
    /// Criteria to run; all when empty.
    pub only: Vec<u8>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { seed: 20_240_601, scale: 1.0, threads: crate::ensemble::default_threads(), only: Vec::new() }
    }
}

impl VerifyConfig {
    fn replicas(&self, full: u64) -> u64 {
        ((full as f64 * self.scale).round() as u64).max(1000)
    }

    fn seed_for(&self, id: u8) -> u64 {
        self.seed.wrapping_add(1_000_003 * id as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub measured: f64,
    pub oracle: f64,
    pub tolerance: String,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {} | {} | measured {} vs oracle {} | tolerance {} | {} | {:.1}s",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            number(self.measured),
            number(self.oracle),
            self.tolerance,
            self.detail,
            self.seconds
        )
    }
}

fn number(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        format!("{x:.6}")
    }
}

pub const CRITERIA: [u8; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

/// Runs the selected criteria in order.
pub fn run_all(cfg: &VerifyConfig) -> Vec<CriterionReport> {
    CRITERIA.iter().filter(|id| cfg.only.is_empty() || cfg.only.contains(id)).map(|&id| run_criterion(id, cfg)).collect()
}

pub fn run_criterion(id: u8, cfg: &VerifyConfig) -> CriterionReport {
    let start = Instant::now();
    let (title, result) = match id {
        1 => ("survival ODE closed form", gw_closed_form()),
        2 => ("extinction far field", far_field()),
        3 => ("singular profile residual", singular_residual()),
        4 => ("killed endpoint limit", killed_clt(cfg)),
        5 => ("exit asymptotic", exit_asymptotic(cfg)),
        6 => ("scaled-start survival", scaled_survival(cfg)),
        7 => ("fixed-start survival structure", fixed_survival(cfg)),
        8 => ("maximum tail constant", max_constant(cfg)),
        9 => ("scaled-start maximum", scaled_max(cfg)),
        10 => ("conditional maximum law", yaglom(cfg)),
        11 => ("invariant suites", invariants(cfg)),
        _ => ("unknown", Err(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let mut report = match result {
        Ok(r) => r,
        Err(e) => Outcome { passed: false, measured: f64::NAN, oracle: f64::NAN, tolerance: "-".into(), detail: format!("error: {e}") },
    };
    if let Some(limit) = runtime_limit(id) {
        if seconds > limit {
            report.passed = false;
            report.detail.push_str(&format!("; runtime {seconds:.1}s over {limit}s"));
        }
    }
    CriterionReport {
        id,
        title: title.into(),
        passed: report.passed,
        measured: report.measured,
        oracle: report.oracle,
        tolerance: report.tolerance,
        detail: report.detail,
        seconds,
    }
}

fn runtime_limit(id: u8) -> Option<f64> {
    match id {
        1 => Some(GW_RUNTIME_S),
        2 => Some(FAR_FIELD_RUNTIME_S),
        4 => Some(CLT_RUNTIME_S),
        6 => Some(SURVIVAL_RUNTIME_S),
        _ => None,
    }
}

struct Outcome {
    passed: bool,
    measured: f64,
    oracle: f64,
    tolerance: String,
    detail: String,
}

type Check = Result<Outcome, String>;

fn flagship() -> (BranchingSpec, LevyModel) {
    (BranchingSpec::binary(), LevyModel::brownian(1.0).expect("valid variance"))
}

/// Jump-diffusion used wherever overshoots matter.
pub fn reference_jump_diffusion() -> LevyModel {
    LevyModel::jump_diffusion(1.0, 1.0, JumpLaw::Laplace { scale: 0.5 }).expect("valid model")
}

/// Stable-tail branching spec with `α = 1.5`.
pub fn reference_stable_spec() -> BranchingSpec {
    BranchingSpec::new(make_stable_tail(1.5, 0.5).expect("feasible scale"), 1.0).expect("valid rate")
}

fn err<E: fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gw_closed_form() -> Check {
    let spec = BranchingSpec::binary();
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for t in [1.0, 10.0, 100.0] {
        let u = gw_survival(&spec, t).map_err(err)?;
        let exact = 2.0 / (2.0 + t);
        worst = worst.max((u - exact).abs());
        detail.push(format!("u({t})={u:.10}"));
    }
    Ok(Outcome { passed: worst < GW_TOL, measured: worst, oracle: 0.0, tolerance: format!("abs error < {GW_TOL:e}"), detail: detail.join(", ") })
}

fn far_field() -> Check {
    let stable = reference_stable_spec();
    let cases = [(2.0, 0.5), (1.5, stable.mechanism_constant())];
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for (alpha, c) in cases {
        let pde = solve_v_infinity(alpha, c, 1.0, 1.0, &GridParams::default()).map_err(err)?;
        let v = pde.at(1.0, 0.9 * pde.y_max).map_err(err)?;
        let exact = ((alpha - 1.0) * c).powf(-1.0 / (alpha - 1.0));
        worst = worst.max((v - exact).abs());
        detail.push(format!("alpha={alpha}: {v:.6} vs {exact:.6}"));
    }
    Ok(Outcome {
        passed: worst < FAR_FIELD_TOL,
        measured: worst,
        oracle: 0.0,
        tolerance: format!("abs error < {FAR_FIELD_TOL:e}"),
        detail: detail.join(", "),
    })
}

fn singular_residual() -> Check {
    let h = RESIDUAL_H;
    let residual = stationary_residual(2.0, 0.5, 1.0, |y| 6.0 / (1.0 - y).powi(2), h, 0.0, 0.9).map_err(err)?;
    let bound = RESIDUAL_FACTOR * h * h;
    Ok(Outcome {
        passed: residual < bound,
        measured: residual,
        oracle: 0.0,
        tolerance: format!("sup residual < {RESIDUAL_FACTOR}*h^2 = {bound:e}"),
        detail: format!("h={h}, y in [0, 0.9]"),
    })
}

fn killed_clt(cfg: &VerifyConfig) -> Check {
    let model = LevyModel::brownian(1.0).map_err(err)?;
    let opts = McOptions { seed: cfg.seed_for(4), threads: cfg.threads, ..Default::default() };
    let n = cfg.replicas(1_000_000);
    let est = killed_clt_functional(&model, 1.0, 400.0, |_| 1.0, n, &opts).map_err(err)?;
    let oracle = 2.0 / (2.0 * std::f64::consts::PI).sqrt();
    let z = est.z_score(oracle);
    Ok(Outcome {
        passed: z.abs() <= CLT_SE,
        measured: est.value,
        oracle,
        tolerance: format!("{CLT_SE} SE"),
        detail: format!("se={:.2e}, z={z:.2}, n={n}", est.std_err),
    })
}

fn exit_asymptotic(cfg: &VerifyConfig) -> Check {
    let opts = McOptions { seed: cfg.seed_for(5), threads: cfg.threads, ..Default::default() };
    let brownian = LevyModel::brownian(1.0).map_err(err)?;
    let n = cfg.replicas(1_000_000);
    let xs = [2.0, 5.0, 10.0, 50.0, 100.0];
    let rows = exit_up_asymptotic(&brownian, 0.3, 1.0, &xs, n, &opts).map_err(err)?;
    let worst_z = rows.iter().map(|(_, e)| e.z_score(0.3).abs()).fold(0.0, f64::max);
    let jd = reference_jump_diffusion();
    let jd_opts = McOptions { seed: opts.seed.wrapping_add(1), ..opts };
    let jd_rows = exit_up_asymptotic(&jd, 1.0, 1.0, &[25.0, 50.0, 100.0], n, &jd_opts).map_err(err)?;
    let r1 = renewal_r(&jd, 1.0, n, &McOptions { seed: opts.seed.wrapping_add(2), ..opts }).map_err(err)?;
    let at_100 = jd_rows.last().expect("three levels").1;
    let pooled = (at_100.std_err.powi(2) + r1.std_err.powi(2)).sqrt();
    let z_jd = (at_100.value - r1.value) / pooled;
    let flat = plateau(&jd_rows.iter().map(|r| r.1).collect::<Vec<_>>()).is_ok();
    Ok(Outcome {
        passed: worst_z <= EXIT_SE && z_jd.abs() <= EXIT_SE,
        measured: at_100.value,
        oracle: r1.value,
        tolerance: format!("{EXIT_SE} SE"),
        detail: format!(
            "brownian worst |z|={worst_z:.2} over x={xs:?}; jump-diffusion x*P at 25/50/100 = {:.4}/{:.4}/{:.4}, R(1)={:.4}±{:.4}, z={z_jd:.2}, plateau {}",
            jd_rows[0].1.value,
            jd_rows[1].1.value,
            at_100.value,
            r1.value,
            r1.std_err,
            if flat { "flat" } else { "not flat" }
        ),
    })
}

fn flagship_ensemble(cfg: &VerifyConfig, id: u8, full: u64) -> Ensemble {
    let (spec, model) = flagship();
    let mut ens = Ensemble::new(spec, model, cfg.seed_for(id), cfg.replicas(full));
    ens.threads = cfg.threads;
    ens
}

/// `v_∞(1, 1)` for the binary Brownian system.
pub fn flagship_v_infinity_at_one() -> Result<f64, String> {
    solve_v_infinity(2.0, 0.5, 1.0, 1.0, &GridParams::default()).map_err(err)?.at(1.0, 1.0).map_err(err)
}

fn scaled_survival(cfg: &VerifyConfig) -> Check {
    let oracle = flagship_v_infinity_at_one()?;
    let ens = flagship_ensemble(cfg, 6, 10_000_000);
    let t = 200.0;
    let est = survival_tail(&ens, YMode::SqrtTScaled, 1.0, &[t]).map_err(err)?[0].scaled(t);
    let z = est.z_score(oracle);
    let rel = (est.value - oracle).abs() / oracle;
    Ok(Outcome {
        passed: z.abs() <= SURVIVAL_SE || rel <= SURVIVAL_REL,
        measured: est.value,
        oracle,
        tolerance: format!("{SURVIVAL_SE} SE or {}%", SURVIVAL_REL * 100.0),
        detail: format!("se={:.4}, z={z:.2}, rel={:.2}%, n={}", est.std_err, rel * 100.0, ens.replicas),
    })
}

fn fixed_survival(cfg: &VerifyConfig) -> Check {
    let ts = [25.0, 50.0, 100.0, 200.0];
    let mut slopes = Vec::new();
    let mut top = Vec::new();
    for (k, y) in [1.0, 2.0].into_iter().enumerate() {
        let mut ens = flagship_ensemble(cfg, 7, 1_000_000);
        ens.seed = ens.seed.wrapping_add(k as u64);
        let est = survival_tail(&ens, YMode::Fixed, y, &ts).map_err(err)?;
        let pts: Vec<(f64, f64, f64)> = ts.iter().zip(&est).map(|(&t, e)| (t, e.value, e.std_err)).collect();
        slopes.push(fit_exponent(&pts).map_err(err)?.slope);
        top.push(est[3].scaled(200f64.powf(1.5)));
    }
    let ratio = top[1].value / top[0].value;
    let ratio_se = ratio * ((top[1].std_err / top[1].value).powi(2) + (top[0].std_err / top[0].value).powi(2)).sqrt();
    let z = (ratio - 2.0) / ratio_se;
    let slope_ok = slopes.iter().all(|s| (s + 1.5).abs() <= EXPONENT_TOL);
    Ok(Outcome {
        passed: slope_ok && z.abs() <= RATIO_SE,
        measured: ratio,
        oracle: 2.0,
        tolerance: format!("slopes -1.5 ± {EXPONENT_TOL}, ratio within {RATIO_SE} pooled SE"),
        detail: format!("slopes y=1: {:.3}, y=2: {:.3}; ratio se={ratio_se:.3}, z={z:.2}", slopes[0], slopes[1]),
    })
}

/// `I³` with `I = ∫_0^∞ du / √(1 + (2/3)u³)`, computed by quadrature.
pub fn theta_quadrature_flagship() -> f64 {
    let head = |u: f64| 1.0 / (1.0 + 2.0 / 3.0 * u * u * u).sqrt();
    // On (1, ∞) substitute u = v^{-2}, which leaves a smooth integrand.
    let tail = |v: f64| 2.0 / (v.powi(6) + 2.0 / 3.0).sqrt();
    let i = integrate(&head, 0.0, 1.0, 1e-14) + integrate(&tail, 0.0, 1.0, 1e-14);
    i * i * i
}

fn max_constant(cfg: &VerifyConfig) -> Check {
    let theta = shoot_k(2.0, 0.5, 1.0, 1e-10).map_err(err)?.slope_at_0;
    let quad = theta_quadrature_flagship();
    let shoot_rel = (theta - quad).abs() / quad;
    let ens = flagship_ensemble(cfg, 8, 10_000_000);
    let xs = [10.0, 15.0, 20.0, 25.0, 30.0];
    let est: Vec<TailEstimate> = max_tail(&ens, XMode::Fixed, 1.0, &xs)
        .map_err(err)?
        .into_iter()
        .zip(xs)
        .map(|(e, x)| e.scaled(x * x * x))
        .collect();
    let at_30 = est[4];
    let rel = (at_30.value - theta).abs() / theta;
    let flat = match plateau(&est) {
        Ok(p) => format!("plateau {:.3}±{:.3}", p.value, p.std_err),
        Err(e) => format!("no plateau ({e})"),
    };
    let curve: Vec<String> = xs.iter().zip(&est).map(|(x, e)| format!("{x}:{:.2}", e.value)).collect();
    Ok(Outcome {
        passed: shoot_rel <= THETA_QUAD_REL && rel <= MAX_TAIL_REL,
        measured: at_30.value,
        oracle: theta,
        tolerance: format!("shooter vs quadrature {}%, MC within {}%", THETA_QUAD_REL * 100.0, MAX_TAIL_REL * 100.0),
        detail: format!(
            "theta={theta:.8}, I^3={quad:.8} (rel {shoot_rel:.1e}); x^3 P at x = {}; se at 30 {:.3}; rel {:.1}%; {flat}; n={}",
            curve.join(", "),
            at_30.std_err,
            rel * 100.0,
            ens.replicas
        ),
    })
}

fn scaled_max(cfg: &VerifyConfig) -> Check {
    let oracle = shoot_k(2.0, 0.5, 1.0, 1e-10).map_err(err)?.value_at(0.5).map_err(err)?;
    let ens = flagship_ensemble(cfg, 9, 300_000);
    let xs = [25.0, 50.0, 100.0];
    let est: Vec<TailEstimate> =
        max_tail(&ens, XMode::XScaled, 0.5, &xs).map_err(err)?.into_iter().zip(xs).map(|(e, x)| e.scaled(x * x)).collect();
    let (measured, how) = match plateau(&est) {
        Ok(p) => (p.value, "plateau of the three levels"),
        Err(_) => (est[2].value, "largest level (no plateau)"),
    };
    let rel = (measured - oracle).abs() / oracle;
    Ok(Outcome {
        passed: rel <= SCALED_MAX_REL,
        measured,
        oracle,
        tolerance: format!("{}%", SCALED_MAX_REL * 100.0),
        detail: format!(
            "x^2 P at 25/50/100 = {:.3}/{:.3}/{:.3} (se at 100 {:.3}); using {how}; rel {:.1}%; n={} per level",
            est[0].value,
            est[1].value,
            est[2].value,
            est[2].std_err,
            rel * 100.0,
            ens.replicas
        ),
    })
}

/// Limiting CDF of the rescaled maximum on `0.1, 0.2, …, 6`, for the
/// binary Brownian system started at `√t`.
pub fn flagship_yaglom_curve() -> Result<Vec<(f64, f64)>, String> {
    let zs: Vec<f64> = (1..=60).map(|i| i as f64 * 0.1).collect();
    let grid = GridParams { h: 0.01, ..Default::default() };
    yaglom_max_curve(2.0, 0.5, 1.0, 1.0, &zs, &grid).map_err(err)
}

/// Piecewise-linear CDF through `(0, 0)` and the curve points, constant
/// beyond the last point.
pub fn curve_cdf(curve: &[(f64, f64)], z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    let mut prev = (0.0, 0.0);
    for &(zi, fi) in curve {
        if z <= zi {
            let w = (z - prev.0) / (zi - prev.0);
            return prev.1 + w * (fi - prev.1);
        }
        prev = (zi, fi);
    }
    prev.1
}

fn yaglom(cfg: &VerifyConfig) -> Check {
    let curve = flagship_yaglom_curve()?;
    let ens = flagship_ensemble(cfg, 10, 3_000_000);
    let t = 400.0;
    let law = yaglom_empirical(&ens, t, 1.0, &[Statistic::Max]).map_err(err)?.remove(0);
    let ks = law.ks_against(|z| curve_cdf(&curve, z));
    let enough = law.survivors() >= YAGLOM_SURVIVORS;
    Ok(Outcome {
        passed: enough && ks.statistic < YAGLOM_KS,
        measured: ks.statistic,
        oracle: 0.0,
        tolerance: format!("KS distance < {YAGLOM_KS} with >= {YAGLOM_SURVIVORS} survivors"),
        detail: format!("survivors={} of {}, KS p={:.3}", law.survivors(), law.replicas, ks.p_value),
    })
}

fn invariants(cfg: &VerifyConfig) -> Check {
    let mut failures = Vec::new();
    let mut notes = Vec::new();

    // Mechanism nonnegative and convex on [0, 1].
    for spec in [BranchingSpec::binary(), reference_stable_spec()] {
        let vals: Vec<f64> = (0..=200).map(|i| spec.phi(i as f64 / 200.0)).collect::<Result<_, _>>().map_err(err)?;
        if vals.iter().any(|&v| v < 0.0) {
            failures.push(format!("phi negative for alpha={}", spec.alpha()));
        }
        if vals.windows(3).any(|w| w[0] - 2.0 * w[1] + w[2] < -1e-12) {
            failures.push(format!("phi not convex for alpha={}", spec.alpha()));
        }
    }

    // Blow-up profile rescaling and first-integral conservation.
    let base = shoot_k(2.0, 0.5, 1.0, 1e-10).map_err(err)?;
    let z = 0.5;
    let half = shoot_k_on(2.0, 0.5, 1.0, z, 1e-10, 100).map_err(err)?;
    let mut scale_err: f64 = 0.0;
    for (y, k) in half.grid.iter().zip(&half.k_values).skip(1) {
        let want = z.powi(-2) * base.value_at(y / z).map_err(err)?;
        scale_err = scale_err.max((k - want).abs() / want);
    }
    notes.push(format!("K rescaling rel err {scale_err:.1e}"));
    if scale_err > 1e-6 {
        failures.push(format!("K rescaling error {scale_err:e}"));
    }
    let fi = base.first_integral_violation.max(half.first_integral_violation);
    notes.push(format!("first integral {fi:.1e}"));
    if fi >= FIRST_INTEGRAL_TOL {
        failures.push(format!("first integral violation {fi:e}"));
    }

    // Harmonicity of the renewal function.
    let n = cfg.replicas(200_000);
    for model in [LevyModel::brownian(1.0).map_err(err)?, reference_jump_diffusion()] {
        for x in [0.5, 1.0, 2.0] {
            let opts = McOptions { seed: cfg.seed_for(11).wrapping_add((10.0 * x) as u64), threads: cfg.threads, ..Default::default() };
            let r = harmonicity_residual(&model, x, 1.0, n, &opts).map_err(err)?;
            if r.value.abs() > HARMONICITY_SE * r.std_err {
                failures.push(format!("harmonicity residual {:.4} ({:.1} SE) at x={x} for {model}", r.value, r.value / r.std_err));
            }
        }
    }

    // Comparison principle on nested step data.
    let grid = GridParams { h: 0.02, y_max: Some(6.0), output_times: vec![0.1, 0.25], ..Default::default() };
    for (lo, hi, a, b) in [(0.5, 1.0, 1.0, 3.0), (1.0, 2.0, 0.3, 0.8), (0.2, 4.0, 5.0, 20.0)] {
        let f = move |y: f64| if (lo..hi).contains(&y) { a } else { 0.0 };
        let g = move |y: f64| if (0.5 * lo..2.0 * hi).contains(&y) { b } else { 0.0 };
        let sf = solve_semilinear(f, 2.0, 0.5, 1.0, 0.5, &grid).map_err(err)?;
        let sg = solve_semilinear(g, 2.0, 0.5, 1.0, 0.5, &grid).map_err(err)?;
        let broken = sf.values.iter().zip(&sg.values).any(|(p, q)| p.iter().zip(q).any(|(u, v)| u > v));
        if broken {
            failures.push(format!("comparison principle fails for steps on [{lo}, {hi})"));
        }
    }

    // Determinism, thread independence and merge associativity.
    let (spec, model) = flagship();
    let opts = SimOptions { snapshot_times: vec![1.0, 5.0], ..Default::default() };
    for i in 0..50 {
        let a = simulate_replica(&spec, &model, 1.0, &opts, cfg.seed, i).map_err(err)?;
        let b = simulate_replica(&spec, &model, 1.0, &opts, cfg.seed, i).map_err(err)?;
        if a != b {
            failures.push(format!("replica {i} is not reproducible"));
            break;
        }
    }
    let mut ens = Ensemble::new(spec, model, cfg.seed, 20_000);
    ens.threads = 1;
    let serial = survival_tail(&ens, YMode::Fixed, 1.0, &[1.0, 10.0]).map_err(err)?;
    ens.threads = 3;
    let threaded = survival_tail(&ens, YMode::Fixed, 1.0, &[1.0, 10.0]).map_err(err)?;
    if serial != threaded {
        failures.push("survival estimates depend on the thread count".into());
    }
    let xs: Vec<f64> = (0..10_000).map(|i| ((i as f64) * 0.618_033_988_7).fract() * 1e3 - 3.0).collect();
    let whole = fold_replicas(xs.len() as u64, 1, Moments::default, |m, i| m.push(xs[i as usize]));
    let mut left = Moments::default();
    let mut right = Moments::default();
    for (i, &x) in xs.iter().enumerate() {
        if i % 3 == 0 { left.push(x) } else { right.push(x) }
    }
    right.merge_from(left);
    if whole != right {
        failures.push("moment merge depends on the partition".into());
    }

    Ok(Outcome {
        passed: failures.is_empty(),
        measured: failures.len() as f64,
        oracle: 0.0,
        tolerance: "zero violations".into(),
        detail: if failures.is_empty() { notes.join(", ") } else { failures.join("; ") },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_oracle_matches_known_digits() {
        assert!((theta_quadrature_flagship() - 33.082_209_460_263_4).abs() < 1e-8);
    }

    #[test]
    fn curve_cdf_interpolates_and_clamps() {
        let c = [(1.0, 0.5), (2.0, 0.9)];
        assert_eq!(curve_cdf(&c, -1.0), 0.0);
        assert!((curve_cdf(&c, 0.5) - 0.25).abs() < 1e-15);
        assert!((curve_cdf(&c, 1.5) - 0.7).abs() < 1e-15);
        assert_eq!(curve_cdf(&c, 9.0), 0.9);
    }
}
