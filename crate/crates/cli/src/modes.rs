use bkl_core::ensemble::fold_replicas;
use bkl_core::estimators::{
    fit_exponent, max_tail, survival_tail, yaglom_empirical, Ensemble, Merge, Statistic, TailEstimate, XMode, YMode,
};
use bkl_core::levy_motion::{renewal_r, McOptions};
use bkl_core::limit_solvers::{
    constant_c0inf, gw_survival, shoot_k_on, slope_by_quadrature, solve_blowup, solve_semilinear, solve_v_infinity,
    yaglom_max_curve, GridParams, PdeSolution,
};
use bkl_core::particle_system::{simulate_replica, Motion, ReplicaRecord, SimError, SimOptions};
use bkl_core::verification::{run_all, CriterionReport, VerifyConfig};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Mode};
use crate::error::CliError;
use crate::output::{num, Meta, OutDir};

pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub hash: String,
    pub threads: usize,
}

impl Context<'_> {
    fn meta(&self, replicas: Option<u64>, provenance: Vec<String>) -> Meta {
        Meta {
            tool: crate::output::TOOL,
            version: crate::output::VERSION,
            mode: self.cfg.mode.name(),
            config_hash: self.hash.clone(),
            seed: self.cfg.seed,
            replica_range: replicas.map_or_else(|| "none".into(), |n| format!("0..{n}")),
            provenance,
        }
    }

    fn replicas(&self) -> Result<u64, CliError> {
        match self.cfg.replicas {
            0 => Err(CliError::Config("replicas must be positive".into())),
            n => Ok(n),
        }
    }

    fn ensemble(&self) -> Result<Ensemble, CliError> {
        let mut ens = Ensemble::new(self.cfg.spec.clone(), self.cfg.model, self.cfg.seed, self.replicas()?);
        ens.threads = self.threads;
        Ok(ens)
    }

    fn mechanism(&self) -> (f64, f64, f64) {
        (self.cfg.spec.alpha(), self.cfg.spec.mechanism_constant(), self.cfg.model.sigma2())
    }
}

/// What a mode reports back besides its files.
#[derive(Debug, Default)]
pub struct Report {
    pub failed_criteria: Vec<u8>,
    pub timings: Vec<(String, f64)>,
}

pub fn dispatch(mode: Mode, ctx: &Context, out: &mut OutDir) -> Result<Report, CliError> {
    match mode {
        Mode::Simulate => simulate(ctx, out),
        Mode::Ode => ode(ctx, out),
        Mode::Pde => pde(ctx, out),
        Mode::Shoot => shoot(ctx, out),
        Mode::Estimate => estimate(ctx, out),
        Mode::Verify => verify(ctx, out),
        Mode::EmitPlotData => plot(ctx, out),
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateParams {
    y0: f64,
    #[serde(default)]
    snapshot_times: Vec<f64>,
    #[serde(default)]
    horizon: Option<f64>,
    #[serde(default)]
    max_events: Option<u64>,
    #[serde(default = "yes")]
    track_max: bool,
    #[serde(default)]
    motion: Motion,
}

fn yes() -> bool {
    true
}

#[derive(Default)]
struct Records(Vec<ReplicaRecord>, Option<SimError>);

impl Merge for Records {
    fn merge_from(&mut self, other: Self) {
        self.0.extend(other.0);
        if self.1.is_none() {
            self.1 = other.1;
        }
    }
}

fn simulate(ctx: &Context, out: &mut OutDir) -> Result<Report, CliError> {
    let p: SimulateParams = ctx.cfg.parameters()?;
    let n = ctx.replicas()?;
    let defaults = SimOptions::default();
    let opts = SimOptions {
        snapshot_times: p.snapshot_times.clone(),
        horizon: p.horizon.unwrap_or(defaults.horizon),
        max_events: p.max_events.unwrap_or(defaults.max_events),
        track_max: p.track_max,
        motion: p.motion,
        stop_when_max_reaches: None,
    };
    let (spec, model, seed) = (&ctx.cfg.spec, &ctx.cfg.model, ctx.cfg.seed);
    let mut acc = fold_replicas(n, ctx.threads, Records::default, |acc, i| {
        if acc.1.is_some() {
            return;
        }
        match simulate_replica(spec, model, p.y0, &opts, seed, i) {
            Ok(o) => acc.0.push(o.to_record(seed, i)),
            Err(SimError::CapExceeded { partial, .. }) => {
                let mut r = partial.to_record(seed, i);
                r.censored = true;
                acc.0.push(r);
            }
            Err(e) => acc.1 = Some(e),
        }
    });
    if let Some(e) = acc.1 {
        return Err(e.into());
    }
    acc.0.sort_by_key(|r| r.replica);
    let meta = ctx.meta(Some(n), Vec::new());
    out.jsonl("replicas.jsonl", &meta, &acc.0)?;

    let mut rows = Vec::new();
    for &t in &p.snapshot_times {
        let key = num(t);
        let counts: Vec<usize> = acc.0.iter().filter_map(|r| r.snapshots.get(&key).map(Vec::len)).collect();
        let alive = counts.iter().filter(|&&c| c > 0).count();
        let est = TailEstimate::indicator(alive as u64, counts.len() as u64, 0);
        let mean_given = if alive == 0 { f64::NAN } else { counts.iter().sum::<usize>() as f64 / alive as f64 };
        rows.push(vec![num(t), counts.len().to_string(), alive.to_string(), num(est.value), num(est.std_err), num(mean_given)]);
    }
    out.csv("summary.csv", &meta, &["t", "replicas", "survivors", "survival", "std_err", "mean_alive_given_survival"], &rows)?;
    Ok(Report::default())
}

// --------------------------------------------------------------------- ode

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OdeParams {
    t_values: Vec<f64>,
}

fn ode(ctx: &Context, out: &mut OutDir) -> Result<Report, CliError> {
    let p: OdeParams = ctx.cfg.parameters()?;
    if p.t_values.is_empty() {
        return Err(CliError::Config("t_values must not be empty".into()));
    }
    let mut rows = Vec::new();
    for &t in &p.t_values {
        let u = gw_survival(&ctx.cfg.spec, t)?;
        rows.push(vec![num(t), num(u)]);
    }
    out.csv("ode.csv", &ctx.meta(None, Vec::new()), &["t", "u"], &rows)?;
    Ok(Report::default())
}

// --------------------------------------------------------------------- pde

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Initial {
    Constant { value: f64 },
    /// `value` on `[from, to)`, 0 elsewhere.
    Step { from: f64, to: f64, value: f64 },
}

impl Initial {
    fn eval(&self, y: f64) -> f64 {
        match *self {
            Initial::Constant { value } => value,
            Initial::Step { from, to, value } => {
                if (from..to).contains(&y) {
                    value
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PdeProblem {
    VInfinity,
    Blowup { z: f64 },
    Semilinear { initial: Initial },
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PdeParams {
    problem: PdeProblem,
    #[serde(default = "one")]
    t_end: f64,
    #[serde(default)]
    grid: GridParams,
    /// Every `stride`-th node goes to the profile table.
    #[serde(default = "one_usize")]
    stride: usize,
    /// Points at which the final profile is reported.
    #[serde(default)]
    probe_y: Vec<f64>,
    /// Boundary-layer widths for the normalising constant of `v_∞`.
    #[serde(default)]
    w_values: Vec<f64>,
}

#[derive(Serialize)]
struct PdeSummary<'a> {
    alpha: f64,
    c: f64,
    sigma2: f64,
    h: f64,
    y_max: f64,
    times: &'a [f64],
    diagnostics: &'a bkl_core::limit_solvers::PdeDiagnostics,
    probes: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    normalising_constant: Option<bkl_core::limit_solvers::Extrapolation>,
}

fn pde(ctx: &Context, out: &mut OutDir) -> Result<Report, CliError> {
    let p: PdeParams = ctx.cfg.parameters()?;
    if p.stride == 0 {
        return Err(CliError::Config("stride must be positive".into()));
    }
    let (alpha, c, sigma2) = ctx.mechanism();
    let mut grid = p.grid.clone();
    if !p.w_values.is_empty() {
        if !matches!(p.problem, PdeProblem::VInfinity) || p.t_end != 1.0 {
            return Err(CliError::Config("w_values apply to the v_infinity problem with t_end = 1".into()));
        }
        grid.output_times.extend(p.w_values.iter().map(|w| 1.0 - w));
        grid.output_times.sort_by(f64::total_cmp);
        grid.output_times.dedup();
    }
    let sol = match &p.problem {
        PdeProblem::VInfinity => solve_v_infinity(alpha, c, sigma2, p.t_end, &grid)?,
        PdeProblem::Blowup { z } => solve_blowup(alpha, c, sigma2, *z, p.t_end, &grid)?,
        PdeProblem::Semilinear { initial } => solve_semilinear(|y| initial.eval(y), alpha, c, sigma2, p.t_end, &grid)?,
    };
    let normalising_constant = if p.w_values.is_empty() { None } else { Some(constant_c0inf(&sol, sigma2, &p.w_values)?) };
    let probes = p.probe_y.iter().map(|&y| Ok((y, sol.at(p.t_end, y)?))).collect::<Result<Vec<_>, CliError>>()?;
    let meta = ctx.meta(None, Vec::new());
    out.csv("pde.csv", &meta, &["t", "y", "v"], &profile_rows(&sol, p.stride))?;
    let summary = PdeSummary {
        alpha,
        c,
        sigma2,
        h: sol.h,
        y_max: sol.y_max,
        times: &sol.times,
        diagnostics: &sol.diagnostics,
        probes,
        normalising_constant,
    };
    out.json("pde.json", &meta, &summary)?;
    Ok(Report::default())
}

fn profile_rows(sol: &PdeSolution, stride: usize) -> Vec<Vec<String>> {
    let ys = sol.grid();
    let mut rows = Vec::new();
    for (t, values) in sol.times.iter().zip(&sol.values) {
        for (i, (y, v)) in ys.iter().zip(values).enumerate() {
            if i % stride == 0 {
                rows.push(vec![num(*t), num(*y), num(*v)]);
            }
        }
    }
    rows
}

// ------------------------------------------------------------------- shoot

fn default_tol() -> f64 {
    1e-10
}

fn default_points() -> usize {
    200
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShootParams {
    #[serde(default = "one")]
    z: f64,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default = "default_points")]
    grid_points: usize,
}

#[derive(Serialize)]
struct ShootSummary {
    alpha: f64,
    c: f64,
    sigma2: f64,
    z: f64,
    slope_at_0: f64,
    slope_quadrature: f64,
    slope_relative_difference: f64,
    blowup_location: f64,
    first_integral_violation: f64,
    bisection_steps: u32,
}

fn shoot(ctx: &Context, out: &mut OutDir) -> Result<Report, CliError> {
    let p: ShootParams = ctx.cfg.parameters()?;
    let (alpha, c, sigma2) = ctx.mechanism();
    let sol = shoot_k_on(alpha, c, sigma2, p.z, p.tol, p.grid_points)?;
    let quad = slope_by_quadrature(alpha, c, sigma2, p.z)?;
    let meta = ctx.meta(None, vec!["slope_quadrature: first-integral quadrature computed in this run".into()]);
    let summary = ShootSummary {
        alpha,
        c,
        sigma2,
        z: p.z,
        slope_at_0: sol.slope_at_0,
        slope_quadrature: quad,
        slope_relative_difference: (sol.slope_at_0 - quad).abs() / quad,
        blowup_location: sol.blowup_location,
        first_integral_violation: sol.first_integral_violation,
        bisection_steps: sol.bisection_steps,
    };
    out.json("shoot.json", &meta, &summary)?;
    let rows: Vec<Vec<String>> = sol.grid.iter().zip(&sol.k_values).map(|(y, k)| vec![num(*y), num(*k)]).collect();
    out.csv("shoot.csv", &meta, &["y", "k"], &rows)?;
    Ok(Report::default())
}

// ---------------------------------------------------------------- estimate

#[derive(Debug, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case", deny_unknown_fields)]
enum EstimateParams {
    SurvivalTail {
        y_mode: YMode,
        y: f64,
        t_values: Vec<f64>,
        #[serde(default)]
        fit_exponent: bool,
    },
    MaxTail {
        x_mode: XMode,
        y: f64,
        x_values: Vec<f64>,
        #[serde(default)]
        fit_exponent: bool,
    },
    Yaglom {
        t: f64,
        y: f64,
        statistics: Vec<Statistic>,
    },
    Renewal {
        x_values: Vec<f64>,
    },
}

const ESTIMATE_HEADER: [&str; 10] =
    ["estimator", "mode", "y", "level", "value", "std_err", "n", "censored_fraction", "replicas", "config_hash"];

fn estimate(ctx: &Context, out: &mut OutDir) -> Result<Report, CliError> {
    let p: EstimateParams = ctx.cfg.parameters()?;
    let n = ctx.replicas()?;
    let range = format!("{}:0..{n}", ctx.cfg.seed);
    let row = |name: &str, mode: &str, y: f64, level: String, e: &TailEstimate| {
        vec![
            name.to_string(),
            mode.to_string(),
            num(y),
            level,
            num(e.value),
            num(e.std_err),
            e.n.to_string(),
            num(e.censored_fraction),
            range.clone(),
            ctx.hash.clone(),
        ]
    };
    let meta = ctx.meta(Some(n), Vec::new());
    let mut rows = Vec::new();
    let mut fit_points = None;
    match &p {
        EstimateParams::SurvivalTail { y_mode, y, t_values, fit_exponent } => {
            let est = survival_tail(&ctx.ensemble()?, *y_mode, *y, t_values)?;
            for (t, e) in t_values.iter().zip(&est) {
                rows.push(row("survival_tail", mode_name(y_mode), *y, num(*t), e));
            }
            if *fit_exponent {
                fit_points = Some(t_values.iter().zip(&est).map(|(&t, e)| (t, e.value, e.std_err)).collect::<Vec<_>>());
            }
        }
        EstimateParams::MaxTail { x_mode, y, x_values, fit_exponent } => {
            let est = max_tail(&ctx.ensemble()?, *x_mode, *y, x_values)?;
            for (x, e) in x_values.iter().zip(&est) {
                rows.push(row("max_tail", mode_name(x_mode), *y, num(*x), e));
            }
            if *fit_exponent {
                fit_points = Some(x_values.iter().zip(&est).map(|(&x, e)| (x, e.value, e.std_err)).collect::<Vec<_>>());
            }
        }
        EstimateParams::Yaglom { t, y, statistics } => {
            let laws = yaglom_empirical(&ctx.ensemble()?, *t, *y, statistics)?;
            for law in &laws {
                let name = format!("yaglom_{}", mode_name(&law.statistic));
                let scale = format!("t={}", num(*t));
                rows.push(row(&name, &scale, *y, "mean".into(), &law.mean()));
                for q in [0.1, 0.25, 0.5, 0.75, 0.9] {
                    let v = quantile(&law.values, q);
                    let e = TailEstimate { value: v, std_err: f64::NAN, n: law.replicas, censored_fraction: law.censored_fraction };
                    rows.push(row(&name, &scale, *y, format!("q{}", num(q)), &e));
                }
            }
        }
        EstimateParams::Renewal { x_values } => {
            let opts = McOptions { seed: ctx.cfg.seed, threads: ctx.threads, ..Default::default() };
            for &x in x_values {
                let e = renewal_r(&ctx.cfg.model, x, n, &opts)?;
                rows.push(row("renewal", "-", x, num(x), &e));
            }
        }
    }
    out.csv("estimate.csv", &meta, &ESTIMATE_HEADER, &rows)?;
    if let Some(points) = fit_points {
        out.json("exponent.json", &meta, &fit_exponent(&points)?)?;
    }
    Ok(Report::default())
}

fn mode_name<T: Serialize>(m: &T) -> &'static str {
    match serde_json::to_value(m).ok().as_ref().and_then(|v| v.as_str()) {
        Some("fixed") => "fixed",
        Some("sqrt_t_scaled") => "sqrt_t_scaled",
        Some("x_scaled") => "x_scaled",
        Some("max") => "max",
        Some("mass") => "mass",
        _ => "-",
    }
}

/// Linear-interpolation quantile of a sorted sample.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (sorted[j] - sorted[i]) * (pos - i as f64)
}

// ------------------------------------------------------------------ verify

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyParams {
    #[serde(default = "one")]
    scale: f64,
    #[serde(default)]
    only: Vec<u8>,
}

#[derive(Serialize)]
struct ReportView<'a> {
    id: u8,
    title: &'a str,
    passed: bool,
    measured: f64,
    oracle: f64,
    tolerance: &'a str,
    detail: &'a str,
}

#[derive(Serialize)]
struct VerifySummary<'a> {
    scale: f64,
    passed: bool,
    criteria: Vec<ReportView<'a>>,
}

fn verify(ctx: &Context, out: &mut OutDir) -> Result<Report, CliError> {
    let p: VerifyParams = ctx.cfg.parameters()?;
    if !(p.scale > 0.0) {
        return Err(CliError::Config(format!("scale must be positive, got {}", p.scale)));
    }
    if let Some(bad) = p.only.iter().find(|id| !(1..=11).contains(*id)) {
        return Err(CliError::Config(format!("no criterion {bad}")));
    }
    let vc = VerifyConfig { seed: ctx.cfg.seed, scale: p.scale, threads: ctx.threads, only: p.only.clone() };
    let reports: Vec<CriterionReport> = run_all(&vc);
    for r in &reports {
        println!("{r}");
    }
    let failed: Vec<u8> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    let summary = VerifySummary {
        scale: p.scale,
        passed: failed.is_empty(),
        criteria: reports
            .iter()
            .map(|r| ReportView {
                id: r.id,
                title: &r.title,
                passed: r.passed,
                measured: r.measured,
                oracle: r.oracle,
                tolerance: &r.tolerance,
                detail: &r.detail,
            })
            .collect(),
    };
    let meta = ctx.meta(None, vec!["oracles: closed forms and deterministic solvers evaluated in this run".into()]);
    out.json("verify.json", &meta, &summary)?;
    let timings = reports.iter().map(|r| (format!("criterion {}", r.id), r.seconds)).collect();
    Ok(Report { failed_criteria: failed, timings })
}

// ------------------------------------------------------------------- plots

#[derive(Debug, Deserialize)]
#[serde(tag = "plot", rename_all = "snake_case", deny_unknown_fields)]
enum PlotParams {
    GwSurvival {
        t_values: Vec<f64>,
    },
    /// `t^power · P(ζ > t)` against `t`.
    SurvivalCurve {
        y_mode: YMode,
        y: f64,
        t_values: Vec<f64>,
        #[serde(default)]
        power: f64,
    },
    /// `x^power · P(M > x)` against `x`.
    MaxTail {
        x_mode: XMode,
        y: f64,
        x_values: Vec<f64>,
        #[serde(default)]
        power: f64,
    },
    VInfinityProfile {
        #[serde(default = "one")]
        t: f64,
        #[serde(default)]
        grid: GridParams,
        #[serde(default = "one_usize")]
        stride: usize,
    },
    ShootingProfile {
        #[serde(default = "one")]
        z: f64,
        #[serde(default = "default_points")]
        grid_points: usize,
    },
    YaglomCdf {
        y: f64,
        z_values: Vec<f64>,
        #[serde(default)]
        grid: GridParams,
    },
}

fn plot(ctx: &Context, out: &mut OutDir) -> Result<Report, CliError> {
    let p: PlotParams = ctx.cfg.parameters()?;
    let (alpha, c, sigma2) = ctx.mechanism();
    let mut replicas = None;
    let triples: Vec<(f64, f64, f64)> = match &p {
        PlotParams::GwSurvival { t_values } => {
            t_values.iter().map(|&t| Ok((t, gw_survival(&ctx.cfg.spec, t)?, 0.0))).collect::<Result<_, CliError>>()?
        }
        PlotParams::SurvivalCurve { y_mode, y, t_values, power } => {
            replicas = Some(ctx.replicas()?);
            let est = survival_tail(&ctx.ensemble()?, *y_mode, *y, t_values)?;
            t_values.iter().zip(est).map(|(&t, e)| scaled(t, e, *power)).collect()
        }
        PlotParams::MaxTail { x_mode, y, x_values, power } => {
            replicas = Some(ctx.replicas()?);
            let est = max_tail(&ctx.ensemble()?, *x_mode, *y, x_values)?;
            x_values.iter().zip(est).map(|(&x, e)| scaled(x, e, *power)).collect()
        }
        PlotParams::VInfinityProfile { t, grid, stride } => {
            if *stride == 0 {
                return Err(CliError::Config("stride must be positive".into()));
            }
            let sol = solve_v_infinity(alpha, c, sigma2, *t, grid)?;
            let last = sol.values.last().expect("final profile");
            sol.grid().iter().zip(last).step_by(*stride).map(|(&y, &v)| (y, v, 0.0)).collect()
        }
        PlotParams::ShootingProfile { z, grid_points } => {
            let sol = shoot_k_on(alpha, c, sigma2, *z, default_tol(), *grid_points)?;
            sol.grid.iter().zip(&sol.k_values).map(|(&y, &k)| (y, k, 0.0)).collect()
        }
        PlotParams::YaglomCdf { y, z_values, grid } => {
            yaglom_max_curve(alpha, c, sigma2, *y, z_values, grid)?.into_iter().map(|(z, f)| (z, f, 0.0)).collect()
        }
    };
    let rows: Vec<Vec<String>> = triples.iter().map(|&(x, y, e)| vec![num(x), num(y), num(e)]).collect();
    out.csv("plot.csv", &ctx.meta(replicas, Vec::new()), &["x", "y", "yerr"], &rows)?;
    Ok(Report::default())
}

fn scaled(x: f64, e: TailEstimate, power: f64) -> (f64, f64, f64) {
    let s = e.scaled(x.powf(power));
    (x, s.value, s.std_err)
}
