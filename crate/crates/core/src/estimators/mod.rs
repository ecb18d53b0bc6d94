//! Ensemble statistics: tail probabilities, power-law fits, plateau
//! detection and conditional (Yaglom) laws.
//!
//! Every estimator is a fold over replica indices, so any sharding of the
//! ensemble gives bit-identical results.

mod accumulate;

pub use accumulate::{Counts, ExactSum, Merge, Moments};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::fold_range;
use crate::levy_motion::LevyModel;
use crate::offspring::BranchingSpec;
use crate::particle_system::{simulate_replica, SimError, SimOptions, SimOutcome};
use crate::stats::{ks_one_sample, KsResult};

/// Largest tolerated fraction of censored replicas.
pub const MAX_CENSORED_FRACTION: f64 = 1e-3;

/// Minimum number of survivors for a conditional law.
pub const MIN_SURVIVORS: u64 = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("censored fraction {fraction} at {at} exceeds {MAX_CENSORED_FRACTION}")]
    TooCensored { at: f64, fraction: f64 },
    #[error("degenerate regression design: {0}")]
    DegenerateDesign(String),
    #[error("no plateau: last points {values:?} disagree beyond two pooled standard errors")]
    NotConverged { values: Vec<f64> },
    #[error("only {survivors} survivors, need at least {required}")]
    TooFewSurvivors { survivors: u64, required: u64 },
    #[error("invalid estimator input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub value: f64,
    pub std_err: f64,
    /// Replicas used, censored ones included.
    pub n: u64,
    pub censored_fraction: f64,
}

impl TailEstimate {
    /// Proportion of hits among the uncensored replicas.
    pub fn indicator(hits: u64, n: u64, censored: u64) -> Self {
        let used = n.saturating_sub(censored);
        let p = if used == 0 { f64::NAN } else { hits as f64 / used as f64 };
        TailEstimate {
            value: p,
            std_err: (p * (1.0 - p) / used as f64).sqrt(),
            n,
            censored_fraction: if n == 0 { 0.0 } else { censored as f64 / n as f64 },
        }
    }

    pub fn from_moments(m: &Moments, censored: u64) -> Self {
        let n = m.n + censored;
        TailEstimate {
            value: m.mean(),
            std_err: m.std_err(),
            n,
            censored_fraction: if n == 0 { 0.0 } else { censored as f64 / n as f64 },
        }
    }

    /// Value and error multiplied by `c`.
    pub fn scaled(self, c: f64) -> Self {
        TailEstimate { value: self.value * c, std_err: self.std_err * c.abs(), ..self }
    }

    /// Distance to `target` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target) / self.std_err
    }
}

/// Replica ensemble description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub spec: BranchingSpec,
    pub model: LevyModel,
    pub seed: u64,
    pub replicas: u64,
    pub threads: usize,
    pub max_events: u64,
}

impl Ensemble {
    pub fn new(spec: BranchingSpec, model: LevyModel, seed: u64, replicas: u64) -> Self {
        Ensemble { spec, model, seed, replicas, threads: crate::ensemble::default_threads(), max_events: SimOptions::default().max_events }
    }
}

/// Where a survival ensemble starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YMode {
    /// At `y` for every `t`.
    Fixed,
    /// At `√t · y`.
    SqrtTScaled,
}

/// Where a maximum ensemble starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XMode {
    /// At `y` for every level `x`.
    Fixed,
    /// At `x · y`, `y ∈ (0, 1)`.
    XScaled,
}

#[derive(Debug, Clone, Default)]
struct Tally {
    counts: Counts,
    error: Option<SimError>,
}

impl Merge for Tally {
    fn merge_from(&mut self, other: Self) {
        self.counts.merge_from(other.counts);
        if self.error.is_none() {
            self.error = other.error;
        }
    }
}

/// Runs replicas `first..first + n` and classifies each outcome against
/// every level with `judge`, which returns `Some(hit)` or `None` when the
/// outcome is censored for that level.
fn tally<J>(ens: &Ensemble, y0: f64, opts: &SimOptions, first: u64, levels: usize, judge: J) -> Result<Counts, EstimatorError>
where
    J: Fn(&SimOutcome, usize) -> Option<bool> + Sync + Send,
{
    let n = ens.replicas;
    let out = fold_range(first, first + n, ens.threads, || Tally { counts: Counts::new(levels), error: None }, |acc, i| {
        if acc.error.is_some() {
            return;
        }
        acc.counts.n += 1;
        let outcome = match simulate_replica(&ens.spec, &ens.model, y0, opts, ens.seed, i) {
            Ok(o) => o,
            Err(SimError::CapExceeded { partial, .. }) => {
                for j in 0..levels {
                    match judge(&partial, j) {
                        Some(true) if partial.max_all_time.is_finite() => acc.counts.hits[j] += 1,
                        _ => acc.counts.censored[j] += 1,
                    }
                }
                return;
            }
            Err(e) => {
                acc.error = Some(e);
                return;
            }
        };
        for j in 0..levels {
            match judge(&outcome, j) {
                Some(true) => acc.counts.hits[j] += 1,
                Some(false) => {}
                None => acc.counts.censored[j] += 1,
            }
        }
    });
    match out.error {
        Some(e) => Err(e.into()),
        None => Ok(out.counts),
    }
}

fn checked(counts: &Counts, j: usize, at: f64) -> Result<TailEstimate, EstimatorError> {
    let est = TailEstimate::indicator(counts.hits[j], counts.n, counts.censored[j]);
    if est.censored_fraction >= MAX_CENSORED_FRACTION {
        return Err(EstimatorError::TooCensored { at, fraction: est.censored_fraction });
    }
    Ok(est)
}

/// `P(ζ > t)` for each `t`, started at `y` or at `√t · y`.
pub fn survival_tail(ens: &Ensemble, mode: YMode, y: f64, t_values: &[f64]) -> Result<Vec<TailEstimate>, EstimatorError> {
    if !(y > 0.0) || t_values.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(EstimatorError::InvalidInput("survival tail needs y > 0 and finite t >= 0".into()));
    }
    let base = SimOptions { track_max: false, max_events: ens.max_events, ..Default::default() };
    match mode {
        YMode::Fixed => {
            let horizon = t_values.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
            let opts = SimOptions { horizon, ..base };
            let counts = tally(ens, y, &opts, 0, t_values.len(), |o, j| o.survives(t_values[j]))?;
            t_values.iter().enumerate().map(|(j, &t)| checked(&counts, j, t)).collect()
        }
        YMode::SqrtTScaled => t_values
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let opts = SimOptions { horizon: t.max(f64::MIN_POSITIVE), ..base.clone() };
                let y0 = (t.sqrt() * y).max(f64::MIN_POSITIVE);
                let counts = tally(ens, y0, &opts, j as u64 * ens.replicas, 1, |o, _| o.survives(t))?;
                checked(&counts, 0, t)
            })
            .collect(),
    }
}

/// `P(M ≥ x)` for each level `x`, started at `y` or at `x · y`.
///
/// Runs stop as soon as the maximum reaches the largest level that still
/// matters, which leaves every indicator exact.
pub fn max_tail(ens: &Ensemble, mode: XMode, y: f64, x_values: &[f64]) -> Result<Vec<TailEstimate>, EstimatorError> {
    if !(y > 0.0) || x_values.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(EstimatorError::InvalidInput("max tail needs y > 0 and finite x > 0".into()));
    }
    let base = SimOptions { track_max: true, max_events: ens.max_events, ..Default::default() };
    match mode {
        XMode::Fixed => {
            let top = x_values.iter().cloned().fold(0.0, f64::max);
            let opts = SimOptions { stop_when_max_reaches: Some(top), ..base };
            let counts = tally(ens, y, &opts, 0, x_values.len(), |o, j| exceeds(o, x_values[j]))?;
            x_values.iter().enumerate().map(|(j, &x)| checked(&counts, j, x)).collect()
        }
        XMode::XScaled => {
            if y >= 1.0 {
                return Err(EstimatorError::InvalidInput(format!("scaled start needs y in (0, 1), got {y}")));
            }
            x_values
                .iter()
                .enumerate()
                .map(|(j, &x)| {
                    let opts = SimOptions { stop_when_max_reaches: Some(x), ..base.clone() };
                    let counts = tally(ens, x * y, &opts, j as u64 * ens.replicas, 1, |o, _| exceeds(o, x))?;
                    checked(&counts, 0, x)
                })
                .collect()
        }
    }
}

fn exceeds(o: &SimOutcome, x: f64) -> Option<bool> {
    if o.max_all_time >= x {
        Some(true)
    } else if o.censored {
        None
    } else {
        Some(false)
    }
}

/// Weighted least-squares line through `(ln x, ln p)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% interval for the slope.
    pub slope_ci: (f64, f64),
    /// The `(ln x, ln p)` points used.
    pub grid: Vec<(f64, f64)>,
}

/// Fits `p ≈ e^intercept · x^slope` to `(x, p, se)` triples.
///
/// Weights are the inverse delta-method variances `(se/p)²` of `ln p`. If
/// every standard error is zero the fit is unweighted and the interval comes
/// from the residuals.
pub fn fit_exponent(points: &[(f64, f64, f64)]) -> Result<ExponentFit, EstimatorError> {
    if points.len() < 4 {
        return Err(EstimatorError::DegenerateDesign(format!("need at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|&(x, p, se)| !(x > 0.0 && p > 0.0 && se >= 0.0 && se.is_finite())) {
        return Err(EstimatorError::InvalidInput("fit needs x > 0, p > 0 and finite se >= 0".into()));
    }
    let unweighted = points.iter().all(|&(_, _, se)| se == 0.0);
    if !unweighted && points.iter().any(|&(_, _, se)| se == 0.0) {
        return Err(EstimatorError::DegenerateDesign("mixed zero and positive standard errors".into()));
    }
    let grid: Vec<(f64, f64)> = points.iter().map(|&(x, p, _)| (x.ln(), p.ln())).collect();
    let weights: Vec<f64> = points.iter().map(|&(_, p, se)| if unweighted { 1.0 } else { (p / se).powi(2) }).collect();
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&(u, v), &w) in grid.iter().zip(&weights) {
        s += w;
        sx += w * u;
        sy += w * v;
        sxx += w * u * u;
        sxy += w * u * v;
    }
    let det = s * sxx - sx * sx;
    if !(det > 1e-12 * s * sxx) {
        return Err(EstimatorError::DegenerateDesign("abscissae are collinear".into()));
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let var = if unweighted {
        let rss: f64 = grid.iter().map(|&(u, v)| (v - intercept - slope * u).powi(2)).sum();
        rss / (grid.len() as f64 - 2.0) * s / det
    } else {
        s / det
    };
    let half = 1.96 * var.sqrt();
    Ok(ExponentFit { slope, intercept, slope_ci: (slope - half, slope + half), grid })
}

/// Inverse-variance mean of the last three estimates, provided they agree
/// pairwise within two pooled standard errors.
pub fn plateau(estimates: &[TailEstimate]) -> Result<TailEstimate, EstimatorError> {
    if estimates.len() < 3 {
        return Err(EstimatorError::InvalidInput("plateau needs at least 3 points".into()));
    }
    let last = &estimates[estimates.len() - 3..];
    let values = last.iter().map(|e| e.value).collect::<Vec<_>>();
    for i in 0..3 {
        for j in i + 1..3 {
            let pooled = (last[i].std_err.powi(2) + last[j].std_err.powi(2)).sqrt();
            if (last[i].value - last[j].value).abs() > 2.0 * pooled {
                return Err(EstimatorError::NotConverged { values });
            }
        }
    }
    if last.iter().all(|e| e.std_err > 0.0) {
        let w: Vec<f64> = last.iter().map(|e| e.std_err.powi(-2)).collect();
        let total: f64 = w.iter().sum();
        let value = last.iter().zip(&w).map(|(e, w)| e.value * w).sum::<f64>() / total;
        Ok(TailEstimate { value, std_err: total.powf(-0.5), n: last.iter().map(|e| e.n).sum(), censored_fraction: 0.0 })
    } else {
        let value = values.iter().sum::<f64>() / 3.0;
        Ok(TailEstimate { value, std_err: 0.0, n: last.iter().map(|e| e.n).sum(), censored_fraction: 0.0 })
    }
}

/// Statistic of the population at time `t`, given survival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `M_t / √t`.
    Max,
    /// `t^{−1/(α−1)}` times the number alive.
    Mass,
}

/// Empirical law of a statistic over surviving replicas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalLaw {
    pub statistic: Statistic,
    /// Sorted sample.
    pub values: Vec<f64>,
    pub replicas: u64,
    pub censored_fraction: f64,
}

impl EmpiricalLaw {
    pub fn survivors(&self) -> u64 {
        self.values.len() as u64
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v <= x) as f64 / self.values.len() as f64
    }

    pub fn mean(&self) -> TailEstimate {
        let mut m = Moments::default();
        for &v in &self.values {
            m.push(v);
        }
        TailEstimate::from_moments(&m, 0)
    }

    pub fn ks_against<F: Fn(f64) -> f64>(&self, cdf: F) -> KsResult {
        ks_one_sample(&self.values, cdf)
    }
}

#[derive(Debug, Clone, Default)]
struct Survivors {
    max: Vec<f64>,
    mass: Vec<f64>,
    n: u64,
    censored: u64,
    error: Option<SimError>,
}

impl Merge for Survivors {
    fn merge_from(&mut self, other: Self) {
        self.max.extend(other.max);
        self.mass.extend(other.mass);
        self.n += other.n;
        self.censored += other.censored;
        if self.error.is_none() {
            self.error = other.error;
        }
    }
}

/// Conditional laws at time `t` of the requested statistics, for the
/// ensemble started at `√t · y` and conditioned on survival by rejection.
pub fn yaglom_empirical(ens: &Ensemble, t: f64, y: f64, statistics: &[Statistic]) -> Result<Vec<EmpiricalLaw>, EstimatorError> {
    if !(t > 0.0 && y > 0.0) {
        return Err(EstimatorError::InvalidInput("conditional law needs t > 0 and y > 0".into()));
    }
    let opts = SimOptions { snapshot_times: vec![t], horizon: t, track_max: false, max_events: ens.max_events, ..Default::default() };
    let root = t.sqrt();
    let mass_unit = t.powf(-1.0 / (ens.spec.alpha() - 1.0));
    let acc = fold_range(0, ens.replicas, ens.threads, Survivors::default, |acc, i| {
        if acc.error.is_some() {
            return;
        }
        acc.n += 1;
        match simulate_replica(&ens.spec, &ens.model, root * y, &opts, ens.seed, i) {
            Ok(out) => {
                let snap = out.snapshot(t).expect("requested snapshot");
                if let Some(m) = snap.max() {
                    acc.max.push(m / root);
                    acc.mass.push(snap.positions.len() as f64 * mass_unit);
                }
            }
            Err(SimError::CapExceeded { .. }) => acc.censored += 1,
            Err(e) => acc.error = Some(e),
        }
    });
    if let Some(e) = acc.error {
        return Err(e.into());
    }
    let censored_fraction = acc.censored as f64 / acc.n.max(1) as f64;
    if censored_fraction >= MAX_CENSORED_FRACTION {
        return Err(EstimatorError::TooCensored { at: t, fraction: censored_fraction });
    }
    let survivors = acc.max.len() as u64;
    if survivors < MIN_SURVIVORS {
        return Err(EstimatorError::TooFewSurvivors { survivors, required: MIN_SURVIVORS });
    }
    let Survivors { mut max, mut mass, n, .. } = acc;
    max.sort_by(f64::total_cmp);
    mass.sort_by(f64::total_cmp);
    Ok(statistics
        .iter()
        .map(|&statistic| EmpiricalLaw {
            statistic,
            values: match statistic {
                Statistic::Max => max.clone(),
                Statistic::Mass => mass.clone(),
            },
            replicas: n,
            censored_fraction,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_power_law_is_recovered() {
        let pts: Vec<_> = [2.0, 4.0, 8.0, 16.0, 32.0].iter().map(|&x: &f64| (x, x.powi(-3), 0.0)).collect();
        let fit = fit_exponent(&pts).unwrap();
        assert!((fit.slope + 3.0).abs() < 1e-12);
        assert!(fit.slope_ci.0 <= fit.slope && fit.slope <= fit.slope_ci.1);
    }

    #[test]
    fn too_few_points_are_rejected() {
        let pts = [(1.0, 0.5, 0.1), (2.0, 0.25, 0.1), (3.0, 0.1, 0.1)];
        assert!(matches!(fit_exponent(&pts), Err(EstimatorError::DegenerateDesign(_))));
    }

    #[test]
    fn plateau_requires_agreement() {
        let e = |v: f64| TailEstimate { value: v, std_err: 0.1, n: 100, censored_fraction: 0.0 };
        assert!(plateau(&[e(0.0), e(1.0), e(1.05), e(0.98)]).is_ok());
        assert!(matches!(plateau(&[e(1.0), e(1.5), e(1.0)]), Err(EstimatorError::NotConverged { .. })));
    }
}
