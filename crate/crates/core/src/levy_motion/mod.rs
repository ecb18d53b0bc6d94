//! Spatial motions: Brownian motion and Brownian motion with compound
//! Poisson jumps.
//!
//! Everything here is exact: Brownian pieces use closed-form passage and
//! bridge laws, and jumps happen at exponential epochs. Operations that only
//! need the place where a path leaves an interval use a walk-on-spheres
//! scheme that skips time entirely.

mod brownian;

pub(crate) use brownian::{Fate, Piece};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StudentT};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::fold_replicas;
use crate::estimators::{Moments, TailEstimate};
use crate::rng::{stream, Purpose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevyError {
    #[error("invalid motion model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("only {uncensored} of {n} runs finished before the cap")]
    Censored { uncensored: u64, n: u64 },
}

/// Zero-mean jump size distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpLaw {
    Normal { std: f64 },
    Laplace { scale: f64 },
    /// Scaled Student t; `dof > 2` so the variance is finite.
    StudentT { dof: f64, scale: f64 },
}

impl JumpLaw {
    pub fn variance(&self) -> f64 {
        match *self {
            JumpLaw::Normal { std } => std * std,
            JumpLaw::Laplace { scale } => 2.0 * scale * scale,
            JumpLaw::StudentT { dof, scale } => scale * scale * dof / (dof - 2.0),
        }
    }

    /// Supremum of the orders `r` with `E|J|^r < ∞`.
    pub fn moment_order(&self) -> f64 {
        match *self {
            JumpLaw::StudentT { dof, .. } => dof,
            _ => f64::INFINITY,
        }
    }

    fn validate(&self) -> Result<(), LevyError> {
        let ok = match *self {
            JumpLaw::Normal { std } => std.is_finite() && std >= 0.0,
            JumpLaw::Laplace { scale } => scale.is_finite() && scale >= 0.0,
            JumpLaw::StudentT { dof, scale } => dof.is_finite() && dof > 2.0 && scale.is_finite() && scale >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(LevyError::InvalidModel(format!("bad jump law {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpLaw::Normal { std } => std * brownian::normal(rng),
            JumpLaw::Laplace { scale } => {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<bool>() {
                    scale * e
                } else {
                    -scale * e
                }
            }
            JumpLaw::StudentT { dof, scale } => {
                let t = StudentT::new(dof).expect("validated degrees of freedom");
                scale * t.sample(rng)
            }
        }
    }
}

/// Parametric motion of a single particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRaw", into = "ModelRaw")]
pub enum LevyModel {
    Brownian { sigma2: f64 },
    JumpDiffusion { sigma2: f64, jump_rate: f64, jump_law: JumpLaw },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ModelRaw {
    Brownian { sigma2: f64 },
    JumpDiffusion { sigma2: f64, jump_rate: f64, jump_law: JumpLaw },
}

impl TryFrom<ModelRaw> for LevyModel {
    type Error = LevyError;

    fn try_from(raw: ModelRaw) -> Result<Self, LevyError> {
        match raw {
            ModelRaw::Brownian { sigma2 } => LevyModel::brownian(sigma2),
            ModelRaw::JumpDiffusion { sigma2, jump_rate, jump_law } => LevyModel::jump_diffusion(sigma2, jump_rate, jump_law),
        }
    }
}

impl From<LevyModel> for ModelRaw {
    fn from(m: LevyModel) -> Self {
        match m {
            LevyModel::Brownian { sigma2 } => ModelRaw::Brownian { sigma2 },
            LevyModel::JumpDiffusion { sigma2, jump_rate, jump_law } => ModelRaw::JumpDiffusion { sigma2, jump_rate, jump_law },
        }
    }
}

impl std::fmt::Display for LevyModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LevyModel::Brownian { sigma2 } => write!(f, "brownian(sigma2={sigma2})"),
            LevyModel::JumpDiffusion { sigma2, jump_rate, jump_law } => {
                write!(f, "jump_diffusion(sigma2={sigma2}, rate={jump_rate}, jumps={jump_law:?})")
            }
        }
    }
}

impl LevyModel {
    pub fn brownian(sigma2: f64) -> Result<Self, LevyError> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(LevyError::InvalidModel(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(LevyModel::Brownian { sigma2 })
    }

    /// The diffusive part must be nondegenerate: the exact samplers build
    /// on Brownian pieces between jumps.
    pub fn jump_diffusion(sigma2: f64, jump_rate: f64, jump_law: JumpLaw) -> Result<Self, LevyError> {
        LevyModel::brownian(sigma2)?;
        if !(jump_rate.is_finite() && jump_rate >= 0.0) {
            return Err(LevyError::InvalidModel(format!("jump_rate must be non-negative, got {jump_rate}")));
        }
        jump_law.validate()?;
        Ok(LevyModel::JumpDiffusion { sigma2, jump_rate, jump_law })
    }

    /// Variance of the diffusive component per unit time.
    pub fn diffusion_sigma2(&self) -> f64 {
        match *self {
            LevyModel::Brownian { sigma2 } | LevyModel::JumpDiffusion { sigma2, .. } => sigma2,
        }
    }

    pub fn jump_rate(&self) -> f64 {
        match *self {
            LevyModel::Brownian { .. } => 0.0,
            LevyModel::JumpDiffusion { jump_rate, .. } => jump_rate,
        }
    }

    /// Total variance per unit time, `E ξ_1²`.
    pub fn sigma2(&self) -> f64 {
        match *self {
            LevyModel::Brownian { sigma2 } => sigma2,
            LevyModel::JumpDiffusion { sigma2, jump_rate, jump_law } => sigma2 + jump_rate * jump_law.variance(),
        }
    }

    /// Moment order certificate: `E|ξ_1|^r < ∞` for every `r` below this.
    pub fn moment_order(&self) -> f64 {
        match *self {
            LevyModel::JumpDiffusion { jump_rate, jump_law, .. } if jump_rate > 0.0 => jump_law.moment_order(),
            _ => f64::INFINITY,
        }
    }

    /// Whether the moment order exceeds `2α/(α−1)`, the order needed for the
    /// limit theorems at stability index `alpha`.
    pub fn certifies_moments_for(&self, alpha: f64) -> bool {
        self.moment_order() > 2.0 * alpha / (alpha - 1.0)
    }

    fn jumps(&self) -> Option<(f64, JumpLaw)> {
        match *self {
            LevyModel::JumpDiffusion { jump_rate, jump_law, .. } if jump_rate > 0.0 => Some((jump_rate, jump_law)),
            _ => None,
        }
    }

    /// Whether the renewal function is the identity.
    pub fn is_continuous(&self) -> bool {
        self.jumps().is_none()
    }
}

/// Endpoint and extremes of a path segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub end: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

/// First passage across a level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassageRecord {
    /// Passage time, or the horizon when censored.
    pub time: f64,
    /// Position at passage minus the level; 0 when censored.
    pub overshoot: f64,
    pub censored: bool,
}

/// First exit from an interval, located without tracking time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitRecord {
    /// Position right after leaving; equal to the last position on a cap hit.
    pub position: f64,
    pub upward: bool,
    pub steps: u64,
    pub censored: bool,
}

/// Monte Carlo settings shared by the estimators in this module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McOptions {
    pub seed: u64,
    pub threads: usize,
    /// Time cap for passage-time simulations.
    pub horizon: f64,
    /// Step cap for exit walks.
    pub max_steps: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { seed: 0, threads: crate::ensemble::default_threads(), horizon: 1e4, max_steps: 10_000_000 }
    }
}

impl McOptions {
    pub fn with_seed(seed: u64) -> Self {
        McOptions { seed, ..Default::default() }
    }
}

fn exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// Samples the endpoint and exact extremes of the path over `[0, dt]`.
pub fn sample_segment<R: Rng + ?Sized>(model: &LevyModel, x0: f64, dt: f64, rng: &mut R) -> Segment {
    assert!(dt > 0.0, "segment duration must be positive");
    let s2 = model.diffusion_sigma2();
    let bridge = |x: f64, len: f64, rng: &mut R| -> Segment {
        let end = x + (s2 * len).sqrt() * brownian::normal(rng);
        let (min, max) = brownian::bridge_extremes(x, end, s2 * len, rng);
        Segment { end, min, max }
    };
    let Some((rate, law)) = model.jumps() else {
        return bridge(x0, dt, rng);
    };
    let mut out = Segment { end: x0, min: x0, max: x0 };
    let mut t = 0.0;
    loop {
        let e = exponential(rate, rng);
        let len = e.min(dt - t);
        let piece = bridge(out.end, len, rng);
        out.min = out.min.min(piece.min);
        out.max = out.max.max(piece.max);
        out.end = piece.end;
        t += e;
        if t >= dt {
            return out;
        }
        out.end += law.sample(rng);
        out.min = out.min.min(out.end);
        out.max = out.max.max(out.end);
    }
}

/// Advances a particle at `x > 0` for `d` time units with killing on
/// leaving `(0, ∞)`. `new_max` is set whenever the path reaches `record`.
pub(crate) fn advance_killed<R: Rng + ?Sized>(model: &LevyModel, x: f64, d: f64, record: f64, rng: &mut R) -> Piece {
    let s2 = model.diffusion_sigma2();
    let Some((rate, law)) = model.jumps() else {
        return brownian::advance_killed(x, d, s2, record, rng);
    };
    let mut t = 0.0;
    let mut pos = x;
    let mut rec = record;
    let mut best = None;
    loop {
        let e = exponential(rate, rng);
        let len = e.min(d - t);
        let piece = brownian::advance_killed(pos, len, s2, rec, rng);
        if let Some(m) = piece.new_max {
            rec = rec.max(m);
            best = Some(rec);
        }
        match piece.fate {
            Fate::Killed { time } => return Piece { fate: Fate::Killed { time: t + time }, new_max: best },
            Fate::Alive { end } => {
                if t + e >= d {
                    return Piece { fate: Fate::Alive { end }, new_max: best };
                }
                t += e;
                pos = end + law.sample(rng);
                if pos > rec {
                    rec = pos;
                    best = Some(pos);
                }
                if pos <= 0.0 {
                    return Piece { fate: Fate::Killed { time: t }, new_max: best };
                }
            }
        }
    }
}

/// First passage of `barrier` from `x0`, simulated in time up to `horizon`.
///
/// Downward passage means reaching `(−∞, barrier]`, upward `[barrier, ∞)`.
pub fn first_passage<R: Rng + ?Sized>(
    model: &LevyModel,
    x0: f64,
    barrier: f64,
    direction: Direction,
    horizon: f64,
    rng: &mut R,
) -> PassageRecord {
    assert!(horizon > 0.0, "horizon must be positive");
    let sign = match direction {
        Direction::Down => 1.0,
        Direction::Up => -1.0,
    };
    let s2 = model.diffusion_sigma2();
    // Distance to the barrier on the unpassed side.
    let mut h = sign * (x0 - barrier);
    if h <= 0.0 {
        return PassageRecord { time: 0.0, overshoot: sign * h, censored: false };
    }
    let jumps = model.jumps();
    let mut t = 0.0;
    loop {
        let e = jumps.map_or(f64::INFINITY, |(rate, _)| exponential(rate, rng));
        let window = e.min(horizon - t);
        let z = brownian::normal(rng);
        let tau = h * h / (s2 * z * z);
        if tau <= window {
            return PassageRecord { time: t + tau, overshoot: 0.0, censored: false };
        }
        if e >= horizon - t {
            return PassageRecord { time: horizon, overshoot: 0.0, censored: true };
        }
        h = brownian::survivor_endpoint(h, e, s2, rng);
        t += e;
        let (_, law) = jumps.expect("finite epoch implies jumps");
        h += sign * law.sample(rng);
        if h <= 0.0 {
            return PassageRecord { time: t, overshoot: sign * h, censored: false };
        }
    }
}

/// Offset from the centre of a symmetric ball of radius `d` at which a jump
/// happens, given the path stays in the ball until the jump. The density is
/// proportional to `sinh(k(d − |u|))`; `v` is uniform on (0, 1].
fn jump_offset(k: f64, d: f64, v: f64) -> f64 {
    let kd = k * d;
    // ln(cosh(kd) − 1)
    let ln_c = if kd < 20.0 {
        (2.0 * (0.5 * kd).sinh().powi(2)).ln()
    } else {
        kd - std::f64::consts::LN_2 + 2.0 * (-(-kd).exp()).ln_1p()
    };
    let la = v.ln() + ln_c;
    let acosh = if la < 700.0 {
        let a = la.exp();
        (a + (a * (a + 2.0)).sqrt()).ln_1p()
    } else {
        std::f64::consts::LN_2 + la
    };
    (d - acosh / k).clamp(0.0, d)
}

/// First exit from `(lo, hi)` started at `x0`; `hi` may be infinite.
///
/// Walk-on-spheres: the largest interval centred at the current point is
/// left either by diffusion (to one of its two ends with equal probability)
/// or by a jump first. Both events are sampled exactly.
pub fn exit_interval<R: Rng + ?Sized>(model: &LevyModel, x0: f64, lo: f64, hi: f64, max_steps: u64, rng: &mut R) -> ExitRecord {
    assert!(lo.is_finite() && lo < hi, "exit interval needs a finite lower end below the upper end");
    if x0 <= lo || x0 >= hi {
        return ExitRecord { position: x0, upward: x0 >= hi, steps: 0, censored: false };
    }
    let Some((rate, law)) = model.jumps() else {
        // Continuous paths exit at an endpoint, upward with the gambler's-ruin
        // probability.
        let upward = hi.is_finite() && rng.random::<f64>() * (hi - lo) < x0 - lo;
        let position = if upward { hi } else { lo };
        return ExitRecord { position, upward, steps: 1, censored: false };
    };
    let k = (2.0 * rate / model.diffusion_sigma2()).sqrt();
    let mut x = x0;
    for step in 1..=max_steps {
        let below = x - lo;
        let d = below.min(hi - x);
        let kd = k * d;
        if kd < NEGLIGIBLE_EXPONENT && brownian::open_uniform(rng) * kd.cosh() <= 1.0 {
            let toward_low = rng.random::<bool>();
            x = if toward_low { x - d } else { x + d };
            if x <= lo {
                return ExitRecord { position: lo, upward: false, steps: step, censored: false };
            }
            if x >= hi {
                return ExitRecord { position: hi, upward: true, steps: step, censored: false };
            }
            continue;
        }
        let u = jump_offset(k, d, brownian::open_uniform(rng));
        let w = if rng.random::<bool>() { u } else { -u };
        x += w + law.sample(rng);
        if x <= lo {
            return ExitRecord { position: x, upward: false, steps: step, censored: false };
        }
        if x >= hi {
            return ExitRecord { position: x, upward: true, steps: step, censored: false };
        }
    }
    ExitRecord { position: x, upward: false, steps: max_steps, censored: true }
}

const NEGLIGIBLE_EXPONENT: f64 = 700.0;

/// Running totals for barrier-truncated passage runs: `down` is the
/// undershoot below 0 on downward exits (0 otherwise), `up` the indicator
/// of an upward exit.
#[derive(Debug, Clone, Default)]
struct PassageAcc {
    down: Moments,
    up: Moments,
    censored: u64,
}

impl crate::estimators::Merge for PassageAcc {
    fn merge_from(&mut self, other: Self) {
        self.down.merge(&other.down);
        self.up.merge(&other.up);
        self.censored += other.censored;
    }
}

impl PassageAcc {
    /// Mean and standard error of `down + u·up`.
    fn combined(&self, u: f64) -> (f64, f64) {
        let (a, b) = (self.down.mean(), self.up.mean());
        let var = self.down.variance() + u * u * self.up.variance() - 2.0 * u * a * b;
        (a + u * b, (var.max(0.0) / self.down.n as f64).sqrt())
    }
}

fn passage_runs(model: &LevyModel, x: f64, top: f64, n: u64, first: u64, purpose: Purpose, opts: &McOptions) -> PassageAcc {
    fold_replicas(n, opts.threads, PassageAcc::default, |acc, i| {
        let mut rng = stream(opts.seed, first + i, purpose);
        let rec = exit_interval(model, x, 0.0, top, opts.max_steps, &mut rng);
        if rec.censored {
            acc.censored += 1;
        } else if rec.upward {
            acc.down.push(0.0);
            acc.up.push(1.0);
        } else {
            acc.down.push(-rec.position);
            acc.up.push(0.0);
        }
    })
}

/// Distance to the auxiliary upper barrier: 30 typical displacements
/// between jumps.
fn barrier_pad(model: &LevyModel) -> f64 {
    let per_jump = model.diffusion_sigma2() / model.jump_rate() + model.jumps().map_or(0.0, |(_, law)| law.variance());
    30.0 * per_jump.sqrt()
}

/// Mean undershoot below 0 from far away, with its standard error.
///
/// From `p = pad`, runs stop at 0 or at `2p`; those that reach `2p` restart
/// from a point whose undershoot law has already settled, so the limit is
/// `E[down] / (1 − E[up])`.
struct FarUndershoot {
    pad: f64,
    mean: f64,
    std_err: f64,
    censored: u64,
    n: u64,
}

fn far_undershoot(model: &LevyModel, n: u64, first: u64, purpose: Purpose, opts: &McOptions) -> Result<FarUndershoot, LevyError> {
    let pad = barrier_pad(model);
    let acc = passage_runs(model, pad, 2.0 * pad, n, first, purpose, opts);
    if acc.down.n < 2 || acc.up.mean() >= 1.0 {
        return Err(LevyError::Censored { uncensored: acc.down.n, n });
    }
    let stay = 1.0 - acc.up.mean();
    let mean = acc.down.mean() / stay;
    // Influence of each run on the ratio is (down + mean·up − mean)/stay.
    let (_, se) = acc.combined(mean);
    Ok(FarUndershoot { pad, mean, std_err: se / stay, censored: acc.censored, n })
}

fn renewal_with(model: &LevyModel, x: f64, far: &FarUndershoot, n: u64, first: u64, purpose: Purpose, opts: &McOptions) -> Result<TailEstimate, LevyError> {
    let acc = passage_runs(model, x, x + far.pad, n, first, purpose, opts);
    if acc.down.n < 2 {
        return Err(LevyError::Censored { uncensored: acc.down.n, n });
    }
    let (mean, se) = acc.combined(far.mean);
    let p_up = acc.up.mean();
    Ok(TailEstimate {
        value: x + mean,
        std_err: (se * se + (p_up * far.std_err).powi(2)).sqrt(),
        n,
        censored_fraction: (acc.censored + far.censored) as f64 / (n + far.n) as f64,
    })
}

/// Renewal function `R(x) = x − E_x[position at first passage below 0]`.
///
/// Exact (`R(x) = x`) for continuous models. Otherwise runs from `x` stop
/// at 0 or at an upper barrier `x + p` with `p` thirty typical jump
/// displacements; a run that reaches the barrier contributes the mean
/// undershoot from far away, estimated with `n_samples / 4` further runs.
/// The truncation error decays with the undershoot law's convergence over
/// distance `p`.
pub fn renewal_r(model: &LevyModel, x: f64, n_samples: u64, opts: &McOptions) -> Result<TailEstimate, LevyError> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(LevyError::InvalidArgument(format!("renewal function needs x >= 0, got {x}")));
    }
    if model.is_continuous() {
        return Ok(TailEstimate { value: x, std_err: 0.0, n: n_samples, censored_fraction: 0.0 });
    }
    let far = far_undershoot(model, (n_samples / 4).max(2), n_samples, Purpose::Motion, opts)?;
    renewal_with(model, x, &far, n_samples, 0, Purpose::Motion, opts)
}

/// Estimated renewal function on a uniform grid `0, h, 2h, …`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenewalTable {
    pub spacing: f64,
    pub values: Vec<f64>,
    pub std_errs: Vec<f64>,
    pub censored_fraction: f64,
}

impl RenewalTable {
    /// Independent estimates at each grid point up to at least `upto`.
    pub fn estimate(model: &LevyModel, upto: f64, spacing: f64, n_per_point: u64, opts: &McOptions) -> Result<Self, LevyError> {
        if !(spacing > 0.0 && upto >= 0.0) {
            return Err(LevyError::InvalidArgument("renewal table needs positive spacing".into()));
        }
        let points = (upto / spacing).ceil() as u64 + 1;
        let mut values = Vec::with_capacity(points as usize);
        let mut std_errs = Vec::with_capacity(points as usize);
        let mut censored = 0.0;
        let mut far = None;
        for j in 0..points {
            let x = j as f64 * spacing;
            let est = if model.is_continuous() {
                TailEstimate { value: x, std_err: 0.0, n: n_per_point, censored_fraction: 0.0 }
            } else {
                let far = match &far {
                    Some(f) => f,
                    None => far.insert(far_undershoot(model, n_per_point, 0, Purpose::Auxiliary, opts)?),
                };
                renewal_with(model, x, far, n_per_point, (j + 1) * n_per_point, Purpose::Auxiliary, opts)?
            };
            values.push(est.value);
            std_errs.push(est.std_err);
            censored += est.censored_fraction;
        }
        Ok(RenewalTable { spacing, values, std_errs, censored_fraction: censored / points as f64 })
    }

    /// Linear interpolation; beyond the grid, the last offset `R(x) − x` is
    /// carried forward.
    pub fn eval(&self, x: f64) -> f64 {
        if let Some(v) = crate::numerics::interp_uniform(&self.values, self.spacing, x) {
            return v;
        }
        let last = (self.values.len() - 1) as f64 * self.spacing;
        x + (self.values[self.values.len() - 1] - last)
    }

    pub fn max_std_err(&self) -> f64 {
        self.std_errs.iter().cloned().fold(0.0, f64::max)
    }
}

/// `R(x) − E_x[R(ξ_s); τ_0^- > s]`, which vanishes by harmonicity.
///
/// Continuous models use `R(x) = x`. Otherwise `R` comes from an
/// independent [`RenewalTable`] with `n_samples / 8` runs per grid point,
/// and the reported error combines path and table errors.
pub fn harmonicity_residual(model: &LevyModel, x: f64, s: f64, n_samples: u64, opts: &McOptions) -> Result<TailEstimate, LevyError> {
    if !(x > 0.0 && s > 0.0) {
        return Err(LevyError::InvalidArgument(format!("harmonicity residual needs x > 0 and s > 0, got x={x}, s={s}")));
    }
    let table = if model.is_continuous() {
        None
    } else {
        let reach = x + 8.0 * (model.sigma2() * s).sqrt();
        Some(RenewalTable::estimate(model, reach, 0.5, (n_samples / 8).max(2), opts)?)
    };
    let r = |y: f64| table.as_ref().map_or(y, |t| t.eval(y));
    let acc = fold_replicas(n_samples, opts.threads, Moments::default, |acc, i| {
        let mut rng = stream(opts.seed, i, Purpose::Motion);
        let piece = advance_killed(model, x, s, f64::INFINITY, &mut rng);
        acc.push(match piece.fate {
            Fate::Alive { end } => r(end),
            Fate::Killed { .. } => 0.0,
        });
    });
    let (table_se, censored) = table.as_ref().map_or((0.0, 0.0), |t| (t.max_std_err(), t.censored_fraction));
    let se_x = table.as_ref().map_or(0.0, |t| {
        let j = (x / t.spacing).round() as usize;
        t.std_errs[j.min(t.std_errs.len() - 1)]
    });
    Ok(TailEstimate {
        value: r(x) - acc.mean(),
        std_err: (acc.std_err().powi(2) + se_x * se_x + table_se * table_se).sqrt(),
        n: n_samples,
        censored_fraction: censored,
    })
}

/// `x · P_y(leave (0, xz) upward)` for each `x`, which tends to `R(y)/z`.
pub fn exit_up_asymptotic(
    model: &LevyModel,
    y: f64,
    z: f64,
    x_values: &[f64],
    n_samples: u64,
    opts: &McOptions,
) -> Result<Vec<(f64, TailEstimate)>, LevyError> {
    if !(y > 0.0 && z > 0.0) {
        return Err(LevyError::InvalidArgument(format!("exit asymptotic needs y > 0 and z > 0, got y={y}, z={z}")));
    }
    let mut out = Vec::with_capacity(x_values.len());
    for (j, &x) in x_values.iter().enumerate() {
        let top = x * z;
        let counts = fold_replicas(n_samples, opts.threads, || crate::estimators::Counts::new(1), |acc, i| {
            let mut rng = stream(opts.seed, j as u64 * n_samples + i, Purpose::Motion);
            let rec = exit_interval(model, y, 0.0, top, opts.max_steps, &mut rng);
            acc.n += 1;
            if rec.censored {
                acc.censored[0] += 1;
            } else if rec.upward {
                acc.hits[0] += 1;
            }
        });
        let p = TailEstimate::indicator(counts.hits[0], counts.n, counts.censored[0]);
        out.push((x, p.scaled(x)));
    }
    Ok(out)
}

/// `√t · E_y[f(ξ_t / (σ√t)); τ_0^- > t]`.
pub fn killed_clt_functional<F>(model: &LevyModel, y: f64, t: f64, f: F, n_samples: u64, opts: &McOptions) -> Result<TailEstimate, LevyError>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    if !(y > 0.0 && t > 0.0) {
        return Err(LevyError::InvalidArgument(format!("killed functional needs y > 0 and t > 0, got y={y}, t={t}")));
    }
    let scale = (model.sigma2() * t).sqrt();
    let root_t = t.sqrt();
    let acc = fold_replicas(n_samples, opts.threads, Moments::default, |acc, i| {
        let mut rng = stream(opts.seed, i, Purpose::Motion);
        let piece = advance_killed(model, y, t, f64::INFINITY, &mut rng);
        acc.push(match piece.fate {
            Fate::Alive { end } => root_t * f(end / scale),
            Fate::Killed { .. } => 0.0,
        });
    });
    Ok(TailEstimate::from_moments(&acc, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jump_offset_density_matches_sinh_profile() {
        // CDF of the offset is (cosh(kd) − cosh(k(d − u))) / (cosh(kd) − 1).
        let (k, d) = (1.3, 2.0);
        for &v in &[1e-9, 0.1, 0.5, 0.9, 1.0] {
            let u = jump_offset(k, d, v);
            let cdf = ((k * d).cosh() - (k * (d - u)).cosh()) / ((k * d).cosh() - 1.0);
            assert!((cdf - (1.0 - v)).abs() < 1e-10, "v={v}: cdf={cdf}");
        }
        // Far-apart scales stay finite and inside the ball.
        let u = jump_offset(1.0, 5000.0, 0.3);
        assert!((u - (-(0.3f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn model_serde_round_trip_and_validation() {
        let m = LevyModel::jump_diffusion(1.0, 0.5, JumpLaw::StudentT { dof: 7.0, scale: 0.5 }).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<LevyModel>(&s).unwrap(), m);
        assert!(serde_json::from_str::<LevyModel>(r#"{"kind":"brownian","sigma2":-1}"#).is_err());
        assert!(serde_json::from_str::<LevyModel>(r#"{"kind":"brownian","sigma2":1,"extra":0}"#).is_err());
        assert!((m.sigma2() - (1.0 + 0.5 * 0.25 * 7.0 / 5.0)).abs() < 1e-15);
        assert_eq!(m.moment_order(), 7.0);
    }
}
