//! Finite differences for `∂_r v = (σ²/2) ∂_y² v − c·v^α` on a half-line
//! with `v(r, 0) = 0`.
//!
//! Strang splitting: the reaction `v' = −c·v^α` is integrated exactly over
//! half steps, and the diffusion in between with the L-stable TR-BDF2
//! scheme on a uniform grid, truncated at `Y_max` with a reflecting
//! boundary. Steps grow geometrically with the time elapsed since the
//! initial singularity.

use serde::{Deserialize, Serialize};

use super::front::front_profile;
use super::{LimitError, Mechanism};
use crate::numerics::interp_uniform;

/// Distance, in units of `σ√δ0`, between the boundary and the centre of a
/// front used as start data.
const FRONT_CLEARANCE: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    /// Space step.
    pub h: f64,
    /// Truncation of the half-line; `12·√(σ² T)` when absent.
    pub y_max: Option<f64>,
    /// Time step relative to the time elapsed since the start of the
    /// singular evolution.
    pub dt_rel: f64,
    pub dt_max: f64,
    /// Extra times at which profiles are stored (the final time always is).
    pub output_times: Vec<f64>,
    /// Also solve on the grid of step `2h` and fail if the two final
    /// profiles differ by more than this in sup norm.
    pub refinement_tol: Option<f64>,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams { h: 0.01, y_max: None, dt_rel: 0.002, dt_max: 0.005, output_times: Vec::new(), refinement_tol: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PdeDiagnostics {
    pub steps: u64,
    /// Sup distance to the solution on the coarser grid.
    pub refinement_change: Option<f64>,
    /// Start time used for blow-up data.
    pub delta0: Option<f64>,
    /// Sup change of the stored profiles in the last start-time halving,
    /// or between the last two extrapolated profiles.
    pub delta0_change: Option<f64>,
    /// Empirical order in `δ0` when the start-time limit was extrapolated.
    pub delta0_order: Option<f64>,
}

/// Profiles `v(t, i·h)` at the stored times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeSolution {
    pub h: f64,
    pub y_max: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub diagnostics: PdeDiagnostics,
}

impl PdeSolution {
    pub fn profile(&self, t: f64) -> Option<&[f64]> {
        let i = self.times.iter().position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))?;
        Some(&self.values[i])
    }

    /// Linear interpolation of the stored profile at time `t`.
    pub fn at(&self, t: f64, y: f64) -> Result<f64, LimitError> {
        let p = self.profile(t).ok_or(LimitError::NotStored(t))?;
        interp_uniform(p, self.h, y).ok_or(LimitError::OutsideGrid(y))
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.values[0].len()).map(|i| i as f64 * self.h).collect()
    }
}

/// Exact reaction flow over time `tau`.
fn react(v: &mut [f64], mech: &Mechanism, tau: f64) {
    let a1 = mech.alpha - 1.0;
    for x in v.iter_mut() {
        if *x > 0.0 {
            *x = (x.powf(-a1) + a1 * mech.c * tau).powf(-1.0 / a1);
        } else {
            *x = 0.0;
        }
    }
}

/// Solves `(I − a·A) x = rhs` for the diffusion matrix `A` on the unknown
/// nodes `1..=n`; `s = σ²/(2h²)`.
fn implicit_solve(rhs: &[f64], a: f64, s: f64, out: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    let off = -a * s;
    let diag = 1.0 + 2.0 * a * s;
    // Thomas algorithm; the last row couples twice to its neighbour.
    let mut c_prev = off / diag;
    scratch[0] = c_prev;
    out[0] = rhs[0] / diag;
    for i in 1..n {
        let lower = if i == n - 1 { 2.0 * off } else { off };
        let m = diag - lower * c_prev;
        c_prev = off / m;
        scratch[i] = c_prev;
        out[i] = (rhs[i] - lower * out[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        out[i] -= scratch[i] * out[i + 1];
    }
}

/// `y += a·A u` on the unknown nodes.
fn apply(u: &[f64], a: f64, s: f64, y: &mut [f64]) {
    let n = u.len();
    for i in 0..n {
        let left = if i == 0 { 0.0 } else { u[i - 1] };
        let right = if i == n - 1 { u[n - 2] } else { u[i + 1] };
        y[i] = u[i] + a * s * (left - 2.0 * u[i] + right);
    }
}

struct Diffusion {
    s: f64,
    u_gamma: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
    out: Vec<f64>,
}

const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;

impl Diffusion {
    /// One TR-BDF2 step of size `dt` on the unknown nodes `u`.
    fn step(&mut self, u: &mut [f64], dt: f64) {
        let half = 0.5 * GAMMA * dt;
        apply(u, half, self.s, &mut self.rhs);
        implicit_solve(&self.rhs, half, self.s, &mut self.u_gamma, &mut self.scratch);
        let w1 = 1.0 / (GAMMA * (2.0 - GAMMA));
        let w0 = (1.0 - GAMMA).powi(2) / (GAMMA * (2.0 - GAMMA));
        for i in 0..u.len() {
            self.rhs[i] = w1 * self.u_gamma[i] - w0 * u[i];
        }
        implicit_solve(&self.rhs, (1.0 - GAMMA) / (2.0 - GAMMA) * dt, self.s, &mut self.out, &mut self.scratch);
        for (x, &y) in u.iter_mut().zip(&self.out) {
            *x = y.max(0.0);
        }
    }
}

/// Evolves grid data `init` (node 0 included) from `t0` to the largest of
/// `times`, storing profiles at each of `times`. `origin` is the time of
/// the initial singularity, which sets the geometric step growth.
pub(crate) fn evolve(
    mech: &Mechanism,
    init: Vec<f64>,
    h: f64,
    t0: f64,
    origin: f64,
    times: &[f64],
    grid: &GridParams,
) -> Result<(Vec<Vec<f64>>, u64), LimitError> {
    let n = init.len() - 1;
    if n < 2 {
        return Err(LimitError::Domain("grid needs at least 3 nodes".into()));
    }
    let mut v = init;
    v[0] = 0.0;
    let mut diff = Diffusion {
        s: mech.sigma2 / (2.0 * h * h),
        u_gamma: vec![0.0; n],
        rhs: vec![0.0; n],
        scratch: vec![0.0; n],
        out: vec![0.0; n],
    };
    let floor = h * h / mech.sigma2;
    let mut out = Vec::with_capacity(times.len());
    let mut t = t0;
    let mut steps = 0u64;
    for &target in times {
        if target < t - 1e-12 {
            return Err(LimitError::Domain(format!("output time {target} precedes start {t}")));
        }
        while t < target - 1e-14 * target.abs().max(1.0) {
            let vmax = v.iter().cloned().fold(0.0, f64::max);
            let mut dt = grid.dt_max.min(grid.dt_rel * (t - origin).max(floor));
            if vmax > 0.0 {
                dt = dt.min(0.1 / (mech.c * vmax.powf(mech.alpha - 1.0)));
            }
            // Keep the approach to the target smooth instead of leaving a sliver.
            let remaining = target - t;
            if dt >= remaining {
                dt = remaining;
            } else if 2.0 * dt > remaining {
                dt = 0.5 * remaining;
            }
            react(&mut v[1..], mech, 0.5 * dt);
            diff.step(&mut v[1..], dt);
            react(&mut v[1..], mech, 0.5 * dt);
            t += dt;
            steps += 1;
            if steps > 50_000_000 {
                return Err(LimitError::NonConvergence("time stepping did not reach the final time".into()));
            }
        }
        t = target;
        out.push(v.clone());
    }
    Ok((out, steps))
}

fn output_times(grid: &GridParams, t_end: f64, t0: f64) -> Result<Vec<f64>, LimitError> {
    let mut times: Vec<f64> = grid.output_times.iter().cloned().filter(|&s| s < t_end).collect();
    if times.iter().any(|&s| !(s >= t0)) {
        return Err(LimitError::Domain(format!("output times must lie in [{t0}, {t_end}]")));
    }
    times.push(t_end);
    times.sort_by(f64::total_cmp);
    times.dedup();
    Ok(times)
}

fn node_count(h: f64, y_max: f64) -> Result<usize, LimitError> {
    if !(h > 0.0 && y_max > 2.0 * h) {
        return Err(LimitError::Domain(format!("bad grid: h={h}, y_max={y_max}")));
    }
    let n = (y_max / h).round() as usize;
    if ((n as f64) * h - y_max).abs() > 1e-9 * y_max {
        return Err(LimitError::Domain(format!("y_max={y_max} is not a multiple of h={h}")));
    }
    Ok(n + 1)
}

fn default_y_max(h: f64, sigma2: f64, t_end: f64) -> f64 {
    let raw = 12.0 * (sigma2 * t_end).sqrt();
    // Round up to a multiple of 2h so both refinement levels share nodes.
    (raw / (2.0 * h)).ceil() * 2.0 * h
}

fn sup_on_shared(fine: &[f64], coarse: &[f64]) -> f64 {
    coarse.iter().enumerate().map(|(i, &c)| (fine[2 * i] - c).abs()).fold(0.0, f64::max)
}

/// Solves the problem with bounded initial data `f` from time 0 to `t_end`.
pub fn solve_semilinear<F: Fn(f64) -> f64>(
    f: F,
    alpha: f64,
    c: f64,
    sigma2: f64,
    t_end: f64,
    grid: &GridParams,
) -> Result<PdeSolution, LimitError> {
    let mech = Mechanism::new(alpha, c, sigma2)?;
    if !(t_end > 0.0) {
        return Err(LimitError::Domain(format!("final time must be positive, got {t_end}")));
    }
    let y_max = grid.y_max.unwrap_or_else(|| default_y_max(grid.h, sigma2, t_end));
    let times = output_times(grid, t_end, 0.0)?;
    let run = |h: f64| -> Result<(Vec<Vec<f64>>, u64), LimitError> {
        let n = node_count(h, y_max)?;
        let init: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { f(i as f64 * h) }).collect();
        if init.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(LimitError::Domain("initial data must be finite and non-negative".into()));
        }
        evolve(&mech, init, h, 0.0, 0.0, &times, grid)
    };
    let (values, steps) = run(grid.h)?;
    let mut diagnostics = PdeDiagnostics { steps, ..Default::default() };
    if let Some(tol) = grid.refinement_tol {
        let (coarse, _) = run(2.0 * grid.h)?;
        let change = sup_on_shared(values.last().unwrap(), coarse.last().unwrap());
        diagnostics.refinement_change = Some(change);
        if change > tol {
            return Err(LimitError::NonConvergence(format!("grid refinement changed the solution by {change:e} > {tol:e}")));
        }
    }
    Ok(PdeSolution { h: grid.h, y_max, times, values, diagnostics })
}

/// Tolerance on the sup change of the final profile between successive
/// start-time halvings.
pub const DELTA0_TOL: f64 = 1e-4;

/// Solution started from infinite mass on `(z, ∞)`: `z = 0` gives `v_∞`.
///
/// The singular start is replaced at a small time `δ0`. For `z = 0` the
/// data is the spatially constant extinction value ramped linearly to 0
/// across `[0, √(σ² δ0)]`; for `z > 0` it is the self-similar front of the
/// boundary-free problem centred at `z`, with `δ0` small enough that the
/// front does not feel the boundary. `δ0` is halved until the stored profiles move by less than
/// [`DELTA0_TOL`], or until Richardson extrapolants over successive
/// halvings (with order estimated from the ratio of changes) agree to that
/// tolerance.
pub fn solve_blowup(alpha: f64, c: f64, sigma2: f64, z: f64, t_end: f64, grid: &GridParams) -> Result<PdeSolution, LimitError> {
    let mech = Mechanism::new(alpha, c, sigma2)?;
    if !(z >= 0.0 && t_end > 0.0) {
        return Err(LimitError::Domain(format!("need z >= 0 and t_end > 0, got z={z}, t_end={t_end}")));
    }
    let y_max = grid.y_max.unwrap_or_else(|| default_y_max(grid.h, sigma2, t_end));
    let first_out = grid.output_times.iter().cloned().fold(t_end, f64::min);
    let front = if z > 0.0 { Some(front_profile(&mech)?) } else { None };
    let solve = |h: f64, delta0: f64| -> Result<(Vec<Vec<f64>>, u64, Vec<f64>), LimitError> {
        let n = node_count(h, y_max)?;
        let level = mech.csbp_level(delta0);
        let root = (sigma2 * delta0).sqrt();
        let init: Vec<f64> = (0..n)
            .map(|i| {
                let y = i as f64 * h;
                match &front {
                    Some(f) => delta0.powf(-1.0 / (alpha - 1.0)) * f.eval((y - z) / delta0.sqrt()),
                    None => level * (y / root).clamp(0.0, 1.0),
                }
            })
            .collect();
        let times = output_times(grid, t_end, delta0)?;
        let (values, steps) = evolve(&mech, init, h, delta0, 0.0, &times, grid)?;
        Ok((values, steps, times))
    };
    let refine_delta0 = |h: f64| -> Result<Refined, LimitError> {
        // The ramp must stay resolved by the grid.
        let floor = h * h / sigma2;
        let mut delta0 = (0.01 * first_out).min(0.01 * t_end);
        if front.is_some() {
            // Keep the front clear of the boundary.
            delta0 = delta0.min((z / (FRONT_CLEARANCE * sigma2.sqrt())).powi(2));
        }
        let (mut values, mut steps, times) = solve(h, delta0)?;
        let mut last_change = f64::INFINITY;
        let mut extrapolated: Option<Vec<Vec<f64>>> = None;
        loop {
            let next = 0.5 * delta0;
            if next < floor {
                return Err(LimitError::NonConvergence(format!(
                    "start time refinement hit the grid floor {floor:e} before settling (last change {last_change:e})"
                )));
            }
            let (v2, s2, _) = solve(h, next)?;
            let change = sup_diff(&v2, &values);
            steps += s2;
            delta0 = next;
            if change < DELTA0_TOL {
                return Ok(Refined { values: v2, steps, times, delta0, change, order: None });
            }
            // Richardson step with the order read off successive changes.
            let ratio = change / last_change;
            let mut next_ext = None;
            if ratio > 0.0 && ratio < 0.95 {
                let gain = ratio / (1.0 - ratio);
                let ext: Vec<Vec<f64>> = v2
                    .iter()
                    .zip(&values)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x + (x - y) * gain).max(0.0)).collect())
                    .collect();
                if let Some(prev) = &extrapolated {
                    let ext_change = sup_diff(&ext, prev);
                    if ext_change < DELTA0_TOL {
                        let order = -ratio.log2();
                        return Ok(Refined { values: ext, steps, times, delta0, change: ext_change, order: Some(order) });
                    }
                }
                next_ext = Some(ext);
            }
            extrapolated = next_ext;
            values = v2;
            last_change = change;
        }
    };
    let fine = refine_delta0(grid.h)?;
    let mut diagnostics = PdeDiagnostics {
        steps: fine.steps,
        delta0: Some(fine.delta0),
        delta0_change: Some(fine.change),
        delta0_order: fine.order,
        ..Default::default()
    };
    let (values, times) = (fine.values, fine.times);
    if let Some(tol) = grid.refinement_tol {
        let coarse = refine_delta0(2.0 * grid.h)?.values;
        let change = sup_on_shared(values.last().unwrap(), coarse.last().unwrap());
        diagnostics.refinement_change = Some(change);
        if change > tol {
            return Err(LimitError::NonConvergence(format!("grid refinement changed the solution by {change:e} > {tol:e}")));
        }
    }
    Ok(PdeSolution { h: grid.h, y_max, times, values, diagnostics })
}

struct Refined {
    values: Vec<Vec<f64>>,
    steps: u64,
    times: Vec<f64>,
    delta0: f64,
    change: f64,
    order: Option<f64>,
}

fn sup_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)).fold(0.0, f64::max)
}

/// `v_∞`: the solution with infinite initial mass on the whole half-line.
pub fn solve_v_infinity(alpha: f64, c: f64, sigma2: f64, t_end: f64, grid: &GridParams) -> Result<PdeSolution, LimitError> {
    solve_blowup(alpha, c, sigma2, 0.0, t_end, grid)
}

/// Sup norm over grid nodes in `[lo, hi]` of the discrete stationary
/// residual `(σ²/2) D² K − c·K^α` of a profile `K`.
pub fn stationary_residual<K: Fn(f64) -> f64>(alpha: f64, c: f64, sigma2: f64, profile: K, h: f64, lo: f64, hi: f64) -> Result<f64, LimitError> {
    let mech = Mechanism::new(alpha, c, sigma2)?;
    if !(h > 0.0 && hi >= lo) {
        return Err(LimitError::Domain("residual needs h > 0 and a nonempty range".into()));
    }
    let first = (lo / h).ceil() as i64;
    let last = (hi / h + 1e-9).floor() as i64;
    let mut worst: f64 = 0.0;
    for i in first..=last {
        let y = i as f64 * h;
        let k = profile(y);
        let d2 = (profile(y - h) - 2.0 * k + profile(y + h)) / (h * h);
        worst = worst.max((0.5 * mech.sigma2 * d2 - mech.c * k.powf(mech.alpha)).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_solver_matches_dense_product() {
        let n = 7;
        let (a, s) = (0.3, 2.0);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() + 1.0).collect();
        // rhs = (I − aA) x
        let mut ax = vec![0.0; n];
        apply(&x, -a, s, &mut ax);
        let mut out = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        implicit_solve(&ax, a, s, &mut out, &mut scratch);
        for (p, q) in out.iter().zip(&x) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn exact_reaction_matches_closed_form() {
        let mech = Mechanism::new(2.0, 0.5, 1.0).unwrap();
        let mut v = vec![4.0, 0.0];
        react(&mut v, &mech, 1.0);
        assert!((v[0] - 1.0 / (0.25 + 0.5)).abs() < 1e-15);
        assert_eq!(v[1], 0.0);
    }
}
