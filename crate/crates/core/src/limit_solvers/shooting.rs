//! Shooting for the blow-up problem `(σ²/2) K'' = c·K^α`, `K(0) = 0`,
//! `K(z−) = ∞`.
//!
//! For a trial slope `θ = K'(0)` the trajectory is integrated in `y` until
//! `K` exceeds `10³·θ`, then in `ℓ = ln K`, where the approach to the
//! singularity is regular. The remaining distance beyond the last point is
//! added from the asymptotic growth law. Bisection in `ln θ` matches the
//! blow-up location to `z`.

use serde::{Deserialize, Serialize};

use super::ode::Dopri5;
use crate::numerics::integrate;
use super::{LimitError, Mechanism};

/// Initial bracket for the slope search; each end is pushed out by factors
/// of 10³ while it fails to straddle the target, up to [`THETA_LIMIT`].
pub const THETA_BRACKET: (f64, f64) = (1e-3, 1e6);
pub const THETA_LIMIT: (f64, f64) = (1e-100, 1e100);

const RTOL: f64 = 1e-12;
/// Growth of `K` covered by the logarithmic phase.
const LOG_SPAN: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingSolution {
    pub alpha: f64,
    pub c: f64,
    pub sigma2: f64,
    pub slope_at_0: f64,
    pub blowup_location: f64,
    /// Uniform grid `y_i = i·z/n`, `i < n`.
    pub grid: Vec<f64>,
    pub k_values: Vec<f64>,
    /// Largest `|E(y)| / (1 + K^{α+1})` seen, where `E` is the first
    /// integral `(σ²/4)K'² − (c/(α+1))K^{α+1} − σ²θ²/4`.
    pub first_integral_violation: f64,
    pub bisection_steps: u32,
}

impl ShootingSolution {
    /// `K(y)` for `0 ≤ y < blowup_location`, by integrating from 0 with the
    /// converged slope.
    pub fn value_at(&self, y: f64) -> Result<f64, LimitError> {
        if !(0.0..self.blowup_location).contains(&y) {
            return Err(LimitError::OutsideGrid(y));
        }
        let mech = Mechanism::new(self.alpha, self.c, self.sigma2)?;
        let mut s = y_phase(&mech, self.slope_at_0);
        s.run_to(y)?;
        Ok(s.y[0])
    }
}

fn y_phase(mech: &Mechanism, theta: f64) -> Dopri5<impl FnMut(f64, &[f64], &mut [f64])> {
    let gain = 2.0 * mech.c / mech.sigma2;
    let alpha = mech.alpha;
    let rhs = move |_: f64, s: &[f64], d: &mut [f64]| {
        d[0] = s[1];
        d[1] = gain * s[0].max(0.0).powf(alpha);
    };
    Dopri5::new(rhs, 0.0, vec![0.0, theta], 1e-3 / theta.max(1.0), RTOL, 1e-300)
}

fn energy(mech: &Mechanism, theta: f64, k: f64, p: f64) -> f64 {
    let ka = k.powf(mech.alpha + 1.0);
    let e = 0.25 * mech.sigma2 * p * p - mech.c / (mech.alpha + 1.0) * ka - 0.25 * mech.sigma2 * theta * theta;
    (e / (1.0 + ka)).abs()
}

/// Blow-up location of the trajectory with slope `theta`, and the largest
/// relative first-integral violation along it.
pub fn blowup_location(alpha: f64, c: f64, sigma2: f64, theta: f64) -> Result<(f64, f64), LimitError> {
    let mech = Mechanism::new(alpha, c, sigma2)?;
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(LimitError::Domain(format!("slope must be positive, got {theta}")));
    }
    locate(&mech, theta)
}

fn locate(mech: &Mechanism, theta: f64) -> Result<(f64, f64), LimitError> {
    let switch = 1e3 * theta;
    let mut violation: f64 = 0.0;
    let mut s = y_phase(mech, theta);
    while s.y[0] <= switch {
        s.step(f64::INFINITY)?;
        violation = violation.max(energy(mech, theta, s.y[0], s.y[1]));
        if s.steps > 1_000_000 {
            return Err(LimitError::NonConvergence("shooting trajectory did not grow".into()));
        }
    }
    let (y0, k0, p0) = (s.t, s.y[0], s.y[1]);
    let gain = 2.0 * mech.c / mech.sigma2;
    let alpha = mech.alpha;
    // State (y, P) as functions of ℓ = ln K.
    let rhs = move |l: f64, st: &[f64], d: &mut [f64]| {
        let k = l.exp();
        d[0] = k / st[1];
        d[1] = gain * k.powf(alpha + 1.0) / st[1];
    };
    let l0 = k0.ln();
    let mut lg = Dopri5::new(rhs, l0, vec![y0, p0], 1e-2, RTOL, 1e-300);
    let l_end = l0 + LOG_SPAN;
    while lg.t < l_end {
        lg.step(l_end)?;
        violation = violation.max(energy(mech, theta, lg.t.exp(), lg.y[1]));
    }
    let k_end = l_end.exp();
    // Beyond K_end, P ≈ √a·K^{(α+1)/2} with a = 4c/(σ²(α+1)).
    let a = 4.0 * mech.c / (mech.sigma2 * (mech.alpha + 1.0));
    let tail = 2.0 / ((mech.alpha - 1.0) * a.sqrt()) * k_end.powf(0.5 * (1.0 - mech.alpha));
    Ok((lg.y[0] + tail, violation))
}

/// Slope `K'(0)` on `(0, z)` from the first integral:
/// `θ = (I/z)^{(α+1)/(α−1)}` with `I = ∫_0^∞ du/√(1 + a·u^{α+1})`,
/// `a = 4c/(σ²(α+1))`.
pub fn slope_by_quadrature(alpha: f64, c: f64, sigma2: f64, z: f64) -> Result<f64, LimitError> {
    let mech = Mechanism::new(alpha, c, sigma2)?;
    if !(z > 0.0) {
        return Err(LimitError::Domain(format!("need z > 0, got {z}")));
    }
    let a = 4.0 * mech.c / (mech.sigma2 * (alpha + 1.0));
    let head = |u: f64| 1.0 / (1.0 + a * u.powf(alpha + 1.0)).sqrt();
    // u = v^{-q} on (1, ∞) with q = 2/(α−1) leaves a bounded integrand.
    let q = 2.0 / (alpha - 1.0);
    let tail = |v: f64| q / (v.powf(q * (alpha + 1.0)) + a).sqrt();
    let i = integrate(&head, 0.0, 1.0, 1e-14) + integrate(&tail, 0.0, 1.0, 1e-14);
    Ok((i / z).powf((alpha + 1.0) / (alpha - 1.0)))
}

/// Solves the problem on `(0, 1)` to relative blow-up tolerance `tol`.
pub fn shoot_k(alpha: f64, c: f64, sigma2: f64, tol: f64) -> Result<ShootingSolution, LimitError> {
    shoot_k_on(alpha, c, sigma2, 1.0, tol, 200)
}

/// Solves the problem on `(0, z)`; the profile is stored at `n` grid points.
pub fn shoot_k_on(alpha: f64, c: f64, sigma2: f64, z: f64, tol: f64, n: usize) -> Result<ShootingSolution, LimitError> {
    let mech = Mechanism::new(alpha, c, sigma2)?;
    if !(z > 0.0 && tol > 0.0 && n >= 2) {
        return Err(LimitError::Domain(format!("need z > 0, tol > 0 and n >= 2, got z={z}, tol={tol}, n={n}")));
    }
    let (mut lo, mut hi) = THETA_BRACKET;
    let (mut l_lo, _) = locate(&mech, lo)?;
    let (mut l_hi, _) = locate(&mech, hi)?;
    while l_lo <= z && lo > THETA_LIMIT.0 {
        lo *= 1e-3;
        l_lo = locate(&mech, lo)?.0;
    }
    while l_hi >= z && hi < THETA_LIMIT.1 {
        hi *= 1e3;
        l_hi = locate(&mech, hi)?.0;
    }
    if !(l_lo > z && l_hi < z) {
        return Err(LimitError::BracketingFailure { lo, hi, at_lo: l_lo, at_hi: l_hi, target: z });
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut steps = 0;
    let (theta, location, violation) = loop {
        let mid = 0.5 * (a + b);
        let (loc, viol) = locate(&mech, mid.exp())?;
        steps += 1;
        if (loc - z).abs() <= tol * z || steps >= 200 {
            if (loc - z).abs() > tol * z {
                return Err(LimitError::NonConvergence(format!("bisection stalled at blow-up location {loc}")));
            }
            break (mid.exp(), loc, viol);
        }
        // Larger slopes blow up earlier.
        if loc > z {
            a = mid;
        } else {
            b = mid;
        }
    };
    let grid: Vec<f64> = (0..n).map(|i| i as f64 * z / n as f64).collect();
    let mut k_values = Vec::with_capacity(n);
    let mut s = y_phase(&mech, theta);
    for &y in &grid {
        s.run_to(y)?;
        k_values.push(s.y[0]);
    }
    Ok(ShootingSolution {
        alpha,
        c,
        sigma2,
        slope_at_0: theta,
        blowup_location: location,
        grid,
        k_values,
        first_integral_violation: violation,
        bisection_steps: steps,
    })
}
