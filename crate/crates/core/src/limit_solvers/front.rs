//! Self-similar front of the solution started from infinite mass on a
//! half-line `(z, ∞)` without boundary.
//!
//! Writing `v(t, y) = t^{−1/(α−1)} F((y − z)/√t)` turns the equation into
//! `(σ²/2) F'' + (ξ/2) F' + F/(α−1) − c F^α = 0` with `F(−∞) = 0` and
//! `F(∞) = ((α−1)c)^{−1/(α−1)}`. The profile is the steady state of the
//! same operator in logarithmic time, which is reached by implicit
//! pseudo-time stepping.

use super::{LimitError, Mechanism};

/// Half-width of the `ξ` window in units of `σ`.
const FRONT_REACH: f64 = 10.0;

#[derive(Debug, Clone)]
pub(crate) struct FrontProfile {
    xi_min: f64,
    dxi: f64,
    values: Vec<f64>,
    level: f64,
}

impl FrontProfile {
    pub(crate) fn eval(&self, xi: f64) -> f64 {
        let s = (xi - self.xi_min) / self.dxi;
        if s <= 0.0 {
            return 0.0;
        }
        let last = self.values.len() - 1;
        if s >= last as f64 {
            return self.level;
        }
        let i = s.floor() as usize;
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

/// Tridiagonal solve with sub-diagonal `a`, diagonal `b`, super-diagonal `c`.
fn tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64], x: &mut [f64], scratch: &mut [f64]) {
    let n = d.len();
    scratch[0] = c[0] / b[0];
    x[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * scratch[i - 1];
        scratch[i] = c[i] / m;
        x[i] = (d[i] - a[i] * x[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        x[i] -= scratch[i] * x[i + 1];
    }
}

pub(crate) fn front_profile(mech: &Mechanism) -> Result<FrontProfile, LimitError> {
    let sigma = mech.sigma2.sqrt();
    let reach = FRONT_REACH * sigma;
    let dxi = 0.005 * sigma;
    let n = (2.0 * reach / dxi).round() as usize;
    let level = mech.csbp_level(1.0);
    let inv = 1.0 / (mech.alpha - 1.0);
    // Interior unknowns 1..n, ends fixed at 0 and `level`.
    let m = n - 1;
    let xi = |i: usize| -reach + i as f64 * dxi;
    let mut f: Vec<f64> = (1..n).map(|i| level * (xi(i) / sigma + 0.5).clamp(0.0, 1.0)).collect();
    let ds = 0.01;
    let diff = 0.5 * mech.sigma2 / (dxi * dxi);
    let (mut a, mut b, mut c) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for k in 0..m {
        let adv = 0.25 * xi(k + 1) / dxi;
        a[k] = -ds * (diff - adv);
        b[k] = 1.0 + 2.0 * ds * diff;
        c[k] = -ds * (diff + adv);
    }
    let right_coupling = ds * (diff + 0.25 * xi(n - 1) / dxi);
    let mut rhs = vec![0.0; m];
    let mut next = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    for _ in 0..200_000 {
        for k in 0..m {
            rhs[k] = f[k] + ds * (inv * f[k] - mech.phi(f[k]));
        }
        rhs[m - 1] += right_coupling * level;
        tridiagonal(&a, &b, &c, &rhs, &mut next, &mut scratch);
        let change = next.iter().zip(&f).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut f, &mut next);
        if change < 1e-13 * level * ds {
            let mut values = Vec::with_capacity(n + 1);
            values.push(0.0);
            values.extend(f.iter().map(|v| v.max(0.0)));
            values.push(level);
            return Ok(FrontProfile { xi_min: -reach, dxi, values, level });
        }
    }
    Err(LimitError::NonConvergence("front profile did not reach a steady state".into()))
}
