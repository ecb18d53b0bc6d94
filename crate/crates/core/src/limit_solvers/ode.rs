//! Adaptive Dormand–Prince 5(4) integration and the survival ODE.

use crate::offspring::BranchingSpec;

use super::LimitError;

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dormand–Prince stepper for `y' = f(t, y)` with first-same-as-last reuse.
pub(crate) struct Dopri5<F> {
    f: F,
    pub t: f64,
    pub y: Vec<f64>,
    h: f64,
    rtol: f64,
    atol: f64,
    k: [Vec<f64>; 7],
    pub steps: u64,
}

impl<F: FnMut(f64, &[f64], &mut [f64])> Dopri5<F> {
    pub fn new(mut f: F, t0: f64, y0: Vec<f64>, h0: f64, rtol: f64, atol: f64) -> Self {
        let n = y0.len();
        let mut k: [Vec<f64>; 7] = Default::default();
        for ki in k.iter_mut() {
            *ki = vec![0.0; n];
        }
        f(t0, &y0, &mut k[0]);
        Dopri5 { f, t: t0, y: y0, h: h0, rtol, atol, k, steps: 0 }
    }

    /// Takes one accepted step that does not pass `t_max`.
    pub fn step(&mut self, t_max: f64) -> Result<(), LimitError> {
        let n = self.y.len();
        let mut tmp = vec![0.0; n];
        let mut y_new = vec![0.0; n];
        for _ in 0..10_000 {
            let h = self.h.min(t_max - self.t);
            if !(h > 0.0) || h < 1e-15 * self.t.abs().max(1.0) {
                if t_max - self.t <= 1e-15 * self.t.abs().max(1.0) {
                    self.t = t_max;
                    return Ok(());
                }
                return Err(LimitError::NonConvergence(format!("step size underflow at t = {}", self.t)));
            }
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = self.y[i];
                    for j in 0..s {
                        acc += h * A[s][j] * self.k[j][i];
                    }
                    tmp[i] = acc;
                }
                if s == 6 {
                    y_new.copy_from_slice(&tmp);
                }
                (self.f)(self.t + C[s] * h, &tmp, &mut self.k[s]);
            }
            // Last stage evaluated at the fifth-order solution (FSAL).
            let mut err = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for s in 0..7 {
                    e += E[s] * self.k[s][i];
                }
                let scale = self.atol + self.rtol * self.y[i].abs().max(y_new[i].abs());
                err += (h * e / scale).powi(2);
            }
            let err = (err / n as f64).sqrt();
            if !err.is_finite() {
                self.h = 0.25 * h;
                continue;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                self.t += h;
                self.y.copy_from_slice(&y_new);
                self.k.swap(0, 6);
                self.h = h * factor;
                self.steps += 1;
                return Ok(());
            }
            self.h = h * factor.min(1.0);
        }
        Err(LimitError::NonConvergence(format!("too many rejected steps at t = {}", self.t)))
    }

    /// Integrates up to `t_end` exactly.
    pub fn run_to(&mut self, t_end: f64) -> Result<(), LimitError> {
        while self.t < t_end {
            self.step(t_end)?;
        }
        Ok(())
    }
}

/// Survival probability `u(t)` of the unkilled branching process, from
/// `u' = −φ(u)`, `u(0) = 1`, to relative tolerance 1e−10.
pub fn gw_survival(spec: &BranchingSpec, t: f64) -> Result<f64, LimitError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(LimitError::Domain(format!("survival time must be finite and >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let rhs = |_: f64, u: &[f64], du: &mut [f64]| {
        du[0] = -spec.phi(u[0].clamp(0.0, 1.0)).unwrap_or(0.0);
    };
    let mut solver = Dopri5::new(rhs, 0.0, vec![1.0], 1e-3, 1e-11, 1e-300);
    solver.run_to(t)?;
    Ok(solver.y[0])
}

/// `−log P(X_r = 0)` for the continuous-state branching process with
/// mechanism `c·λ^α`; independent of the starting point.
pub fn csbp_extinction(alpha: f64, c: f64, r: f64, _y: f64) -> Result<f64, LimitError> {
    if !(r > 0.0) {
        return Err(LimitError::Domain(format!("extinction time must be positive, got {r}")));
    }
    if !(alpha > 1.0 && alpha <= 2.0 && c > 0.0) {
        return Err(LimitError::Domain(format!("need alpha in (1, 2] and c > 0, got alpha={alpha}, c={c}")));
    }
    Ok(((alpha - 1.0) * c * r).powf(-1.0 / (alpha - 1.0)))
}
