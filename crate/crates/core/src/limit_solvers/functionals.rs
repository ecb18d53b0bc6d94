//! Functionals of PDE solutions: the survival value of the canonical
//! measure, the boundary-layer integral `G(1−w, w)` and its `w → 0` limit,
//! the Yaglom law of the rescaled maximum and the Laplace functional of the
//! limiting conditioned measure.

use serde::{Deserialize, Serialize};

use super::pde::{solve_blowup, GridParams, PdeSolution};
use super::LimitError;
use crate::numerics::{bisect, integrate};

/// Largest relative disagreement tolerated between extrapolants.
pub const EXTRAPOLATION_TOL: f64 = 0.02;
/// Cut-off of the Gaussian weight in the boundary-layer integral.
const Z_CUT: f64 = 40.0;
const QUAD_TOL: f64 = 1e-8;

/// `v_∞(1, y)` interpolated from a solution that stores time 1.
pub fn n_measure_survival(pde: &PdeSolution, y: f64) -> Result<f64, LimitError> {
    pde.at(1.0, y)
}

/// `(1/√w)·(2/√(2πσ²))·∫_0^∞ z e^{−z²/2} v(1−w, zσ√w) dz` for the stored
/// profile at time `1 − w`.
pub fn g_functional(pde: &PdeSolution, sigma2: f64, w: f64) -> Result<f64, LimitError> {
    if !(w > 0.0 && w < 1.0 && sigma2 > 0.0) {
        return Err(LimitError::Domain(format!("need w in (0, 1) and sigma2 > 0, got w={w}, sigma2={sigma2}")));
    }
    let t = 1.0 - w;
    let profile = pde.profile(t).ok_or(LimitError::NotStored(t))?;
    let scale = (sigma2 * w).sqrt();
    let reach = pde.y_max / scale;
    if reach < 10.0 {
        return Err(LimitError::OutsideGrid(10.0 * scale));
    }
    let z_max = reach.min(Z_CUT);
    // Integrate cell by cell so the interpolant is smooth on each piece.
    let dz = pde.h / scale;
    let cells = (z_max / dz).ceil() as usize;
    let mut total = 0.0;
    for i in 0..cells {
        let (a, b) = (i as f64 * dz, ((i + 1) as f64 * dz).min(z_max));
        let (va, vb) = (profile[i], profile[(i + 1).min(profile.len() - 1)]);
        let f = |z: f64| {
            let s = (z - a) / dz;
            z * (-0.5 * z * z).exp() * (va + (vb - va) * s)
        };
        total += integrate(&f, a, b, QUAD_TOL * (b - a) / z_max);
    }
    Ok(total * 2.0 / (2.0 * std::f64::consts::PI * sigma2).sqrt() / w.sqrt())
}

/// Limit of `G(w)` as `w → 0` fitted as `G(w) = L + a·w^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub w_values: Vec<f64>,
    pub g_values: Vec<f64>,
    pub value: f64,
    /// Empirical order `p`; `None` when the values do not move.
    pub order: Option<f64>,
    /// Relative disagreement between the extrapolant used and the
    /// alternative one (from the previous triple, or with `p = 1` when only
    /// three values are given).
    pub spread: f64,
}

fn fit_triple(w: [f64; 3], g: [f64; 3]) -> Option<(f64, f64)> {
    let d12 = g[0] - g[1];
    let d23 = g[1] - g[2];
    if d23 == 0.0 || d12 / d23 <= 0.0 {
        return None;
    }
    let target = d12 / d23;
    let ratio = |p: f64| (w[0].powf(p) - w[1].powf(p)) / (w[1].powf(p) - w[2].powf(p)) - target;
    let (lo, hi) = (0.05, 6.0);
    if ratio(lo) * ratio(hi) > 0.0 {
        return None;
    }
    let p = bisect(ratio, lo, hi, 1e-12);
    Some((p, extrapolate_with(w, g, p)))
}

fn extrapolate_with(w: [f64; 3], g: [f64; 3], p: f64) -> f64 {
    let a = (g[1] - g[2]) / (w[1].powf(p) - w[2].powf(p));
    g[2] - a * w[2].powf(p)
}

fn extrapolate(w_values: &[f64], g_values: Vec<f64>) -> Result<Extrapolation, LimitError> {
    let n = g_values.len();
    let scale = g_values.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let flat = g_values.iter().all(|g| (g - g_values[n - 1]).abs() <= 1e-12 * scale);
    if flat {
        return Ok(Extrapolation { w_values: w_values.to_vec(), value: g_values[n - 1], g_values, order: None, spread: 0.0 });
    }
    let triple = |k: usize| -> ([f64; 3], [f64; 3]) {
        ([w_values[k], w_values[k + 1], w_values[k + 2]], [g_values[k], g_values[k + 1], g_values[k + 2]])
    };
    let (w, g) = triple(n - 3);
    let (p, value) = fit_triple(w, g)
        .ok_or_else(|| LimitError::NonConvergence(format!("no consistent order in w for values {g_values:?}")))?;
    let alternative = if n >= 4 {
        let (w0, g0) = triple(n - 4);
        fit_triple(w0, g0).map(|(_, v)| v).unwrap_or(f64::NAN)
    } else {
        extrapolate_with(w, g, 1.0)
    };
    let spread = ((value - alternative) / value).abs();
    if !(spread <= EXTRAPOLATION_TOL) {
        return Err(LimitError::NonConvergence(format!(
            "extrapolants {value} and {alternative} differ by {:.2}%",
            100.0 * spread
        )));
    }
    Ok(Extrapolation { w_values: w_values.to_vec(), g_values, value, order: Some(p), spread })
}

fn check_w(w_values: &[f64]) -> Result<(), LimitError> {
    if w_values.len() < 3 || w_values.windows(2).any(|p| !(p[1] < p[0])) || w_values.iter().any(|&w| !(w > 0.0 && w < 1.0)) {
        return Err(LimitError::Domain(format!("need at least three decreasing w values in (0, 1), got {w_values:?}")));
    }
    Ok(())
}

/// `lim_{w→0} G(1−w, w)` for a `v_∞` solution storing the times `1 − w`.
pub fn constant_c0inf(pde: &PdeSolution, sigma2: f64, w_values: &[f64]) -> Result<Extrapolation, LimitError> {
    check_w(w_values)?;
    let g = w_values.iter().map(|&w| g_functional(pde, sigma2, w)).collect::<Result<Vec<_>, _>>()?;
    extrapolate(w_values, g)
}

/// `1 − (1/C)·lim_{w→0} G_f(1−w, w)` for the solution with initial data `f`.
pub fn eta1_laplace(pde_f: &PdeSolution, c0inf: f64, sigma2: f64, w_values: &[f64]) -> Result<f64, LimitError> {
    if !(c0inf > 0.0) {
        return Err(LimitError::Domain(format!("the normalising constant must be positive, got {c0inf}")));
    }
    check_w(w_values)?;
    let g = w_values.iter().map(|&w| g_functional(pde_f, sigma2, w)).collect::<Result<Vec<_>, _>>()?;
    Ok(1.0 - extrapolate(w_values, g)?.value / c0inf)
}

fn yaglom_grid(grid: &GridParams) -> GridParams {
    GridParams { output_times: Vec::new(), ..grid.clone() }
}

/// `1 − u_z(1, y)/v_∞(1, y)`: limiting probability that the rescaled
/// maximum of a surviving population started at `y` stays below `z`.
pub fn yaglom_max_cdf(alpha: f64, c: f64, sigma2: f64, y: f64, z: f64, grid: &GridParams) -> Result<f64, LimitError> {
    Ok(yaglom_max_curve(alpha, c, sigma2, y, &[z], grid)?[0].1)
}

/// [`yaglom_max_cdf`] on a list of levels, sharing the `v_∞` solve.
pub fn yaglom_max_curve(alpha: f64, c: f64, sigma2: f64, y: f64, z_values: &[f64], grid: &GridParams) -> Result<Vec<(f64, f64)>, LimitError> {
    if !(y > 0.0) || z_values.iter().any(|&z| !(z > 0.0)) {
        return Err(LimitError::Domain(format!("need y > 0 and z > 0, got y={y}, z={z_values:?}")));
    }
    let grid = yaglom_grid(grid);
    let v = solve_blowup(alpha, c, sigma2, 0.0, 1.0, &grid)?.at(1.0, y)?;
    z_values
        .iter()
        .map(|&z| {
            let u = solve_blowup(alpha, c, sigma2, z, 1.0, &grid)?.at(1.0, y)?;
            Ok((z, (1.0 - u / v).clamp(0.0, 1.0)))
        })
        .collect()
}
