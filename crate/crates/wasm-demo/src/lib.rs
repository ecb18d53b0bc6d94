//! Three library calls exposed to a static page: the survival curve of the
//! unkilled branching process, the blow-up profile from shooting, and a
//! small Monte Carlo survival estimate for the killed system.

use bkl_core::estimators::{survival_tail, Ensemble, YMode};
use bkl_core::levy_motion::LevyModel;
use bkl_core::limit_solvers::{gw_survival, shoot_k_on, slope_by_quadrature};
use bkl_core::offspring::{make_binary, make_stable_tail, BranchingSpec};
use wasm_bindgen::prelude::*;

/// Largest replica count accepted from the page.
pub const MAX_REPLICAS: u32 = 200_000;

fn branching(alpha: f64, scale: f64, beta: f64) -> Result<BranchingSpec, String> {
    let law = if alpha == 2.0 { make_binary() } else { make_stable_tail(alpha, scale).map_err(|e| e.to_string())? };
    BranchingSpec::new(law, beta).map_err(|e| e.to_string())
}

/// `[t_0, u(t_0), t_1, u(t_1), …]` on `points` equally spaced times in
/// `(0, t_max]`. `alpha = 2` selects the binary law.
pub fn survival_curve(alpha: f64, scale: f64, beta: f64, t_max: f64, points: u32) -> Result<Vec<f64>, String> {
    if !(t_max > 0.0) || points == 0 || points > 2000 {
        return Err("need t_max > 0 and 1..=2000 points".into());
    }
    let spec = branching(alpha, scale, beta)?;
    let mut out = Vec::with_capacity(2 * points as usize);
    for i in 1..=points {
        let t = t_max * i as f64 / points as f64;
        out.push(t);
        out.push(gw_survival(&spec, t).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

/// `[θ, θ_quadrature, violation, K(y_0), …, K(y_{n−1})]` for the blow-up
/// problem on `(0, 1)` with `y_i = i/n`.
pub fn blowup_profile(alpha: f64, c: f64, sigma2: f64, points: u32) -> Result<Vec<f64>, String> {
    if !(2..=2000).contains(&points) {
        return Err("need 2..=2000 points".into());
    }
    let sol = shoot_k_on(alpha, c, sigma2, 1.0, 1e-10, points as usize).map_err(|e| e.to_string())?;
    let quad = slope_by_quadrature(alpha, c, sigma2, 1.0).map_err(|e| e.to_string())?;
    let mut out = vec![sol.slope_at_0, quad, sol.first_integral_violation];
    out.extend(sol.k_values);
    Ok(out)
}

/// `[p, standard error, t·p]` for `P(ζ > t)` of the binary Brownian system
/// killed at 0 and started at `y`.
pub fn killed_survival(y: f64, t: f64, replicas: u32, seed: u32) -> Result<Vec<f64>, String> {
    if replicas == 0 || replicas > MAX_REPLICAS {
        return Err(format!("replicas must lie in 1..={MAX_REPLICAS}"));
    }
    let model = LevyModel::brownian(1.0).map_err(|e| e.to_string())?;
    let mut ens = Ensemble::new(BranchingSpec::binary(), model, seed as u64, replicas as u64);
    ens.threads = 1;
    let est = survival_tail(&ens, YMode::Fixed, y, &[t]).map_err(|e| e.to_string())?[0];
    Ok(vec![est.value, est.std_err, t * est.value])
}

#[wasm_bindgen(js_name = survivalCurve)]
pub fn survival_curve_js(alpha: f64, scale: f64, beta: f64, t_max: f64, points: u32) -> Result<Vec<f64>, JsError> {
    survival_curve(alpha, scale, beta, t_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = blowupProfile)]
pub fn blowup_profile_js(alpha: f64, c: f64, sigma2: f64, points: u32) -> Result<Vec<f64>, JsError> {
    blowup_profile(alpha, c, sigma2, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = killedSurvival)]
pub fn killed_survival_js(y: f64, t: f64, replicas: u32, seed: u32) -> Result<Vec<f64>, JsError> {
    killed_survival(y, t, replicas, seed).map_err(|e| JsError::new(&e))
}

/// Mechanism constant for the law the page selected, so the blow-up panel
/// can follow the survival panel.
#[wasm_bindgen(js_name = mechanismConstant)]
pub fn mechanism_constant_js(alpha: f64, scale: f64, beta: f64) -> Result<f64, JsError> {
    branching(alpha, scale, beta).map(|s| s.mechanism_constant()).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_curve_is_two_over_t_plus_two() {
        let v = survival_curve(2.0, 0.0, 1.0, 10.0, 5).unwrap();
        for pair in v.chunks(2) {
            assert!((pair[1] - 2.0 / (pair[0] + 2.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn profile_header_agrees() {
        let v = blowup_profile(2.0, 0.5, 1.0, 50).unwrap();
        assert!((v[0] - v[1]).abs() < 1e-6 * v[1]);
        assert_eq!(v.len(), 53);
        assert_eq!(v[3], 0.0);
    }

    #[test]
    fn inputs_are_checked() {
        assert!(killed_survival(1.0, 1.0, 0, 1).is_err());
        assert!(survival_curve(1.5, 50.0, 1.0, 1.0, 3).is_err());
        let p = killed_survival(1.0, 0.5, 500, 3).unwrap();
        assert!(p[0] > 0.0 && p[0] < 1.0);
    }
}
