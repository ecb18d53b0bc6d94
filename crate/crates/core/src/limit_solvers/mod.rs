//! Deterministic numerics for the limit objects: the Galton–Watson survival
//! ODE, the CSBP extinction formula, the semilinear half-line PDE, the
//! blow-up boundary problem and the functionals built on them.

mod front;
pub mod functionals;
pub mod ode;
pub mod pde;
pub mod shooting;

pub use functionals::{
    constant_c0inf, eta1_laplace, g_functional, n_measure_survival, yaglom_max_cdf,
    yaglom_max_curve, Extrapolation,
};
pub use ode::{csbp_extinction, gw_survival};
pub use pde::{solve_blowup, solve_semilinear, solve_v_infinity, stationary_residual, GridParams, PdeDiagnostics, PdeSolution};
pub use shooting::{blowup_location, shoot_k, shoot_k_on, slope_by_quadrature, ShootingSolution};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LimitError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("time {0} is not stored in the solution")]
    NotStored(f64),
    #[error("point {0} lies outside the grid")]
    OutsideGrid(f64),
    #[error("slope bracket [{lo}, {hi}] does not straddle {target}: blow-up at {at_lo} and {at_hi}")]
    BracketingFailure { lo: f64, hi: f64, at_lo: f64, at_hi: f64, target: f64 },
}

/// Stable mechanism `φ(λ) = c·λ^α` together with the motion variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub alpha: f64,
    pub c: f64,
    pub sigma2: f64,
}

impl Mechanism {
    pub fn new(alpha: f64, c: f64, sigma2: f64) -> Result<Self, LimitError> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(LimitError::Domain(format!("alpha must lie in (1, 2], got {alpha}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(LimitError::Domain(format!("mechanism constant must be positive, got {c}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(LimitError::Domain(format!("variance must be positive, got {sigma2}")));
        }
        Ok(Self { alpha, c, sigma2 })
    }

    pub fn phi(&self, v: f64) -> f64 {
        self.c * v.max(0.0).powf(self.alpha)
    }

    /// Space-homogeneous value `((α−1)c·r)^{−1/(α−1)}`.
    pub fn csbp_level(&self, r: f64) -> f64 {
        ((self.alpha - 1.0) * self.c * r).powf(-1.0 / (self.alpha - 1.0))
    }
}
