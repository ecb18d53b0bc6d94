//! Critical offspring laws, their generating-function transforms and the
//! stable branching-mechanism constant.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::numerics::zeta_tail;

/// Largest offspring number covered by the sampling table of a Pareto tail.
pub const TABLE_MAX: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OffspringError {
    #[error("scale {scale} is infeasible for alpha {alpha}: p_0 or p_1 would be negative or p_1 = 1")]
    InfeasibleScale { alpha: f64, scale: f64 },
    #[error("stability index {0} outside (1, 2)")]
    InvalidAlpha(f64),
    #[error("probabilities must lie in [0,1] and sum to 1 (sum = {0})")]
    NotNormalized(f64),
    #[error("offspring mean {0} differs from 1")]
    NotCritical(f64),
    #[error("argument {0} outside the domain")]
    Domain(f64),
    #[error("branching rate must be positive, got {0}")]
    InvalidRate(f64),
}

/// Serialized form of an offspring law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Binary,
    Stable { alpha: f64, scale: f64 },
    Finite { probabilities: Vec<f64> },
}

/// Pareto tail `p_k = scale · k^{-(1+alpha)}` for every `k ≥ start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoTail {
    pub alpha: f64,
    pub scale: f64,
    pub start: u64,
}

impl ParetoTail {
    fn prob(&self, k: u64) -> f64 {
        self.scale * (k as f64).powf(-1.0 - self.alpha)
    }

    /// `P(K ≥ k)` contributed by the tail, for `k ≥ start`.
    fn survival(&self, k: u64) -> f64 {
        self.scale * zeta_tail(1.0 + self.alpha, k)
    }
}

/// A critical offspring law: a finite prefix `p_0..p_K` and an optional
/// analytic Pareto tail beyond it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "LawSpec", try_from = "LawSpec")]
pub struct OffspringLaw {
    spec: LawSpec,
    prefix: Vec<f64>,
    tail: Option<ParetoTail>,
    alpha: f64,
    kappa: f64,
    table: Arc<OnceLock<Vec<f64>>>,
}

impl PartialEq for OffspringLaw {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl From<OffspringLaw> for LawSpec {
    fn from(law: OffspringLaw) -> Self {
        law.spec
    }
}

impl TryFrom<LawSpec> for OffspringLaw {
    type Error = OffspringError;
    fn try_from(spec: LawSpec) -> Result<Self, Self::Error> {
        match spec {
            LawSpec::Binary => Ok(make_binary()),
            LawSpec::Stable { alpha, scale } => make_stable_tail(alpha, scale),
            LawSpec::Finite { probabilities } => OffspringLaw::critical_from_probabilities(probabilities),
        }
    }
}

/// The law `p_0 = p_2 = 1/2`.
pub fn make_binary() -> OffspringLaw {
    OffspringLaw {
        spec: LawSpec::Binary,
        prefix: vec![0.5, 0.0, 0.5],
        tail: None,
        alpha: 2.0,
        kappa: 1.0,
        table: Arc::default(),
    }
}

/// Stable-tail law with `p_k = s·k^{-(1+α)}` for `k ≥ 2`, normalized and made
/// critical through `p_0` and `p_1`.
pub fn make_stable_tail(alpha: f64, scale: f64) -> Result<OffspringLaw, OffspringError> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(OffspringError::InvalidAlpha(alpha));
    }
    let infeasible = OffspringError::InfeasibleScale { alpha, scale };
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(infeasible);
    }
    let mean_tail = scale * zeta_tail(alpha, 2);
    let mass_tail = scale * zeta_tail(1.0 + alpha, 2);
    let p1 = 1.0 - mean_tail;
    let p0 = 1.0 - p1 - mass_tail;
    if p1 < 0.0 || p0 < 0.0 {
        return Err(infeasible);
    }
    Ok(OffspringLaw {
        spec: LawSpec::Stable { alpha, scale },
        prefix: vec![p0, p1],
        tail: Some(ParetoTail { alpha, scale, start: 2 }),
        alpha,
        kappa: scale / alpha,
        table: Arc::default(),
    })
}

impl OffspringLaw {
    /// Finite law from explicit probabilities; only normalization is checked.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Result<Self, OffspringError> {
        let sum: f64 = probabilities.iter().sum();
        if probabilities.is_empty()
            || probabilities.iter().any(|p| !(0.0..=1.0).contains(p))
            || (sum - 1.0).abs() > 1e-12
        {
            return Err(OffspringError::NotNormalized(sum));
        }
        let kappa = probabilities.iter().enumerate().map(|(k, p)| (k * k.saturating_sub(1)) as f64 * p).sum();
        Ok(OffspringLaw {
            spec: LawSpec::Finite { probabilities: probabilities.clone() },
            prefix: probabilities,
            tail: None,
            alpha: 2.0,
            kappa,
            table: Arc::default(),
        })
    }

    /// Finite law that must also be critical with `p_1 ≠ 1`.
    pub fn critical_from_probabilities(probabilities: Vec<f64>) -> Result<Self, OffspringError> {
        let law = Self::from_probabilities(probabilities)?;
        let m = law.mean();
        if (m - 1.0).abs() > 1e-12 || law.prefix.get(1).copied() == Some(1.0) {
            return Err(OffspringError::NotCritical(m));
        }
        Ok(law)
    }

    pub fn spec(&self) -> &LawSpec {
        &self.spec
    }

    /// Stability index; 2 for finite-variance laws.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Tail constant `κ(α)`; the second factorial moment when `α = 2`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn tail(&self) -> Option<ParetoTail> {
        self.tail
    }

    /// `p_k`.
    pub fn prob(&self, k: u64) -> f64 {
        if (k as usize) < self.prefix.len() {
            return self.prefix[k as usize];
        }
        match self.tail {
            Some(t) if k >= t.start => t.prob(k),
            _ => 0.0,
        }
    }

    /// `P(K ≥ k)`.
    pub fn survival(&self, k: u64) -> f64 {
        if k == 0 {
            return 1.0;
        }
        let mut s = match self.tail {
            Some(t) => t.survival(t.start.max(k)),
            None => 0.0,
        };
        let top = self.tail.map_or(self.prefix.len() as u64, |t| t.start);
        for j in (k..top).rev() {
            s += self.prob(j);
        }
        s
    }

    /// Total probability mass.
    pub fn total_mass(&self) -> f64 {
        let tail = self.tail.map_or(0.0, |t| t.survival(t.start));
        self.prefix.iter().sum::<f64>() + tail
    }

    /// Offspring mean.
    pub fn mean(&self) -> f64 {
        let head: f64 = self.prefix.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        head + self.tail.map_or(0.0, |t| t.scale * zeta_tail(t.alpha, t.start))
    }

    /// `Σ_k p_k[(1−v)^k − 1 + k v]`, which equals `Σ p_k (1−v)^k − (1−v)` for
    /// a critical law but is free of cancellation for small `v`.
    fn centered_series(&self, v: f64) -> f64 {
        let head: f64 = self.prefix.iter().enumerate().map(|(k, p)| p * centered_power(k as f64, v)).sum();
        head + self.tail.map_or(0.0, |t| pareto_centered_sum(t, v))
    }

    /// Sample an offspring number by inversion.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match (&self.spec, self.tail) {
            (LawSpec::Binary, _) => {
                if rng.random::<bool>() {
                    2
                } else {
                    0
                }
            }
            (_, None) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, p) in self.prefix.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return k as u64;
                    }
                }
                (self.prefix.len() - 1) as u64
            }
            (_, Some(tail)) => {
                // U uniform on (0,1]; K = max{k : P(K ≥ k) ≥ U}.
                let u = 1.0 - rng.random::<f64>();
                let table = self.table.get_or_init(|| self.survival_table(tail));
                if u > table[1] {
                    return 0;
                }
                if u > table[TABLE_MAX + 1] {
                    // Decreasing table: first index with S(k) < u, minus one.
                    let idx = table.partition_point(|&s| s >= u);
                    return (idx - 1) as u64;
                }
                self.invert_tail(tail, u)
            }
        }
    }

    fn survival_table(&self, tail: ParetoTail) -> Vec<f64> {
        let mut s = vec![0.0; TABLE_MAX + 2];
        s[TABLE_MAX + 1] = tail.survival(TABLE_MAX as u64 + 1);
        for k in (1..=TABLE_MAX).rev() {
            s[k] = s[k + 1] + self.prob(k as u64);
        }
        s[0] = 1.0;
        s
    }

    fn invert_tail(&self, tail: ParetoTail, u: f64) -> u64 {
        let guess = (tail.scale / (tail.alpha * u)).powf(1.0 / tail.alpha);
        let mut k = (guess.floor() as u64).max(TABLE_MAX as u64 + 1);
        while tail.survival(k + 1) >= u {
            k += 1;
        }
        while k > TABLE_MAX as u64 + 1 && tail.survival(k) < u {
            k -= 1;
        }
        k
    }
}

/// `(1−v)^k − 1 + k v`, evaluated without cancellation.
fn centered_power(k: f64, v: f64) -> f64 {
    if k < 2.0 || v == 0.0 {
        return 0.0;
    }
    if k * v < 0.5 {
        // Binomial series Σ_{j≥2} C(k,j)(−v)^j.
        let mut term = 0.5 * k * (k - 1.0) * v * v;
        let mut sum = term;
        let mut j = 2.0;
        while term.abs() > 1e-18 * sum.abs() && j < k {
            term *= -v * (k - j) / (j + 1.0);
            sum += term;
            j += 1.0;
        }
        sum
    } else {
        (k * (-v).ln_1p()).exp_m1() + k * v
    }
}

/// `v + ln(1 − v)`, accurate for small `v`.
fn log_defect(v: f64) -> f64 {
    if v < 0.1 {
        let mut term = v * v;
        let mut sum: f64 = 0.0;
        let mut j = 2.0;
        while term > 1e-19 * (sum.abs() + term) {
            sum -= term / j;
            term *= v;
            j += 1.0;
        }
        sum
    } else {
        v + (-v).ln_1p()
    }
}

/// `Σ_{k≥start} s k^{-(1+α)} [(1−v)^k − 1 + k v]`.
fn pareto_centered_sum(t: ParetoTail, v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let lambda = -(-v).ln_1p();
    let a = t.alpha;
    const DIRECT_CAP: f64 = 20_000.0;
    if v < 1.0 && lambda * DIRECT_CAP < 40.0 {
        // Small v: direct head, then Euler–Maclaurin on the smooth summand.
        let n = 1000u64.max(t.start);
        let head: f64 = (t.start..n).rev().map(|k| (k as f64).powf(-1.0 - a) * centered_power(k as f64, v)).sum();
        let nf = n as f64;
        let f = |x: f64| x.powf(-1.0 - a) * centered_power(x, v);
        let df = |x: f64| {
            let dh = log_defect(v) - lambda * (-lambda * x).exp_m1();
            -(1.0 + a) * x.powf(-2.0 - a) * centered_power(x, v) + x.powf(-1.0 - a) * dh
        };
        let integral = lambda.powf(a) * truncated_gamma_integral(a, lambda * nf) + log_defect(v) * nf.powf(1.0 - a) / (a - 1.0);
        return t.scale * (head + integral + 0.5 * f(nf) - df(nf) / 12.0);
    }
    // Direct summation until the geometric remainder bound of the raw series
    // drops below 1e-14 (and below 1e-15 relative); the affine part of the
    // remainder is analytic.
    let q = 1.0 - v;
    let mut sum = 0.0;
    let mut k = t.start;
    loop {
        let kf = k as f64;
        sum += kf.powf(-1.0 - a) * centered_power(kf, v);
        k += 1;
        let kf = k as f64;
        let bound = if q == 0.0 { 0.0 } else { t.scale * kf.powf(-1.0 - a) * q.powf(kf) / v };
        if bound < 1e-14_f64.min(1e-15 * t.scale * sum) {
            break;
        }
    }
    t.scale * (sum - zeta_tail(1.0 + a, k) + v * zeta_tail(a, k))
}

/// `∫_x^∞ u^{-1-α}(e^{-u} − 1 + u) du` for `1 < α < 2` and moderate `x`.
fn truncated_gamma_integral(a: f64, x: f64) -> f64 {
    // Γ(−α) = Γ(2−α)/(α(α−1)).
    let full = gamma(2.0 - a) / (a * (a - 1.0));
    let mut head = 0.0;
    let mut fact = 2.0;
    let mut pow = x * x;
    for j in 2..60 {
        let jf = j as f64;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let term = sign * pow * x.powf(-a) / (fact * (jf - a));
        head += term;
        if term.abs() < 1e-18 * head.abs() {
            break;
        }
        pow *= x;
        fact *= jf + 1.0;
    }
    full - head
}

/// Offspring law together with the branching rate `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BranchingSpecRaw", into = "BranchingSpecRaw")]
pub struct BranchingSpec {
    law: OffspringLaw,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchingSpecRaw {
    law: OffspringLaw,
    beta: f64,
}

impl TryFrom<BranchingSpecRaw> for BranchingSpec {
    type Error = OffspringError;
    fn try_from(raw: BranchingSpecRaw) -> Result<Self, Self::Error> {
        BranchingSpec::new(raw.law, raw.beta)
    }
}

impl From<BranchingSpec> for BranchingSpecRaw {
    fn from(s: BranchingSpec) -> Self {
        BranchingSpecRaw { law: s.law, beta: s.beta }
    }
}

impl BranchingSpec {
    pub fn new(law: OffspringLaw, beta: f64) -> Result<Self, OffspringError> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(OffspringError::InvalidRate(beta));
        }
        Ok(BranchingSpec { law, beta })
    }

    /// Binary law with `β = 1`.
    pub fn binary() -> Self {
        BranchingSpec { law: make_binary(), beta: 1.0 }
    }

    pub fn law(&self) -> &OffspringLaw {
        &self.law
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.law.alpha
    }

    /// `φ(v) = β(Σ p_k (1−v)^k − (1−v))` on `[0,1]`.
    pub fn phi(&self, v: f64) -> Result<f64, OffspringError> {
        if !(0.0..=1.0).contains(&v) {
            return Err(OffspringError::Domain(v));
        }
        Ok(self.beta * self.law.centered_series(v).max(0.0))
    }

    /// `ψ(v) = φ(v)/v`, with `ψ(0) = 0`.
    pub fn psi(&self, v: f64) -> Result<f64, OffspringError> {
        let p = self.phi(v)?;
        Ok(if v == 0.0 { 0.0 } else { p / v })
    }

    fn scale_exponent(&self) -> f64 {
        1.0 / (self.law.alpha - 1.0)
    }

    fn check_scaled(&self, t: f64, v: f64) -> Result<(), OffspringError> {
        if !(t > 0.0) {
            return Err(OffspringError::Domain(t));
        }
        if !(v >= 0.0 && v <= t.powf(self.scale_exponent()) * (1.0 + 1e-15)) {
            return Err(OffspringError::Domain(v));
        }
        Ok(())
    }

    /// `φ^{(t)}(v) = t^{α/(α−1)} φ(v t^{-1/(α−1)})`.
    pub fn phi_scaled(&self, t: f64, v: f64) -> Result<f64, OffspringError> {
        self.check_scaled(t, v)?;
        let e = self.scale_exponent();
        let w = (v * t.powf(-e)).min(1.0);
        Ok(t.powf(self.law.alpha * e) * self.phi(w)?)
    }

    /// `ψ^{(t)}(v) = t · ψ(v t^{-1/(α−1)})`.
    pub fn psi_scaled(&self, t: f64, v: f64) -> Result<f64, OffspringError> {
        self.check_scaled(t, v)?;
        let w = (v * t.powf(-self.scale_exponent())).min(1.0);
        Ok(t * self.psi(w)?)
    }

    /// Branching-mechanism constant `𝒞(α)`.
    pub fn mechanism_constant(&self) -> f64 {
        let a = self.law.alpha;
        if a < 2.0 {
            self.beta * self.law.kappa * gamma(2.0 - a) / (a - 1.0)
        } else {
            0.5 * self.beta * self.law.kappa
        }
    }
}
