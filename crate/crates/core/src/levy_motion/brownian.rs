//! Exact Brownian path primitives: killed pieces, bridge extremes and the
//! first-passage bridge maximum.
//!
//! `s2` is the variance per unit time throughout.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Exponent beyond which `exp(-e)` is treated as zero.
const NEGLIGIBLE: f64 = 700.0;

/// Fate of a killed Brownian piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Fate {
    /// Hit 0 after `time` (relative to the start of the piece).
    Killed { time: f64 },
    /// Still positive at the end of the piece.
    Alive { end: f64 },
}

/// One piece of a path killed at 0. `new_max` is the exact running maximum
/// over the piece whenever it reaches the `record` level, `None` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Piece {
    pub fate: Fate,
    pub new_max: Option<f64>,
}

pub(crate) fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform on (0, 1].
pub(crate) fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Advances a Brownian particle at `x > 0` for `d` time units with killing
/// at 0.
pub(crate) fn advance_killed<R: Rng + ?Sized>(x: f64, d: f64, s2: f64, record: f64, rng: &mut R) -> Piece {
    let z = normal(rng);
    let tau = x * x / (s2 * z * z);
    if tau <= d {
        let new_max = passage_bridge_max(x, tau, s2, record, rng);
        return Piece { fate: Fate::Killed { time: tau }, new_max };
    }
    let end = survivor_endpoint(x, d, s2, rng);
    let new_max = positive_bridge_max(x, end, s2 * d, record, rng);
    Piece { fate: Fate::Alive { end }, new_max }
}

/// Position after `d` time units of a path from `x > 0` conditioned not to
/// hit 0: a Gaussian endpoint accepted with the bridge non-crossing
/// probability.
pub(crate) fn survivor_endpoint<R: Rng + ?Sized>(x: f64, d: f64, s2: f64, rng: &mut R) -> f64 {
    let sd = (s2 * d).sqrt();
    loop {
        let y = x + sd * normal(rng);
        if y <= 0.0 {
            continue;
        }
        let cross = (-2.0 * x * y / (s2 * d)).exp();
        if open_uniform(rng) > cross {
            return y;
        }
    }
}

/// `P(max ≥ m)` for a path from `x` that first hits 0 at time `tau`,
/// `m ≥ x`.
fn passage_bridge_exceed(x: f64, tau: f64, s2: f64, m: f64) -> f64 {
    let v = s2 * tau;
    let mut sum = 0.0;
    for k in 1..1_000_000 {
        let km = k as f64 * m;
        let lo = (2.0 * km / x - 1.0) * (-2.0 * km * (km - x) / v).exp();
        let hi = (1.0 + 2.0 * km / x) * (-2.0 * km * (km + x) / v).exp();
        sum += lo - hi;
        if lo.abs() + hi.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

fn passage_bridge_max<R: Rng + ?Sized>(x: f64, tau: f64, s2: f64, record: f64, rng: &mut R) -> Option<f64> {
    let lower = record.max(x);
    if 2.0 * lower * (lower - x) / (s2 * tau) > NEGLIGIBLE {
        return None;
    }
    let u = open_uniform(rng);
    if record > x && u >= passage_bridge_exceed(x, tau, s2, lower) {
        return None;
    }
    Some(invert_decreasing(|m| passage_bridge_exceed(x, tau, s2, m), lower, (s2 * tau).sqrt(), u))
}

/// `P(max ≥ m | min > 0)` for a bridge from `x` to `y` with total variance
/// `v`, `m ≥ max(x, y)`.
fn positive_bridge_exceed(x: f64, y: f64, v: f64, m: f64) -> f64 {
    let denom = -(-2.0 * x * y / v).exp_m1();
    let mut sum = 0.0;
    for k in 1..1_000_000 {
        let mut batch = 0.0;
        for kk in [k as f64, -(k as f64)] {
            let km = kk * m;
            let a = (-2.0 * km * (km + y - x) / v).exp();
            let b = (-2.0 * (km + x) * (km + y) / v).exp();
            batch += b - a;
        }
        sum += batch;
        if batch.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    (sum / denom).clamp(0.0, 1.0)
}

fn positive_bridge_max<R: Rng + ?Sized>(x: f64, y: f64, v: f64, record: f64, rng: &mut R) -> Option<f64> {
    let top = x.max(y);
    let lower = record.max(top);
    if 2.0 * (lower - x) * (lower - y) / v > NEGLIGIBLE {
        return None;
    }
    let u = open_uniform(rng);
    if record > top && u >= positive_bridge_exceed(x, y, v, lower) {
        return None;
    }
    Some(invert_decreasing(|m| positive_bridge_exceed(x, y, v, m), lower, v.sqrt(), u))
}

/// Solves `g(m) = u` for a decreasing `g` with `g(lower) ≥ u`.
fn invert_decreasing<G: Fn(f64) -> f64>(g: G, lower: f64, scale: f64, u: f64) -> f64 {
    let mut lo = lower;
    let mut step = scale.max(1e-300);
    let mut hi = lower + step;
    while g(hi) > u {
        lo = hi;
        step *= 2.0;
        hi = lower + step;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact `(min, max)` of a Brownian bridge from `x` to `y` with total
/// variance `v`.
pub(crate) fn bridge_extremes<R: Rng + ?Sized>(x: f64, y: f64, v: f64, rng: &mut R) -> (f64, f64) {
    if v <= 0.0 {
        return (x.min(y), x.max(y));
    }
    let u = open_uniform(rng);
    let min = 0.5 * (x + y - ((x - y).powi(2) - 2.0 * v * u.ln()).sqrt());
    let min = min.min(x).min(y);
    let (a, b) = (x - min, y - min);
    if a + b <= 0.0 {
        return (min, min);
    }
    // Distribution of the maximum conditional on the minimum, from the
    // derivative in the lower barrier of the two-sided crossing series.
    let cdf = |top: f64| -> f64 {
        let w = top - min;
        let mut sum = 0.0;
        for k in 1..1_000_000 {
            let mut batch = 0.0;
            for kk in [k as f64, -(k as f64)] {
                let ea = -2.0 * (kk * w * (kk * w + b - a) - a * b) / v;
                let eb = -2.0 * ((kk * w + a) * (kk * w + b) - a * b) / v;
                batch += ea.exp() * (2.0 * kk * kk * w + kk * (b - a)) - eb.exp() * (kk + 1.0) * (2.0 * kk * w + a + b);
            }
            sum += batch;
            if batch.abs() < 1e-18 * sum.abs().max(1e-300) && k > 1 {
                break;
            }
        }
        (1.0 - sum / (a + b)).clamp(0.0, 1.0)
    };
    let top0 = x.max(y);
    let target = open_uniform(rng);
    let max = invert_decreasing(|m| 1.0 - cdf(m), top0, v.sqrt(), 1.0 - target);
    (min, max.max(top0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exceedance_is_one_at_the_top_endpoint() {
        assert!((passage_bridge_exceed(1.0, 2.0, 1.0, 1.0) - 1.0).abs() < 1e-12);
        assert!((positive_bridge_exceed(1.0, 0.5, 1.0, 1.0) - 1.0).abs() < 1e-12);
        assert!((positive_bridge_exceed(0.3, 2.0, 3.0, 2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn positive_bridge_reduces_to_reflection_far_from_zero() {
        // With endpoints far from the killing barrier the conditioning is
        // irrelevant and the reflection formula applies.
        let (x, y, v, m) = (50.0, 51.0, 1.0, 52.0);
        let want = (-2.0f64 * (m - x) * (m - y) / v).exp();
        assert!((positive_bridge_exceed(x, y, v, m) - want).abs() < 1e-14);
    }
}
