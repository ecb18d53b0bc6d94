//! Small numerical kernels shared by several modules.

use statrs::function::erf::erfc;

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Hurwitz zeta tail `Σ_{k≥n} k^{-s}` for `s > 1`, `n ≥ 1`.
///
/// Direct summation up to a cutoff followed by Euler–Maclaurin with five
/// Bernoulli corrections; relative accuracy is near machine precision.
pub fn zeta_tail(s: f64, n: u64) -> f64 {
    assert!(s > 1.0 && n >= 1, "zeta_tail needs s > 1 and n >= 1");
    let cut = n.max(24);
    let mut direct = 0.0;
    // Sum small terms first.
    for k in (n..cut).rev() {
        direct += (k as f64).powf(-s);
    }
    let m = cut as f64;
    let mut tail = m.powf(1.0 - s) / (s - 1.0) + 0.5 * m.powf(-s);
    const B: [f64; 5] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0];
    let mut rising = s; // s(s+1)...(s+2j-2)
    let mut fact = 2.0; // (2j)!
    let mut pow = m.powf(-s - 1.0);
    for (j, b) in B.iter().enumerate() {
        tail += b / fact * rising * pow;
        let j2 = 2.0 * (j as f64 + 1.0);
        rising *= (s + j2 - 1.0) * (s + j2);
        fact *= (j2 + 1.0) * (j2 + 2.0);
        pow /= m * m;
    }
    direct + tail
}

/// Adaptive Gauss–Kronrod (7/15) quadrature on a finite interval.
///
/// Returns the integral estimate; `tol` bounds the summed local error
/// estimates (absolute). Recursion depth is capped at 50.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
        const XK: [f64; 8] = [
            0.991_455_371_120_812_6,
            0.949_107_912_342_758_5,
            0.864_864_423_359_769_1,
            0.741_531_185_599_394_4,
            0.586_087_235_467_691_1,
            0.405_845_151_377_397_2,
            0.207_784_955_007_898_5,
            0.0,
        ];
        const WK: [f64; 8] = [
            0.022_935_322_010_529_22,
            0.063_092_092_629_978_55,
            0.104_790_010_322_250_2,
            0.140_653_259_715_525_9,
            0.169_004_726_639_267_9,
            0.190_350_578_064_785_4,
            0.204_432_940_075_298_9,
            0.209_482_141_084_728_0,
        ];
        const WG: [f64; 4] = [
            0.129_484_966_168_869_7,
            0.279_705_391_489_276_7,
            0.381_830_050_505_118_9,
            0.417_959_183_673_469_4,
        ];
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut kron = WK[7] * fc;
        let mut gauss = WG[3] * fc;
        for i in 0..7 {
            let dx = h * XK[i];
            let s = f(c - dx) + f(c + dx);
            kron += WK[i] * s;
            if i % 2 == 1 {
                gauss += WG[i / 2] * s;
            }
        }
        (kron * h, ((kron - gauss) * h).abs())
    }
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (val, err) = gk15(f, a, b);
        if err <= tol || depth >= 50 || (b - a).abs() < 1e-14 * (a.abs() + b.abs()) {
            return val;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    rec(f, a, b, tol, 0)
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// `f(lo)` and `f(hi)` must have opposite signs; stops when the bracket is
/// below `xtol` in width or after 200 halvings.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        if (hi - lo).abs() <= xtol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Linear interpolation on a uniform grid starting at 0 with spacing `h`.
/// Returns `None` outside `[0, h·(len−1)]`.
pub fn interp_uniform(values: &[f64], h: f64, y: f64) -> Option<f64> {
    let last = (values.len() - 1) as f64 * h;
    if !(0.0..=last * (1.0 + 1e-12)).contains(&y) {
        return None;
    }
    let s = (y / h).min((values.len() - 1) as f64);
    let i = (s.floor() as usize).min(values.len() - 2);
    let w = s - i as f64;
    Some(values[i] * (1.0 - w) + values[i + 1] * w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_tail_matches_known_values() {
        // ζ(2) = π²/6, ζ(3) = Apéry's constant.
        let pi2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((zeta_tail(2.0, 1) - pi2).abs() < 1e-14);
        assert!((zeta_tail(3.0, 1) - 1.202_056_903_159_594_2).abs() < 1e-14);
        assert!((zeta_tail(2.0, 2) - (pi2 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn quadrature_of_smooth_functions() {
        let v = integrate(&|x: f64| x.exp(), 0.0, 1.0, 1e-13);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-12);
        let g = integrate(&|x: f64| (-x * x / 2.0).exp(), -12.0, 12.0, 1e-12);
        assert!((g - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn bisection_finds_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn normal_cdf_symmetry() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.0) + normal_cdf(-1.0) - 1.0).abs() < 1e-15);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 5e-12);
    }
}
