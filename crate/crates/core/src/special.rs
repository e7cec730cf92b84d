//! Error-function family evaluated without overflow in the tails.
//!
//! `erfcx` follows W. J. Cody's rational Chebyshev approximations (the
//! CALERF routine), which are accurate to a few ulps over the whole real
//! line. Everything else in this module is expressed through it.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const SQRT_1_PI: f64 = 5.641_895_835_477_562_869_5e-1;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

const A: [f64; 5] = [
    3.161_123_743_870_565_6e0,
    1.138_641_541_510_501_56e2,
    3.774_852_376_853_020_21e2,
    3.209_377_589_138_469_47e3,
    1.857_777_061_846_031_53e-1,
];
const B: [f64; 4] = [
    2.360_129_095_234_412_09e1,
    2.440_246_379_344_441_73e2,
    1.282_616_526_077_372_28e3,
    2.844_236_833_439_170_62e3,
];
const C: [f64; 9] = [
    5.641_884_969_886_700_89e-1,
    8.883_149_794_388_375_94e0,
    6.611_919_063_714_162_95e1,
    2.986_351_381_974_001_31e2,
    8.819_522_212_417_690_9e2,
    1.712_047_612_634_070_58e3,
    2.051_078_377_826_071_47e3,
    1.230_339_354_797_997_25e3,
    2.153_115_354_744_038_46e-8,
];
const D: [f64; 8] = [
    1.574_492_611_070_983_47e1,
    1.176_939_508_913_124_99e2,
    5.371_811_018_620_098_58e2,
    1.621_389_574_566_690_19e3,
    3.290_799_235_733_459_63e3,
    4.362_619_090_143_247_16e3,
    3.439_367_674_143_721_64e3,
    1.230_339_354_803_749_42e3,
];
const P: [f64; 6] = [
    3.053_266_349_612_323_44e-1,
    3.603_448_999_498_044_39e-1,
    1.257_817_261_112_292_46e-1,
    1.608_378_514_874_227_66e-2,
    6.587_491_615_298_378_03e-4,
    1.631_538_713_730_209_78e-2,
];
const Q: [f64; 5] = [
    2.568_520_192_289_822_42e0,
    1.872_952_849_923_467_25e0,
    5.279_051_029_514_284_12e-1,
    6.051_834_131_244_131_91e-2,
    2.335_204_976_268_691_85e-3,
];

const X_SMALL: f64 = 1.11e-16;
const X_HUGE: f64 = 6.71e7;
const X_NEG: f64 = -26.628;

/// exp(y²) computed as exp(a²)·exp((y-a)(y+a)) with a = y truncated to 1/16,
/// so the rounding error of y² does not leak into the result.
fn exp_sq(y: f64) -> f64 {
    let head = (y * 16.0).trunc() / 16.0;
    let del = (y - head) * (y + head);
    (head * head).exp() * del.exp()
}

/// erfcx(y) for y > 0.46875 (the two outer CALERF ranges).
fn erfcx_tail(y: f64) -> f64 {
    if y <= 4.0 {
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        (num + C[7]) / (den + D[7])
    } else if y >= X_HUGE {
        SQRT_1_PI / y
    } else {
        let ysq = 1.0 / (y * y);
        let mut num = P[5] * ysq;
        let mut den = ysq;
        for i in 0..4 {
            num = (num + P[i]) * ysq;
            den = (den + Q[i]) * ysq;
        }
        let r = ysq * (num + P[4]) / (den + Q[4]);
        (SQRT_1_PI - r) / y
    }
}

/// erf(x) for |x| <= 0.46875.
fn erf_small(x: f64) -> f64 {
    let y = x.abs();
    let ysq = if y > X_SMALL { y * y } else { 0.0 };
    let mut num = A[4] * ysq;
    let mut den = ysq;
    for i in 0..3 {
        num = (num + A[i]) * ysq;
        den = (den + B[i]) * ysq;
    }
    x * (num + A[3]) / (den + B[3])
}

/// Scaled complementary error function, `exp(x²)·erfc(x)`.
///
/// Finite for every x above about -26.6; below that the true value exceeds
/// `f64::MAX` and `+inf` is returned.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let y = x.abs();
    if y <= 0.468_75 {
        return (x * x).exp() * (1.0 - erf_small(x));
    }
    let tail = erfcx_tail(y);
    if x > 0.0 {
        tail
    } else if x < X_NEG {
        f64::INFINITY
    } else {
        2.0 * exp_sq(y) - tail
    }
}

/// Natural log of `erfcx(x)`, finite for every finite x.
pub fn ln_erfcx(x: f64) -> f64 {
    if x >= -0.5 {
        erfcx(x).ln()
    } else {
        // erfcx(x) = exp(x²)·(2 - erfc(-x)) and erfc(-x) < 1 here
        let y = -x;
        x * x + (2.0 - erfc_pos(y)).ln()
    }
}

/// erfc for y >= 0 without the exp(y²) rescaling.
fn erfc_pos(y: f64) -> f64 {
    if y <= 0.468_75 {
        1.0 - erf_small(y)
    } else {
        erfcx_tail(y) / exp_sq(y)
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        erfc_pos(x)
    } else {
        2.0 - erfc_pos(-x)
    }
}

/// Standard normal tail probability `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse Mills ratio `φ(a)/Q(a)`, i.e. the mean of a standard normal
/// truncated to `(a, ∞)`.
pub fn inverse_mills(a: f64) -> f64 {
    let e = erfcx(a * FRAC_1_SQRT_2);
    if e.is_infinite() {
        0.0
    } else {
        SQRT_2_OVER_PI / e
    }
}

/// First two central moments of `N(γ, μ)` truncated to `(0, ∞)`.
///
/// Returns `(mean, variance)`. Valid for any finite γ and μ > 0, including
/// truncation points many standard deviations into the upper tail.
pub fn positive_truncated_normal(gamma: f64, mu: f64) -> (f64, f64) {
    let sd = mu.sqrt();
    let a = -gamma / sd;
    if a > 3.0 {
        // λ(a) - a = 1/(a + τ) with τ = 2/(a + 3/(a + 4/(a + ...))); the
        // variance factor 1 - λ(λ - a) reduces to δ(τ - δ), free of cancellation.
        let tau = mills_tail(a);
        let delta = 1.0 / (a + tau);
        let mean = sd * delta;
        (mean, mu * delta * (tau - delta))
    } else {
        let lambda = inverse_mills(a);
        let factor = 1.0 - lambda * (lambda - a);
        (gamma + sd * lambda, mu * factor.max(0.0))
    }
}

/// Tail `2/(a + 3/(a + 4/(a + ...)))` of the Laplace continued fraction for
/// the Mills ratio, evaluated bottom-up. Only used for a > 3.
fn mills_tail(a: f64) -> f64 {
    let depth = 40 + (600.0 / (a * a)) as usize;
    let mut acc = 0.0;
    for k in (2..=depth).rev() {
        acc = k as f64 / (a + acc);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfcx_at_zero_is_one() {
        assert_eq!(erfcx(0.0), 1.0);
    }

    #[test]
    fn erfcx_large_argument_asymptotics() {
        // erfcx(x) ~ 1/(x√π) for huge x
        let x = 1e8;
        let rel = (erfcx(x) * x * std::f64::consts::PI.sqrt() - 1.0).abs();
        assert!(rel < 1e-14);
        assert!(erfcx(1e300).is_finite());
    }

    #[test]
    fn erfcx_negative_overflow_is_infinite() {
        assert!(erfcx(-27.0).is_infinite());
        assert!(erfcx(-26.0).is_finite());
        assert!((ln_erfcx(-27.0) - (729.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn q_function_symmetry() {
        for &x in &[0.0, 0.3, 1.7, 4.2, 9.0] {
            assert!((q_function(x) + q_function(-x) - 1.0).abs() < 1e-15);
        }
        assert_eq!(q_function(0.0), 0.5);
    }

    #[test]
    fn ln_erfcx_matches_log_of_value() {
        for i in -200..400 {
            let x = i as f64 * 0.05;
            let a = ln_erfcx(x);
            let b = erfcx(x).ln();
            assert!(
                (a - b).abs() <= 1e-13 * b.abs().max(1.0),
                "x={x}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn truncated_moments_continuous_at_switch() {
        let mu: f64 = 2.0;
        let g = -3.0 * mu.sqrt();
        let lo = positive_truncated_normal(g * (1.0 - 1e-12), mu);
        let hi = positive_truncated_normal(g * (1.0 + 1e-12), mu);
        assert!((lo.0 - hi.0).abs() < 1e-11);
        assert!((lo.1 - hi.1).abs() < 1e-11);
    }

    #[test]
    fn truncated_moments_deep_tail() {
        // For a → ∞ the truncated normal looks like an exponential with rate a/σ.
        let (m, v) = positive_truncated_normal(-1e4, 1.0);
        assert!((m * 1e4 - 1.0).abs() < 1e-6);
        assert!((v * 1e8 - 1.0).abs() < 1e-6);
    }
}
