//! Adaptive Gauss–Kronrod (7/15) integration and a numerically integrated
//! Laplace posterior used as a reference by the CLI checks.

use crate::error::{Error, Result};
use crate::laplace::DenoiserStats;

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
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes; the last is the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XK[i];
        let pair = f(c - dx) + f(c + dx);
        kron += WK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: (f64, f64),
    tol: f64,
    depth: usize,
) -> f64 {
    let (val, err) = whole;
    // below ~50 ulp of the panel value the error estimate is rounding noise
    if err <= tol.max(50.0 * f64::EPSILON * val.abs()) || depth == 0 {
        return val;
    }
    let m = 0.5 * (a + b);
    let left = gk15(f, a, m);
    let right = gk15(f, m, b);
    adapt(f, a, m, left, 0.5 * tol, depth - 1) + adapt(f, m, b, right, 0.5 * tol, depth - 1)
}

/// `∫_a^b f` to absolute tolerance `abs_tol` by recursive bisection.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let whole = gk15(&f, a, b);
    adapt(&f, a, b, whole, abs_tol, 40)
}

/// Posterior moments of `x ~ Laplace(b)` given `r = x + N(0, μ)` by direct
/// integration. Each half-line is a Gaussian in `x` centred at `r ∓ μ/b`;
/// the window covers 0, that centre and 14 standard deviations beyond.
pub fn laplace_posterior_reference(r: f64, mu_r: f64, b: f64) -> Result<DenoiserStats> {
    if !(mu_r > 0.0 && b > 0.0) || !r.is_finite() {
        return Err(Error::domain(
            "reference posterior needs finite r and positive variances",
        ));
    }
    let sd = mu_r.sqrt();
    let log_f = |x: f64| -x.abs() / b - (x - r) * (x - r) / (2.0 * mu_r);
    let c_pos = r - mu_r / b;
    let c_neg = r + mu_r / b;
    let peak = log_f(c_pos.max(0.0)).max(log_f(c_neg.min(0.0)));
    let f = |x: f64| (log_f(x) - peak).exp();

    let mut cuts = vec![
        (c_neg.min(0.0) - 14.0 * sd),
        0.0,
        c_pos.max(0.0) + 14.0 * sd,
    ];
    if c_pos > 0.0 {
        cuts.push(c_pos);
    }
    if c_neg < 0.0 {
        cuts.push(c_neg);
    }
    cuts.sort_by(f64::total_cmp);
    let span = cuts.last().unwrap() - cuts[0];
    let tol = 1e-15 * span.max(sd);
    let over = |g: &dyn Fn(f64) -> f64| -> f64 {
        cuts.windows(2).map(|w| integrate(g, w[0], w[1], tol)).sum()
    };
    let z = over(&|x| f(x));
    let mean = over(&|x| x * f(x)) / z;
    let variance = over(&|x| (x - mean) * (x - mean) * f(x)) / z;
    let abs_mean = over(&|x| x.abs() * f(x)) / z;
    Ok(DenoiserStats {
        mean,
        variance,
        abs_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_and_gaussian() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-14);
        assert!((v - 9.0).abs() < 1e-13);
        let g = integrate(|x| (-x * x / 2.0).exp(), -12.0, 12.0, 1e-15);
        assert!((g - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn reference_is_symmetric_at_zero() {
        let s = laplace_posterior_reference(0.0, 1.0, 1.0).unwrap();
        assert!(s.mean.abs() < 1e-14);
        assert!(s.variance > 0.0 && s.variance < 1.0);
    }
}
