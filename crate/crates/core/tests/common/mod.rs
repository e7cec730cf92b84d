//! Test-only oracles: tanh-sinh quadrature for scalar posteriors and dense
//! linear algebra for the lifted operator.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect()
}

pub fn complex_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

pub fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    let scale = want
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    got.iter()
        .zip(want)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max)
}

/// Tanh-sinh quadrature on `[a, b]`, refined until successive step sizes agree.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let pi2 = std::f64::consts::FRAC_PI_2;
    let sum_at = |h: f64| -> f64 {
        let n = (4.0 / h).ceil() as i64;
        let mut s = 0.0;
        for j in -n..=n {
            let t = j as f64 * h;
            let u = pi2 * t.sinh();
            let cosh_u = u.cosh();
            let w = pi2 * t.cosh() / (cosh_u * cosh_u);
            if w < 1e-300 {
                continue;
            }
            let x = mid + half * u.tanh();
            if x <= a || x >= b {
                continue;
            }
            s += w * f(x);
        }
        s * h * half
    };
    let mut prev = sum_at(0.5);
    let mut h = 0.25;
    for _ in 0..10 {
        let cur = sum_at(h);
        if (cur - prev).abs() <= 1e-15 * cur.abs() {
            return cur;
        }
        prev = cur;
        h *= 0.5;
    }
    prev
}

#[derive(Debug, Clone, Copy)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub abs_mean: f64,
}

/// Posterior moments under a density proportional to `exp(log_prior(x))`
/// and a Gaussian likelihood `N(r; x, μ)`, integrated between the sorted
/// breakpoints.
pub fn posterior_moments<P: Fn(f64) -> f64>(
    log_prior: P,
    r: f64,
    mu: f64,
    breaks: &[f64],
) -> Moments {
    let log_f = |x: f64| log_prior(x) - (x - r) * (x - r) / (2.0 * mu);
    let peak = breaks
        .iter()
        .map(|&x| log_f(x))
        .fold(f64::NEG_INFINITY, f64::max);
    let f = |x: f64| (log_f(x) - peak).exp();
    let over = |g: &dyn Fn(f64) -> f64| -> f64 {
        breaks.windows(2).map(|w| tanh_sinh(g, w[0], w[1])).sum()
    };
    let z = over(&|x| f(x));
    let mean = over(&|x| x * f(x)) / z;
    let variance = over(&|x| (x - mean) * (x - mean) * f(x)) / z;
    let abs_mean = over(&|x| x.abs() * f(x)) / z;
    Moments {
        mean,
        variance,
        abs_mean,
    }
}

/// Quadrature breakpoints for the Laplace posterior: 0, each half-line's
/// Gaussian centre `r ∓ μ/b`, and 16 standard deviations out.
pub fn laplace_breaks(r: f64, mu: f64, b: f64) -> Vec<f64> {
    let sd = mu.sqrt();
    let c_pos = r - mu / b;
    let c_neg = r + mu / b;
    let mut breaks = vec![c_neg.min(0.0) - 16.0 * sd, 0.0, c_pos.max(0.0) + 16.0 * sd];
    for c in [c_pos, c_neg] {
        let inside = breaks[0] < c && c < *breaks.last().unwrap() && c != 0.0;
        let right_side = (c == c_pos && c > 0.0) || (c == c_neg && c < 0.0);
        if inside && right_side {
            breaks.push(c);
            for off in [-16.0 * sd, 16.0 * sd] {
                let p = c + off;
                if (c > 0.0 && p > 0.0) || (c < 0.0 && p < 0.0) {
                    breaks.push(p);
                }
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    breaks
}

/// Laplace posterior by quadrature.
pub fn laplace_oracle(r: f64, mu: f64, b: f64) -> Moments {
    posterior_moments(|x| -x.abs() / b, r, mu, &laplace_breaks(r, mu, b))
}

/// `ln ∫ (1/2b) e^{-|x|/b} N(x; r, μ) dx` by quadrature.
pub fn laplace_ln_evidence(r: f64, mu: f64, b: f64) -> f64 {
    let breaks = laplace_breaks(r, mu, b);
    let log_f = |x: f64| -x.abs() / b - (x - r) * (x - r) / (2.0 * mu);
    let peak = breaks
        .iter()
        .map(|&x| log_f(x))
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = breaks
        .windows(2)
        .map(|w| tanh_sinh(|x| (log_f(x) - peak).exp(), w[0], w[1]))
        .sum();
    peak + z.ln() - (2.0 * b).ln() - 0.5 * (2.0 * std::f64::consts::PI * mu).ln()
}

/// `∫₀^∞ tᵖ N(t; γ, μ) dt` by quadrature, for p = 1 or 2.
pub fn half_line_moment(gamma: f64, mu: f64, p: i32) -> f64 {
    let sd = mu.sqrt();
    let hi = gamma.max(0.0) + 40.0 * sd;
    let mut breaks = vec![0.0, hi];
    if gamma > 0.0 {
        breaks.push(gamma);
    }
    breaks.sort_by(f64::total_cmp);
    let f = |t: f64| {
        t.powi(p) * (-(t - gamma) * (t - gamma) / (2.0 * mu)).exp()
            / (2.0 * std::f64::consts::PI * mu).sqrt()
    };
    breaks.windows(2).map(|w| tanh_sinh(f, w[0], w[1])).sum()
}

/// Gaussian-prior posterior by quadrature.
pub fn gaussian_oracle(r: f64, mu: f64, v: f64) -> Moments {
    let c = v * r / (v + mu);
    let sd = (v * mu / (v + mu)).sqrt();
    let breaks = [c - 16.0 * sd, c, c + 16.0 * sd];
    posterior_moments(|x| -x * x / (2.0 * v), r, mu, &breaks)
}

/// `Ã = Bᵀ ⊗ I_{Mr}` materialized entry by entry.
pub fn dense_kron(pilots: &DMatrix<Complex64>, mr: usize) -> DMatrix<Complex64> {
    let (mt, k) = pilots.shape();
    let mut a = DMatrix::zeros(mr * k, mr * mt);
    for kk in 0..k {
        for t in 0..mt {
            for i in 0..mr {
                a[(kk * mr + i, t * mr + i)] = pilots[(t, kk)];
            }
        }
    }
    a
}

/// `[[Re Ã, −Im Ã], [Im Ã, Re Ã]]`.
pub fn dense_lifted(pilots: &DMatrix<Complex64>, mr: usize) -> DMatrix<f64> {
    let a = dense_kron(pilots, mr);
    let (m, n) = a.shape();
    DMatrix::from_fn(2 * m, 2 * n, |i, j| {
        let z = a[(i % m, j % n)];
        match (i < m, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

pub fn matvec(a: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(v)).as_slice().to_vec()
}

/// `v·Aᵀ(v·AAᵀ + σ²I)⁻¹ y` by dense LU.
pub fn dense_lmmse(a: &DMatrix<f64>, y: &[f64], noise_var: f64, prior_var: f64) -> Vec<f64> {
    let m = a.nrows();
    let k = a * a.transpose() * prior_var + DMatrix::identity(m, m) * noise_var;
    let u = k
        .lu()
        .solve(&DVector::from_column_slice(y))
        .expect("nonsingular");
    (a.transpose() * u * prior_var).as_slice().to_vec()
}

/// `(AᵀA)⁻¹Aᵀy` by dense LU.
pub fn dense_ls(a: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let g = a.transpose() * a;
    let rhs = a.transpose() * DVector::from_column_slice(y);
    g.lu()
        .solve(&rhs)
        .expect("full column rank")
        .as_slice()
        .to_vec()
}
