//! Invariant checks exposed through the CLI `selftest` and `denoise-check`
//! subcommands.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{steering_vector, SpreadModel};
use crate::error::Result;
use crate::eval::{
    rate_lower_bound, run_monte_carlo, waterfill, waterfill_kkt, Estimator, EstimatorSettings,
    Scenario,
};
use crate::laplace::{edge_quantities, posterior_stats, DenoiserStats, LaplacePrior};
use crate::operator::build_real_lifted_operator;
use crate::quadrature::laplace_posterior_reference;
use crate::special::erfcx;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, bound: f64) -> Check {
    Check {
        name,
        passed: value <= bound,
        detail: format!("{value:.3e} (bound {bound:.0e})"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiserRow {
    pub r: f64,
    pub mu_r: f64,
    pub b: f64,
    pub closed: DenoiserStats,
    pub reference: DenoiserStats,
}

/// Closed-form and integrated posterior moments on a log-spaced grid over
/// `r ∈ [−8, 8]`, `μ ∈ [1e-3, 10]`, `b ∈ [1e-2, 10]`.
pub fn denoiser_table(points: usize) -> Result<Vec<DenoiserRow>> {
    let axis = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (points - 1) as f64;
    let mut rows = Vec::with_capacity(points.pow(3));
    for i in 0..points {
        for j in 0..points {
            for k in 0..points {
                let r = axis(-8.0, 8.0, i);
                let mu_r = 10f64.powf(axis(-3.0, 1.0, j));
                let b = 10f64.powf(axis(-2.0, 1.0, k));
                rows.push(DenoiserRow {
                    r,
                    mu_r,
                    b,
                    closed: posterior_stats(r, mu_r, LaplacePrior::new(b)?)?,
                    reference: laplace_posterior_reference(r, mu_r, b)?,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstErrors {
    /// Relative to `max(|mean|, √μ·1e-3)`, since the mean vanishes at `r = 0`.
    pub mean: f64,
    /// Relative to `μ`.
    pub variance: f64,
    pub abs_mean: f64,
}

pub fn worst_errors(rows: &[DenoiserRow]) -> WorstErrors {
    let mut w = WorstErrors {
        mean: 0.0,
        variance: 0.0,
        abs_mean: 0.0,
    };
    for row in rows {
        let (c, q) = (row.closed, row.reference);
        let mean_scale = q.mean.abs().max(1e-3 * row.mu_r.sqrt());
        w.mean = w.mean.max((c.mean - q.mean).abs() / mean_scale);
        w.variance = w.variance.max((c.variance - q.variance).abs() / row.mu_r);
        w.abs_mean = w.abs_mean.max((c.abs_mean - q.abs_mean).abs() / q.abs_mean);
    }
    w
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn adjoint_check() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pilots = DMatrix::from_fn(3, 5, |_, _| {
        Complex64::new(
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        )
    });
    let op = build_real_lifted_operator(&pilots, 4)?;
    let v = gaussian_vec(&mut rng, op.cols());
    let u = gaussian_vec(&mut rng, op.rows());
    let lhs = dot(&op.apply(&v)?, &u);
    let rhs = dot(&v, &op.apply_adjoint(&u)?);
    Ok(check(
        "operator adjoint identity",
        (lhs - rhs).abs() / lhs.abs().max(rhs.abs()),
        1e-10,
    ))
}

fn abs2_check() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let pilots = DMatrix::from_fn(2, 3, |_, _| {
        Complex64::new(
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        )
    });
    let op = build_real_lifted_operator(&pilots, 3)?;
    let dense = op.to_dense()?;
    let v: Vec<f64> = (0..op.cols()).map(|_| rng.random::<f64>()).collect();
    let got = op.apply_abs2(&v)?;
    let want = dense.map(|a| a * a) * nalgebra::DVector::from_column_slice(&v);
    let err = got
        .iter()
        .zip(want.iter())
        .map(|(a, b)| (a - b).abs() / b.abs().max(1e-300))
        .fold(0.0, f64::max);
    Ok(check("squared-entry operator", err, 1e-12))
}

fn erfcx_check() -> Check {
    const VALUES: [(f64, f64); 7] = [
        (-5.0, 144_009_798_674.661_04),
        (-1.0, 5.008_980_080_762_283_5),
        (0.5, 0.615_690_344_192_925_9),
        (1.0, 0.427_583_576_155_807),
        (3.0, 0.179_001_151_181_389_95),
        (10.0, 0.056_140_992_743_822_586),
        (30.0, 0.018_795_888_861_416_751),
    ];
    let err = VALUES
        .iter()
        .map(|&(x, v)| (erfcx(x) - v).abs() / v)
        .fold(0.0, f64::max);
    check("erfcx reference values", err, 1e-14)
}

fn denoiser_check() -> Result<Check> {
    let w = worst_errors(&denoiser_table(4)?);
    Ok(check(
        "denoiser vs integration",
        w.mean.max(w.variance).max(w.abs_mean),
        1e-8,
    ))
}

fn identity_check() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let r = rng.random_range(-10.0..10.0);
        let mu = 10f64.powf(rng.random_range(-3.0..1.0));
        let b = 10f64.powf(rng.random_range(-2.0..1.0));
        let e = edge_quantities(r, mu, b)?;
        let target = r * r / (2.0 * mu);
        let plus = e.alpha_plus + e.gamma_plus * e.gamma_plus / (2.0 * mu);
        let minus = e.alpha_minus + e.gamma_minus * e.gamma_minus / (2.0 * mu);
        let scale = target.abs().max(e.alpha_plus.abs()).max(1e-300);
        worst = worst
            .max((plus - target).abs() / scale)
            .max((minus - target).abs() / scale);
    }
    Ok(check("exponent identity", worst, 1e-10))
}

fn waterfill_check() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut sigma: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..3.0)).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    let p = waterfill(&sigma, 0.5, 1.0)?;
    Ok(check(
        "water-filling KKT",
        waterfill_kkt(&sigma, 0.5, 1.0, &p)?.max_residual(),
        1e-10,
    ))
}

fn perfect_csi_check() -> Result<Check> {
    let mut h = DMatrix::zeros(8, 8);
    for (g, (t, r)) in [(1.0, (0.1, -0.3)), (0.6, (0.7, 0.5)), (0.3, (-0.6, 0.9))] {
        h += steering_vector(8, r)? * steering_vector(8, t)?.adjoint() * Complex64::new(g, 0.0);
    }
    let noise = 0.05;
    let rep = rate_lower_bound(&h, &h, noise, 1.0)?;
    let closed: f64 = rep
        .powers
        .iter()
        .zip(&rep.singular_values)
        .map(|(p, s)| (1.0 + p * s * s / (2.0 * noise)).log2())
        .sum();
    Ok(check(
        "perfect-CSI rate closed form",
        (rep.rate - closed).abs() / closed,
        1e-9,
    ))
}

fn determinism_check() -> Result<Check> {
    let scenario = Scenario {
        mt: 4,
        mr: 4,
        k_values: vec![6],
        snr_db: vec![5.0],
        clusters: 1,
        subpaths: 2,
        spread_deg: 3.5,
        spread_model: SpreadModel::Uniform,
        power_profile: None,
    };
    let est = [Estimator::GampLaplace, Estimator::Lmmse];
    let settings = EstimatorSettings::default();
    let run = |threads: usize| -> Result<Vec<_>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::Error::Numerical(e.to_string()))?;
        pool.install(|| run_monte_carlo(&scenario, &est, &settings, 6, 99))
    };
    let a = run(1)?;
    let b = run(3)?;
    let same = a.len() == b.len()
        && a.iter()
            .zip(&b)
            .all(|(x, y)| x.nmse.to_bits() == y.nmse.to_bits() && x.iterations == y.iterations);
    Ok(Check {
        name: "thread-count determinism",
        passed: same,
        detail: format!("{} rows compared", a.len()),
    })
}

type NamedCheck = (&'static str, fn() -> Result<Check>);

/// Runs every check; a check that errors is reported as failed.
pub fn run_all() -> Vec<Check> {
    let fallible: [NamedCheck; 7] = [
        ("operator adjoint identity", adjoint_check),
        ("squared-entry operator", abs2_check),
        ("denoiser vs integration", denoiser_check),
        ("exponent identity", identity_check),
        ("water-filling KKT", waterfill_check),
        ("perfect-CSI rate closed form", perfect_csi_check),
        ("thread-count determinism", determinism_check),
    ];
    let mut out = vec![erfcx_check()];
    for (name, f) in fallible {
        out.push(f().unwrap_or_else(|e| Check {
            name,
            passed: false,
            detail: e.to_string(),
        }));
    }
    out
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
