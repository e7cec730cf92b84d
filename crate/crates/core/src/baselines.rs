//! Reference estimators: least squares, LMMSE, and a Gaussian-prior denoiser
//! used to cross-check the GAMP engine against a linear solution.

use std::time::{Duration, Instant};

use crate::error::{check_len, Error, Result};
use crate::gamp::InputDenoiser;
use crate::operator::LinearOperator;

/// Relative residual target for the iterative solvers.
pub const SOLVER_TOLERANCE: f64 = 1e-10;

/// White prior variance per real component matching `E‖H‖² = M_r M_t`.
pub const DEFAULT_PRIOR_VAR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    LeastSquares,
    Lmmse,
}

#[derive(Debug, Clone)]
pub struct BaselineEstimate {
    pub x_hat: Vec<f64>,
    pub method: BaselineMethod,
    pub iterations: usize,
    pub wall_time: Duration,
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Conjugate gradient for a symmetric positive-definite operator given as a
/// closure. Stops when `‖b − Kx‖ ≤ tol·‖b‖`.
pub fn conjugate_gradient<F>(
    mut apply: F,
    b: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<CgSolution>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut kp = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let target = (tol * b_norm).powi(2);
    for it in 1..=max_iters {
        apply(&p, &mut kp)?;
        let curvature = dot(&p, &kp);
        if !(curvature > 0.0) {
            return Err(Error::Singular(format!(
                "operator is not positive definite (pᵀKp = {curvature:e} at iteration {it})"
            )));
        }
        let alpha = rr / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &kp, &mut r);
        let rr_new = dot(&r, &r);
        if rr_new <= target {
            return Ok(CgSolution {
                x,
                iterations: it,
                relative_residual: rr_new.sqrt() / b_norm,
                converged: true,
            });
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Ok(CgSolution {
        x,
        iterations: max_iters,
        relative_residual: rr.sqrt() / b_norm,
        converged: false,
    })
}

/// `argmin ‖y − Ax‖²` by CGLS on the normal equations, stopping when
/// `‖Aᵀ(y − Ax)‖ ≤ 1e-10·‖Aᵀy‖` within `10·N` iterations.
pub fn ls_estimate(op: &LinearOperator, y: &[f64]) -> Result<BaselineEstimate> {
    let start = Instant::now();
    let (m, n) = (op.rows(), op.cols());
    check_len("ls_estimate y", m, y.len())?;
    if m < n {
        return Err(Error::Singular(format!(
            "least squares needs full column rank but the system is {m}×{n}"
        )));
    }
    let mut x = vec![0.0; n];
    let mut resid = y.to_vec();
    let mut s = op.apply_adjoint(&resid)?;
    let s0 = dot(&s, &s).sqrt();
    let mut iterations = 0;
    if s0 > 0.0 {
        let mut p = s.clone();
        let mut q = vec![0.0; m];
        let mut gamma = dot(&s, &s);
        let target = SOLVER_TOLERANCE * s0;
        let max_iters = 10 * n;
        let mut converged = false;
        while iterations < max_iters {
            iterations += 1;
            op.apply_into(&p, &mut q)?;
            let qq = dot(&q, &q);
            if !(qq > 0.0) {
                return Err(Error::Singular(
                    "normal equations are rank deficient".into(),
                ));
            }
            let alpha = gamma / qq;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &q, &mut resid);
            op.apply_adjoint_into(&resid, &mut s)?;
            let gamma_new = dot(&s, &s);
            if gamma_new.sqrt() <= target {
                converged = true;
                break;
            }
            let beta = gamma_new / gamma;
            for (pi, si) in p.iter_mut().zip(&s) {
                *pi = si + beta * *pi;
            }
            gamma = gamma_new;
        }
        if !converged {
            return Err(Error::Singular(format!(
                "least-squares CG did not reach relative residual {SOLVER_TOLERANCE:e} in {max_iters} iterations"
            )));
        }
    }
    Ok(BaselineEstimate {
        x_hat: x,
        method: BaselineMethod::LeastSquares,
        iterations,
        wall_time: start.elapsed(),
    })
}

/// `x̂ = v·Aᵀ(v·AAᵀ + σ²I)⁻¹ y` with `v = prior_var`, solved matrix-free.
pub fn lmmse_estimate(
    op: &LinearOperator,
    y: &[f64],
    noise_var: f64,
    prior_var: f64,
) -> Result<BaselineEstimate> {
    let start = Instant::now();
    check_len("lmmse_estimate y", op.rows(), y.len())?;
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::domain(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    if !(prior_var > 0.0 && prior_var.is_finite()) {
        return Err(Error::domain(format!(
            "prior variance must be positive, got {prior_var}"
        )));
    }
    let mut tmp = vec![0.0; op.cols()];
    let apply = |u: &[f64], out: &mut [f64]| -> Result<()> {
        op.apply_adjoint_into(u, &mut tmp)?;
        op.apply_into(&tmp, out)?;
        for (o, ui) in out.iter_mut().zip(u) {
            *o = prior_var * *o + noise_var * ui;
        }
        Ok(())
    };
    let sol = conjugate_gradient(apply, y, SOLVER_TOLERANCE, 10 * op.cols().max(op.rows()))?;
    if !sol.converged {
        return Err(Error::Numerical(format!(
            "LMMSE CG stalled at relative residual {:e} after {} iterations",
            sol.relative_residual, sol.iterations
        )));
    }
    let mut x_hat = op.apply_adjoint(&sol.x)?;
    x_hat.iter_mut().for_each(|v| *v *= prior_var);
    Ok(BaselineEstimate {
        x_hat,
        method: BaselineMethod::Lmmse,
        iterations: sol.iterations,
        wall_time: start.elapsed(),
    })
}

/// Posterior of `x ~ N(0, v)` observed as `r = x + N(0, μ)`.
pub fn gaussian_posterior_stats(r: f64, mu_r: f64, v: f64) -> Result<(f64, f64)> {
    if !(mu_r > 0.0) || !(v > 0.0) {
        return Err(Error::domain(format!(
            "Gaussian posterior needs positive variances, got mu_r={mu_r}, v={v}"
        )));
    }
    if v.is_infinite() {
        return Ok((r, mu_r));
    }
    let denom = v + mu_r;
    Ok((v * r / denom, v * mu_r / denom))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianDenoiser {
    pub variance: f64,
}

impl GaussianDenoiser {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::domain(format!(
                "prior variance must be positive, got {variance}"
            )));
        }
        Ok(Self { variance })
    }
}

impl InputDenoiser for GaussianDenoiser {
    fn prior_moments(&self) -> (f64, f64) {
        (0.0, self.variance)
    }

    fn denoise(&self, r: f64, mu_r: f64) -> Result<(f64, f64)> {
        gaussian_posterior_stats(r, mu_r, self.variance)
    }
}
