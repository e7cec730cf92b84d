//! Sum-product GAMP for a real linear model `y = A x + w` with AWGN output
//! and an arbitrary separable input prior.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::operator::LinearOperator;

/// Scalar MMSE denoiser for the input channel.
pub trait InputDenoiser {
    /// Prior mean and variance, used to initialize `x̂` and `μˣ`.
    fn prior_moments(&self) -> (f64, f64);

    /// Posterior mean and variance of `x` given the message `N(x; r, mu_r)`.
    fn denoise(&self, r: f64, mu_r: f64) -> Result<(f64, f64)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GampConfig {
    /// Relative squared-change stopping tolerance ε.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Weight on the new iterate for `x̂` and `ŝ`; 1.0 disables damping.
    pub damping: f64,
    pub variance_floor: f64,
    /// Replace per-component variances by their average before each
    /// `A∘A` product.
    pub uniform_variance: bool,
}

impl Default for GampConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iters: 50,
            damping: 1.0,
            variance_floor: 1e-12,
            uniform_variance: false,
        }
    }
}

impl GampConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::config("gamp.tolerance", "must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("gamp.max_iters", "must be >= 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config("gamp.damping", "must lie in (0, 1]"));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::config("gamp.variance_floor", "must be > 0"));
        }
        Ok(())
    }
}

/// Per-iteration quantities handed to an [`EmHook`] after the input
/// denoising step.
#[derive(Debug)]
pub struct EmContext<'a> {
    pub iteration: usize,
    pub r_hat: &'a [f64],
    pub mu_r: &'a [f64],
    pub z_hat: &'a [f64],
    pub mu_z: &'a [f64],
    pub y: &'a [f64],
}

/// Hyperparameter learner run once per GAMP iteration. Updates take effect
/// from the next iteration on.
pub trait EmHook<D: InputDenoiser> {
    fn update(&mut self, ctx: &EmContext<'_>, denoiser: &mut D, noise_var: &mut f64) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖x̂(t+1) − x̂(t)‖² / ‖x̂(t)‖²` (infinite when `x̂(t) = 0` and the step is nonzero).
    pub relative_change: f64,
    pub noise_var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GampResult {
    pub x_hat: Vec<f64>,
    pub mu_x: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub mu_r: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub mu_z: Vec<f64>,
    pub s_hat: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Noise variance in force at the end of the run (differs from the
    /// input only when an EM hook is attached).
    pub noise_var: f64,
    pub history: Vec<IterationRecord>,
}

/// Posterior mean and variance of `z` under `N(z; p̂, μᵖ)` and `y = z + N(0, σ²)`.
pub fn awgn_output_stats(p_hat: f64, mu_p: f64, y: f64, noise_var: f64) -> Result<(f64, f64)> {
    if !(mu_p > 0.0) || !(noise_var > 0.0) {
        return Err(Error::domain(format!(
            "AWGN output stage needs positive variances (μᵖ={mu_p}, σ²={noise_var})"
        )));
    }
    let denom = mu_p + noise_var;
    Ok((
        (mu_p * y + noise_var * p_hat) / denom,
        mu_p * noise_var / denom,
    ))
}

/// `(‖new − old‖², ‖old‖²)`, both divided by the square of the largest
/// magnitude involved so neither underflows nor overflows.
fn scaled_change(x_new: &[f64], x_old: &[f64]) -> (f64, f64) {
    let scale = x_new
        .iter()
        .zip(x_old)
        .fold(0.0f64, |m, (n, o)| m.max((n - o).abs()).max(o.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return x_new.iter().zip(x_old).fold((0.0, 0.0), |(d, b), (n, o)| {
            (d + (n - o) * (n - o), b + o * o)
        });
    }
    x_new.iter().zip(x_old).fold((0.0, 0.0), |(d, b), (n, o)| {
        let (dn, on) = ((n - o) / scale, o / scale);
        (d + dn * dn, b + on * on)
    })
}

/// Relative squared-change stopping rule `‖new − old‖² ≤ ε‖old‖²`.
pub fn check_stop(x_new: &[f64], x_old: &[f64], tolerance: f64) -> bool {
    debug_assert_eq!(x_new.len(), x_old.len());
    if x_old.iter().all(|&o| o == 0.0) {
        return x_new.iter().all(|&n| n == 0.0);
    }
    let (diff, base) = scaled_change(x_new, x_old);
    diff <= tolerance * base
}

fn relative_change(x_new: &[f64], x_old: &[f64]) -> f64 {
    let (diff, base) = scaled_change(x_new, x_old);
    if diff == 0.0 {
        0.0
    } else {
        diff / base
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs GAMP until the relative change of `x̂` drops below the tolerance or
/// `max_iters` iterations have been performed.
pub fn run_gamp<D: InputDenoiser>(
    op: &LinearOperator,
    y: &[f64],
    denoiser: &mut D,
    noise_var: f64,
    config: &GampConfig,
    mut em_hook: Option<&mut dyn EmHook<D>>,
) -> Result<GampResult> {
    config.validate()?;
    check_len("GAMP measurements", op.rows(), y.len())?;
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::domain(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    let (m, n) = (op.rows(), op.cols());
    let floor = config.variance_floor;
    let damp = config.damping;
    let fro_sq = op.frobenius_norm_sq();

    let (prior_mean, prior_var) = denoiser.prior_moments();
    let mut state = GampResult {
        x_hat: vec![prior_mean; n],
        mu_x: vec![prior_var.max(floor); n],
        r_hat: vec![0.0; n],
        mu_r: vec![0.0; n],
        z_hat: vec![0.0; m],
        mu_z: vec![0.0; m],
        s_hat: vec![0.0; m],
        iterations: 0,
        converged: false,
        noise_var,
        history: Vec::new(),
    };

    let mut mu_p = vec![0.0; m];
    let mut p_hat = vec![0.0; m];
    let mut mu_s = vec![0.0; m];
    let mut back = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut mu_x_new = vec![0.0; n];

    for t in 1..=config.max_iters {
        let sigma2 = state.noise_var;

        // μᵖ = (A∘A) μˣ
        if config.uniform_variance {
            mu_p.fill(mean(&state.mu_x) * fro_sq / m as f64);
        } else {
            op.apply_abs2_into(&state.mu_x, &mut mu_p)?;
        }
        mu_p.iter_mut().for_each(|v| *v = v.max(floor));

        // p̂ = A x̂ − μᵖ ŝ
        op.apply_into(&state.x_hat, &mut p_hat)?;
        for ((p, &mp), &s) in p_hat.iter_mut().zip(&mu_p).zip(&state.s_hat) {
            *p -= mp * s;
        }

        let mut s_new = vec![0.0; m];
        for i in 0..m {
            let (z, mz) = awgn_output_stats(p_hat[i], mu_p[i], y[i], sigma2)?;
            state.z_hat[i] = z;
            state.mu_z[i] = mz.max(floor);
            mu_s[i] = ((1.0 - mz / mu_p[i]) / mu_p[i]).max(0.0).max(floor);
            s_new[i] = (z - p_hat[i]) / mu_p[i];
        }
        for (s, sn) in state.s_hat.iter_mut().zip(&s_new) {
            *s = damp * sn + (1.0 - damp) * *s;
        }

        // μʳ = 1 / ((A∘A)ᵀ μˢ), r̂ = x̂ + μʳ Aᵀ ŝ
        if config.uniform_variance {
            let v = 1.0 / (mean(&mu_s) * fro_sq / n as f64).max(f64::MIN_POSITIVE);
            state.mu_r.fill(v.max(floor));
        } else {
            op.apply_abs2_adjoint_into(&mu_s, &mut back)?;
            for (r, &b) in state.mu_r.iter_mut().zip(&back) {
                *r = (1.0 / b.max(f64::MIN_POSITIVE)).max(floor);
            }
        }
        op.apply_adjoint_into(&state.s_hat, &mut back)?;
        for ((r, &x), (&m, &b)) in state
            .r_hat
            .iter_mut()
            .zip(&state.x_hat)
            .zip(state.mu_r.iter().zip(&back))
        {
            *r = x + m * b;
        }

        if !(all_finite(&state.r_hat) && all_finite(&state.mu_r) && all_finite(&state.z_hat)) {
            return Err(diverged(t, &state));
        }

        for i in 0..n {
            let (xm, xv) = denoiser.denoise(state.r_hat[i], state.mu_r[i])?;
            x_new[i] = damp * xm + (1.0 - damp) * state.x_hat[i];
            mu_x_new[i] = xv.max(floor);
        }
        if !(all_finite(&x_new) && all_finite(&mu_x_new)) {
            return Err(diverged(t, &state));
        }

        if let Some(hook) = em_hook.as_deref_mut() {
            let ctx = EmContext {
                iteration: t,
                r_hat: &state.r_hat,
                mu_r: &state.mu_r,
                z_hat: &state.z_hat,
                mu_z: &state.mu_z,
                y,
            };
            hook.update(&ctx, denoiser, &mut state.noise_var)?;
        }

        let change = relative_change(&x_new, &state.x_hat);
        let converged = check_stop(&x_new, &state.x_hat, config.tolerance);
        std::mem::swap(&mut state.x_hat, &mut x_new);
        std::mem::swap(&mut state.mu_x, &mut mu_x_new);
        state.iterations = t;
        state.history.push(IterationRecord {
            iteration: t,
            relative_change: change,
            noise_var: state.noise_var,
        });
        if converged {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

fn diverged(iteration: usize, state: &GampResult) -> Error {
    Error::Diverged {
        iteration,
        last_finite: Box::new(state.clone()),
    }
}
