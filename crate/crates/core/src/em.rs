//! EM learning of the Laplacian scale `b` and the noise variance `σ²_w`
//! from the per-iteration GAMP posteriors.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::gamp::{run_gamp, EmContext, EmHook, GampConfig, GampResult};
use crate::laplace::{LaplaceDenoiser, LaplacePrior};
use crate::operator::LinearOperator;
use crate::special::ln_erfcx;

pub const SCALE_FLOOR: f64 = 1e-8;
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    /// Relative change `|b_{k+1} − b_k| ≤ δ·b_k` that ends the inner scale loop.
    pub tolerance: f64,
    pub max_inner_iters: usize,
    /// SNR guess (linear) used to initialize the noise variance.
    pub snr0: f64,
    pub b0: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_inner_iters: 1,
            snr0: 100.0,
            b0: 1.0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::config("em.tolerance", "must be > 0"));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::config("em.max_inner_iters", "must be >= 1"));
        }
        if !(self.snr0 > -1.0 && self.snr0.is_finite()) {
            return Err(Error::config("em.snr0", "must be finite and > -1"));
        }
        if !(self.b0 > 0.0 && self.b0.is_finite()) {
            return Err(Error::config("em.b0", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmState {
    pub b: f64,
    pub noise_var: f64,
    pub k: usize,
}

/// `σ²_{w,0} = ‖y‖² / ((SNR⁰ + 1)·M)` and `b₀` from the config.
pub fn init_hyperparams(y: &[f64], config: &EmConfig) -> Result<EmState> {
    if y.is_empty() {
        return Err(Error::domain(
            "cannot initialize EM from an empty measurement vector",
        ));
    }
    let energy: f64 = y.iter().map(|v| v * v).sum();
    let noise_var = energy / ((config.snr0 + 1.0) * y.len() as f64);
    Ok(EmState {
        b: config.b0.max(SCALE_FLOOR),
        noise_var: noise_var.max(NOISE_FLOOR),
        k: 0,
    })
}

/// One M-step for `b`: the average posterior absolute value of the `x_n`
/// under the current scale `b_k`.
///
/// Evaluated as `ξ'/ξ + (2μ/√(2πμ)) e^{-r̂²/(2μ)}/ξ` with every
/// `e^{-α±}Q(·)` replaced by `½ e^{-r̂²/(2μ)} erfcx(·)`, after which the
/// Gaussian factor cancels.
pub fn update_scale(r_hat: &[f64], mu_r: &[f64], b_k: f64) -> Result<f64> {
    check_len("scale update", r_hat.len(), mu_r.len())?;
    if r_hat.is_empty() {
        return Err(Error::domain("scale update needs at least one coefficient"));
    }
    if !(b_k > 0.0 && b_k.is_finite()) {
        return Err(Error::domain(format!("scale must be positive, got {b_k}")));
    }
    let mut total = 0.0;
    for (&r, &mu) in r_hat.iter().zip(mu_r) {
        if !(mu > 0.0 && mu.is_finite()) || !r.is_finite() {
            return Err(Error::domain(format!("invalid message (r̂={r}, μʳ={mu})")));
        }
        let gamma_plus = r - mu / b_k;
        let gamma_minus = r + mu / b_k;
        let s = FRAC_1_SQRT_2 / mu.sqrt();
        let ln_ep = ln_erfcx(-gamma_plus * s);
        let ln_em = ln_erfcx(gamma_minus * s);
        let hi = ln_ep.max(ln_em);
        let ln_sum = hi + (-(ln_ep - ln_em).abs()).exp().ln_1p();
        let w_plus = (ln_ep - ln_sum).exp();
        let w_minus = (ln_em - ln_sum).exp();
        let gauss = 2.0 * (2.0 * mu / PI).sqrt() * (-ln_sum).exp();
        total += gauss + gamma_plus * w_plus - gamma_minus * w_minus;
    }
    Ok((total / r_hat.len() as f64).max(SCALE_FLOOR))
}

/// `(1/M) Σ (|y_m − ẑ_m|² + μᶻ_m)`, floored at [`NOISE_FLOOR`].
pub fn update_noise_variance(y: &[f64], z_hat: &[f64], mu_z: &[f64]) -> Result<f64> {
    check_len("noise update (ẑ)", y.len(), z_hat.len())?;
    check_len("noise update (μᶻ)", y.len(), mu_z.len())?;
    if y.is_empty() {
        return Err(Error::domain("noise update needs at least one measurement"));
    }
    if let Some(bad) = mu_z.iter().find(|&&v| !(v >= 0.0)) {
        return Err(Error::domain(format!("μᶻ must be nonnegative, got {bad}")));
    }
    let sum: f64 = y
        .iter()
        .zip(z_hat)
        .zip(mu_z)
        .map(|((y, z), mz)| (y - z) * (y - z) + mz)
        .sum();
    Ok((sum / y.len() as f64).max(NOISE_FLOOR))
}

/// Scale update (repeated up to `max_inner_iters` times) followed by the
/// noise-variance update.
pub fn em_step(
    state: EmState,
    r_hat: &[f64],
    mu_r: &[f64],
    z_hat: &[f64],
    mu_z: &[f64],
    y: &[f64],
    config: &EmConfig,
) -> Result<EmState> {
    let mut b = state.b;
    for _ in 0..config.max_inner_iters {
        let next = update_scale(r_hat, mu_r, b)?;
        let done = (next - b).abs() <= config.tolerance * b;
        b = next;
        if done {
            break;
        }
    }
    let noise_var = update_noise_variance(y, z_hat, mu_z)?;
    Ok(EmState {
        b,
        noise_var,
        k: state.k + 1,
    })
}

/// [`EmHook`] that keeps a [`LaplaceDenoiser`] and the GAMP noise variance
/// in sync with the EM estimates.
#[derive(Debug, Clone)]
pub struct LaplaceEm {
    pub state: EmState,
    pub config: EmConfig,
}

impl EmHook<LaplaceDenoiser> for LaplaceEm {
    fn update(
        &mut self,
        ctx: &EmContext<'_>,
        denoiser: &mut LaplaceDenoiser,
        noise_var: &mut f64,
    ) -> Result<()> {
        self.state = em_step(
            self.state,
            ctx.r_hat,
            ctx.mu_r,
            ctx.z_hat,
            ctx.mu_z,
            ctx.y,
            &self.config,
        )?;
        denoiser.prior = LaplacePrior::new(self.state.b)?;
        *noise_var = self.state.noise_var;
        Ok(())
    }
}

/// EM-GAMP with a Laplacian prior, initialized from the measurements alone.
pub fn run_em_gamp_laplace(
    op: &LinearOperator,
    y: &[f64],
    gamp: &GampConfig,
    em: &EmConfig,
) -> Result<(GampResult, EmState)> {
    em.validate()?;
    let init = init_hyperparams(y, em)?;
    let mut denoiser = LaplaceDenoiser::new(init.b)?;
    let mut hook = LaplaceEm {
        state: init,
        config: *em,
    };
    let result = run_gamp(op, y, &mut denoiser, init.noise_var, gamp, Some(&mut hook))?;
    Ok((result, hook.state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_matches_formula() {
        let cfg = EmConfig::default();
        let s = init_hyperparams(&[101f64.sqrt()], &cfg).unwrap();
        assert!((s.noise_var - 1.0).abs() < 1e-15);
        assert_eq!(s.b, 1.0);
        let s = init_hyperparams(&[0.0; 8], &cfg).unwrap();
        assert_eq!(s.noise_var, NOISE_FLOOR);
    }

    #[test]
    fn noise_update_cases() {
        let y = [1.0, -2.0, 3.0];
        assert_eq!(update_noise_variance(&y, &y, &[0.25; 3]).unwrap(), 0.25);
        let v = update_noise_variance(&y, &[0.0; 3], &[0.0; 3]).unwrap();
        assert!((v - 14.0 / 3.0).abs() < 1e-15);
        assert!(update_noise_variance(&y, &[0.0; 2], &[0.0; 3]).is_err());
        assert!(update_noise_variance(&y, &y, &[-1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn scale_update_collapses_to_mean_abs() {
        let r = [0.5, -1.5, 2.0, -0.1];
        let mu = [1e-12; 4];
        let b = update_scale(&r, &mu, 1.0).unwrap();
        assert!((b - 1.025).abs() < 1e-5);
    }

    #[test]
    fn single_inner_iteration_contract() {
        let r = [0.3, -0.7, 1.1];
        let mu = [0.2; 3];
        let z = [0.0; 2];
        let y = [1.0, 1.0];
        let cfg = EmConfig::default();
        let s0 = EmState {
            b: 2.0,
            noise_var: 1.0,
            k: 0,
        };
        let s1 = em_step(s0, &r, &mu, &z, &[0.0; 2], &y, &cfg).unwrap();
        assert_eq!(s1.b, update_scale(&r, &mu, 2.0).unwrap());
        assert_eq!(s1.noise_var, 1.0);
        assert_eq!(s1.k, 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(update_scale(&[1.0], &[0.0], 1.0).is_err());
        assert!(update_scale(&[1.0], &[1.0], 0.0).is_err());
        assert!(update_scale(&[1.0, 2.0], &[1.0], 1.0).is_err());
    }
}
