//! Scalar MMSE denoiser for a zero-mean Laplacian prior observed through a
//! Gaussian message `N(x; r̂, μʳ)`.
//!
//! The posterior splits at the origin into two truncated Gaussians: on x > 0
//! it is `∝ e^{-α⁺} N(x; γ⁺, μʳ)` and on x < 0 it is `∝ e^{-α⁻} N(x; γ⁻, μʳ)`.
//! Using `α± + (γ±)²/(2μʳ) = r̂²/(2μʳ)`, each branch mass reduces to
//! `½ e^{-r̂²/(2μʳ)} erfcx(∓γ±/√(2μʳ))`, and the shared factor cancels from
//! every posterior moment. Branch weights are formed from `ln erfcx`, and the
//! moments are assembled as a two-component mixture so that neither the
//! weights nor the variance lose precision when |r̂|/√μʳ or μʳ/b² is large.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

use crate::error::{Error, Result};
use crate::gamp::InputDenoiser;
use crate::special::{ln_erfcx, positive_truncated_normal, q_function};

/// Zero-mean Laplacian prior `(1/2b) e^{-|x|/b}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplacePrior {
    b: f64,
}

impl LaplacePrior {
    pub fn new(b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::domain(format!(
                "Laplace scale must be positive and finite, got {b}"
            )));
        }
        Ok(Self { b })
    }

    pub fn scale(&self) -> f64 {
        self.b
    }

    pub fn mean(&self) -> f64 {
        0.0
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.b * self.b
    }
}

/// Posterior summary returned by the denoiser.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiserStats {
    pub mean: f64,
    pub variance: f64,
    /// Posterior mean of |x|, used by the EM scale update.
    pub abs_mean: f64,
}

impl DenoiserStats {
    pub fn second_moment(&self) -> f64 {
        self.variance + self.mean * self.mean
    }
}

/// The `(r̂, μʳ, b)`-dependent quantities of the split posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeQuantities {
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    pub gamma_minus: f64,
    pub gamma_plus: f64,
    /// Normalization constant of the posterior. Underflows to zero only when
    /// the true value is below the smallest positive double; `ln_psi` is
    /// always finite.
    pub psi: f64,
    pub ln_psi: f64,
}

fn check_inputs(r: f64, mu_r: f64, b: f64) -> Result<()> {
    if !r.is_finite() {
        return Err(Error::domain(format!("r̂ must be finite, got {r}")));
    }
    if !(mu_r > 0.0 && mu_r.is_finite()) {
        return Err(Error::domain(format!(
            "μʳ must be positive and finite, got {mu_r}"
        )));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::domain(format!(
            "b must be positive and finite, got {b}"
        )));
    }
    Ok(())
}

/// Log branch masses `ln erfcx(γ⁻/√(2μ))` and `ln erfcx(-γ⁺/√(2μ))`.
fn ln_branch_masses(gamma_minus: f64, gamma_plus: f64, mu_r: f64) -> (f64, f64) {
    let s = FRAC_1_SQRT_2 / mu_r.sqrt();
    (ln_erfcx(gamma_minus * s), ln_erfcx(-gamma_plus * s))
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    hi + (-(a - b).abs()).exp().ln_1p()
}

pub fn edge_quantities(r: f64, mu_r: f64, b: f64) -> Result<EdgeQuantities> {
    check_inputs(r, mu_r, b)?;
    let half_ratio = mu_r / (2.0 * b * b);
    let alpha_minus = -r / b - half_ratio;
    let alpha_plus = r / b - half_ratio;
    let gamma_minus = r + mu_r / b;
    let gamma_plus = r - mu_r / b;
    let (ln_em, ln_ep) = ln_branch_masses(gamma_minus, gamma_plus, mu_r);
    // ψ = (1/2b) · ½ e^{-r̂²/(2μ)} (E⁻ + E⁺)
    let ln_psi = -(2.0 * b).ln() - LN_2 - r * r / (2.0 * mu_r) + log_add_exp(ln_em, ln_ep);
    Ok(EdgeQuantities {
        alpha_minus,
        alpha_plus,
        gamma_minus,
        gamma_plus,
        psi: ln_psi.exp(),
        ln_psi,
    })
}

/// `(1/√(2πμ)) ∫₀^∞ t e^{-(t-γ)²/(2μ)} dt`.
pub fn phi1(gamma: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::domain(format!("Φ1 requires μ > 0, got {mu}")));
    }
    let sd = mu.sqrt();
    Ok(gamma * q_function(-gamma / sd)
        + mu / (2.0 * PI * mu).sqrt() * (-gamma * gamma / (2.0 * mu)).exp())
}

/// `(1/√(2πμ)) ∫₀^∞ t² e^{-(t-γ)²/(2μ)} dt`.
pub fn phi2(gamma: f64, mu: f64) -> Result<f64> {
    let p1 = phi1(gamma, mu)?;
    Ok(gamma * p1 + mu * q_function(-gamma / mu.sqrt()))
}

/// Posterior mean, variance and absolute mean of x under the Laplacian prior.
pub fn posterior_stats(r: f64, mu_r: f64, prior: LaplacePrior) -> Result<DenoiserStats> {
    let b = prior.b;
    check_inputs(r, mu_r, b)?;
    let gamma_minus = r + mu_r / b;
    let gamma_plus = r - mu_r / b;
    let (ln_em, ln_ep) = ln_branch_masses(gamma_minus, gamma_plus, mu_r);
    let w_plus = 1.0 / (1.0 + (ln_em - ln_ep).exp());
    let w_minus = 1.0 / (1.0 + (ln_ep - ln_em).exp());

    let (m_plus, v_plus) = positive_truncated_normal(gamma_plus, mu_r);
    // negative branch, mirrored onto the positive axis
    let (m_neg_abs, v_minus) = positive_truncated_normal(-gamma_minus, mu_r);

    let mean = w_plus * m_plus - w_minus * m_neg_abs;
    let abs_mean = w_plus * m_plus + w_minus * m_neg_abs;
    let spread = m_plus + m_neg_abs;
    let variance = w_plus * v_plus + w_minus * v_minus + w_plus * w_minus * spread * spread;

    if !(mean.is_finite() && variance.is_finite() && abs_mean.is_finite()) {
        return Err(Error::Numerical(format!(
            "Laplace posterior not finite at r̂={r}, μʳ={mu_r}, b={b}"
        )));
    }
    // Both bounds hold exactly for this log-concave posterior; the clamps only
    // absorb last-ulp rounding.
    let variance = variance.min(mu_r);
    let mean = mean.clamp(-r.abs(), r.abs());
    Ok(DenoiserStats {
        mean,
        variance,
        abs_mean: abs_mean.max(mean.abs()),
    })
}

/// GAMP input denoiser wrapping [`posterior_stats`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceDenoiser {
    pub prior: LaplacePrior,
}

impl LaplaceDenoiser {
    pub fn new(b: f64) -> Result<Self> {
        Ok(Self {
            prior: LaplacePrior::new(b)?,
        })
    }
}

impl InputDenoiser for LaplaceDenoiser {
    fn prior_moments(&self) -> (f64, f64) {
        (self.prior.mean(), self.prior.variance())
    }

    fn denoise(&self, r: f64, mu_r: f64) -> Result<(f64, f64)> {
        let s = posterior_stats(r, mu_r, self.prior)?;
        Ok((s.mean, s.variance))
    }
}
