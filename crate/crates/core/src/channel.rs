//! Clustered mmWave MIMO channels for uniform linear arrays, DFT-domain
//! transforms, pilots, and the real-lifted estimation problem built from them.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::operator::{build_real_lifted_operator, LinearOperator};

/// How sub-path angles scatter around their cluster mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadModel {
    /// Uniform on `[mean − spread, mean + spread]`.
    #[default]
    Uniform,
    /// Gaussian with standard deviation `spread`.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Mean angle of departure, radians in `[0, π]`.
    pub mean_aod: f64,
    /// Mean angle of arrival, radians in `[0, π]`.
    pub mean_aoa: f64,
    /// Fraction of the total channel power carried by this cluster.
    pub power: f64,
    pub subpath_aod: Vec<f64>,
    pub subpath_aoa: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGeometry {
    pub clusters: Vec<Cluster>,
    pub spread_deg: f64,
}

impl ClusterGeometry {
    pub fn subpath_count(&self) -> usize {
        self.clusters.iter().map(|c| c.subpath_aod.len()).sum()
    }

    pub fn total_power(&self) -> f64 {
        self.clusters.iter().map(|c| c.power).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    /// Transmit directional cosine `cos φ`.
    pub omega_t: f64,
    /// Receive directional cosine `cos θ`.
    pub omega_r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Physical channel, `M_r × M_t`.
    pub h: DMatrix<Complex64>,
    pub paths: Vec<Path>,
}

impl ChannelRealization {
    /// Channel matrix from a list of paths: `Σ α a_r(Ωʳ) a_t(Ωᵗ)ᴴ`.
    pub fn from_paths(mr: usize, mt: usize, paths: Vec<Path>) -> Result<Self> {
        let mut h = DMatrix::zeros(mr, mt);
        for p in &paths {
            let ar = steering_vector(mr, p.omega_r)?;
            let at = steering_vector(mt, p.omega_t)?;
            h += (ar * at.adjoint()) * p.gain;
        }
        Ok(Self { h, paths })
    }

    pub fn rx_antennas(&self) -> usize {
        self.h.nrows()
    }

    pub fn tx_antennas(&self) -> usize {
        self.h.ncols()
    }
}

/// Complex pilot matrix `B` (`M_t × K`), one column per training instant.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix(pub DMatrix<Complex64>);

/// `y = A x + w` in the real-lifted angular domain, with the ground truth kept
/// for scoring.
#[derive(Debug, Clone)]
pub struct RealLiftedProblem {
    pub y: Vec<f64>,
    pub op: LinearOperator,
    pub x_true: Vec<f64>,
    /// Noise variance per real component.
    pub noise_var: f64,
    pub mr: usize,
    pub mt: usize,
    pub k: usize,
}

/// ULA response with half-wavelength spacing: entry m is `exp(−jπmΩ)`.
pub fn steering_vector(m: usize, omega: f64) -> Result<DVector<Complex64>> {
    if m == 0 {
        return Err(Error::domain("steering vector needs at least one element"));
    }
    if !(omega.abs() <= 1.0) {
        return Err(Error::domain(format!(
            "directional cosine must lie in [-1, 1], got {omega}"
        )));
    }
    Ok(DVector::from_fn(m, |i, _| {
        Complex64::from_polar(1.0, -PI * i as f64 * omega)
    }))
}

/// Unitary DFT matrix with `[U]_{k,m} = M^{-1/2} exp(−j2πkm/M)` (0-based),
/// so column m collects energy from directional cosine `2m/M` (mod 2).
pub fn dft_matrix(m: usize) -> DMatrix<Complex64> {
    let scale = 1.0 / (m as f64).sqrt();
    DMatrix::from_fn(m, m, |k, c| {
        // reduce k·c mod M before scaling to keep the phase exact for large M
        let idx = (k * c) % m;
        Complex64::from_polar(scale, -2.0 * PI * idx as f64 / m as f64)
    })
}

/// Angular-domain representation `U_rᴴ H U_t`.
pub fn to_angular(h: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let ur = dft_matrix(h.nrows());
    let ut = dft_matrix(h.ncols());
    ur.adjoint() * h * ut
}

/// Inverse of [`to_angular`]: `U_r H̃ U_tᴴ`.
pub fn from_angular(ht: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let ur = dft_matrix(ht.nrows());
    let ut = dft_matrix(ht.ncols());
    ur * ht * ut.adjoint()
}

/// `[Re vec(X); Im vec(X)]` with column-major vectorization.
pub fn lift(x: &DMatrix<Complex64>) -> Vec<f64> {
    x.iter()
        .map(|z| z.re)
        .chain(x.iter().map(|z| z.im))
        .collect()
}

/// Inverse of [`lift`].
pub fn unlift(v: &[f64], rows: usize, cols: usize) -> Result<DMatrix<Complex64>> {
    check_len("unlift", 2 * rows * cols, v.len())?;
    let n = rows * cols;
    Ok(DMatrix::from_iterator(
        rows,
        cols,
        (0..n).map(|i| Complex64::new(v[i], v[n + i])),
    ))
}

/// Per-real-component noise variance for a given SNR in dB, from `SNR = 1/(2σ²)`.
pub fn noise_var_from_snr_db(snr_db: f64) -> f64 {
    0.5 / 10f64.powf(snr_db / 10.0)
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Draws `P` clusters of `Q` sub-paths. Mean angles are uniform on `[0, π]`;
/// cluster powers follow `power_profile` (equal when `None`) normalized to
/// sum to one.
pub fn sample_cluster_geometry<R: Rng + ?Sized>(
    rng: &mut R,
    clusters: usize,
    subpaths: usize,
    spread_deg: f64,
    spread_model: SpreadModel,
    power_profile: Option<&[f64]>,
) -> Result<ClusterGeometry> {
    if clusters == 0 || subpaths == 0 {
        return Err(Error::domain("need at least one cluster and one sub-path"));
    }
    if !(spread_deg >= 0.0 && spread_deg.is_finite()) {
        return Err(Error::domain(format!(
            "angular spread must be >= 0, got {spread_deg}"
        )));
    }
    let powers: Vec<f64> = match power_profile {
        None => vec![1.0 / clusters as f64; clusters],
        Some(p) => {
            if p.len() != clusters || p.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::domain(
                    "power profile needs one positive entry per cluster",
                ));
            }
            let total: f64 = p.iter().sum();
            p.iter().map(|v| v / total).collect()
        }
    };
    let spread = spread_deg.to_radians();
    let jitter = |rng: &mut R| -> f64 {
        if spread == 0.0 {
            return 0.0;
        }
        match spread_model {
            SpreadModel::Uniform => rng.random_range(-spread..=spread),
            SpreadModel::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                spread * z
            }
        }
    };
    let mut out = Vec::with_capacity(clusters);
    for power in powers {
        let mean_aod = rng.random_range(0.0..=PI);
        let mean_aoa = rng.random_range(0.0..=PI);
        let mut subpath_aod = Vec::with_capacity(subpaths);
        let mut subpath_aoa = Vec::with_capacity(subpaths);
        for _ in 0..subpaths {
            subpath_aod.push(mean_aod + jitter(rng));
            subpath_aoa.push(mean_aoa + jitter(rng));
        }
        out.push(Cluster {
            mean_aod,
            mean_aoa,
            power,
            subpath_aod,
            subpath_aoa,
        });
    }
    Ok(ClusterGeometry {
        clusters: out,
        spread_deg,
    })
}

/// Draws sub-path gains `α ~ CN(0, σ_p²/Q_p)` and assembles `H`.
pub fn synthesize_channel<R: Rng + ?Sized>(
    geometry: &ClusterGeometry,
    mr: usize,
    mt: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let mut paths = Vec::with_capacity(geometry.subpath_count());
    for c in &geometry.clusters {
        let q = c.subpath_aod.len();
        let var = c.power / q as f64;
        for (&aod, &aoa) in c.subpath_aod.iter().zip(&c.subpath_aoa) {
            paths.push(Path {
                gain: complex_normal(rng, var),
                omega_t: aod.cos().clamp(-1.0, 1.0),
                omega_r: aoa.cos().clamp(-1.0, 1.0),
            });
        }
    }
    ChannelRealization::from_paths(mr, mt, paths)
}

/// Pilots with i.i.d. `CN(0, 1/M_t)` entries, so each column has unit average energy.
pub fn generate_pilots<R: Rng + ?Sized>(rng: &mut R, mt: usize, k: usize) -> Result<PilotMatrix> {
    if mt == 0 || k == 0 {
        return Err(Error::domain("pilot matrix needs M_t >= 1 and K >= 1"));
    }
    let var = 1.0 / mt as f64;
    // draw column by column so a longer pilot sequence extends a shorter one
    let mut b = DMatrix::zeros(mt, k);
    for col in 0..k {
        for row in 0..mt {
            b[(row, col)] = complex_normal(rng, var);
        }
    }
    Ok(PilotMatrix(b))
}

/// DFT-precoded, DFT-combined training observation `Ỹ = H̃B + W̃` lifted to
/// the real model. `W̃` has i.i.d. `CN(0, 2σ²)` entries.
pub fn synthesize_problem<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    pilots: &PilotMatrix,
    noise_var: f64,
    rng: &mut R,
) -> Result<RealLiftedProblem> {
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::domain(format!(
            "noise variance must be >= 0, got {noise_var}"
        )));
    }
    let (mr, mt) = channel.h.shape();
    check_len("pilot rows vs transmit antennas", mt, pilots.0.nrows())?;
    let k = pilots.0.ncols();
    let op = build_real_lifted_operator(&pilots.0, mr)?;
    let x_true = lift(&to_angular(&channel.h));
    let mut y = op.apply(&x_true)?;
    if noise_var > 0.0 {
        let sd = noise_var.sqrt();
        for v in y.iter_mut() {
            let w: f64 = StandardNormal.sample(rng);
            *v += sd * w;
        }
    }
    Ok(RealLiftedProblem {
        y,
        op,
        x_true,
        noise_var,
        mr,
        mt,
        k,
    })
}

impl RealLiftedProblem {
    /// Physical-domain channel from an estimate of the lifted angular vector.
    pub fn channel_from_estimate(&self, x_hat: &[f64]) -> Result<DMatrix<Complex64>> {
        Ok(from_angular(&unlift(x_hat, self.mr, self.mt)?))
    }
}
