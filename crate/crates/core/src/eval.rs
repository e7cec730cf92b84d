//! Scoring: NMSE, water-filling, the SINR-based rate lower bound, and the
//! seeded Monte-Carlo runner with its aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{lmmse_estimate, ls_estimate, GaussianDenoiser};
use crate::channel::{
    generate_pilots, noise_var_from_snr_db, sample_cluster_geometry, synthesize_channel,
    synthesize_problem, ChannelRealization, SpreadModel,
};
use crate::em::{run_em_gamp_laplace, EmConfig};
use crate::error::{check_len, Error, Result};
use crate::gamp::{run_gamp, GampConfig, GampResult};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_THRESHOLD: f64 = 1e-10;

/// `‖x̂ − x‖² / ‖x‖²`.
pub fn nmse(x_hat: &[f64], x: &[f64]) -> Result<f64> {
    check_len("nmse", x.len(), x_hat.len())?;
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::domain("NMSE is undefined for an all-zero reference"));
    }
    let err: f64 = x_hat.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(err / energy)
}

pub fn to_db(v: f64) -> f64 {
    10.0 * v.log10()
}

/// Water-filling over parallel channels with gains `σ_m²/noise_var`.
///
/// The active set is found exactly: with streams ordered by gain, the first
/// `k` are active iff the level computed from them exceeds the `k`-th
/// stream's floor `noise_var/σ_k²`.
pub fn waterfill(sigma: &[f64], noise_var: f64, total_power: f64) -> Result<Vec<f64>> {
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::domain(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    if !(total_power > 0.0 && total_power.is_finite()) {
        return Err(Error::domain(format!(
            "power budget must be positive, got {total_power}"
        )));
    }
    if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::domain(
            "singular values must be finite and nonnegative",
        ));
    }
    let mut order: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] > 0.0).collect();
    if order.is_empty() {
        return Err(Error::DegenerateChannel(
            "every singular value is zero".into(),
        ));
    }
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let floors: Vec<f64> = order
        .iter()
        .map(|&i| noise_var / (sigma[i] * sigma[i]))
        .collect();

    // Grow the active set from the strongest stream. Accumulating forward keeps
    // the huge floors of near-null streams out of the running sum.
    let mut active = 1;
    let mut prefix = floors[0];
    let mut level = total_power + prefix;
    // level_k > f_{k+1} iff level_{k+1} > f_{k+1}, so one comparison suffices
    while active < floors.len() && level > floors[active] {
        prefix += floors[active];
        active += 1;
        level = (total_power + prefix) / active as f64;
    }
    let mut powers = vec![0.0; sigma.len()];
    if active == 1 {
        // exact, where level - floor would round
        powers[order[0]] = total_power;
        return Ok(powers);
    }
    for (&idx, &f) in order.iter().zip(&floors).take(active) {
        powers[idx] = (level - f).max(0.0);
    }
    Ok(powers)
}

/// Deviations from the water-filling optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub level: f64,
    /// Largest `|P_m + noise/σ_m² − λ|` over active streams, relative to `λ`.
    pub active_residual: f64,
    /// Largest `max(0, λ − noise/σ_m²)` over inactive streams, relative to `λ`.
    pub inactive_violation: f64,
    /// `|Σ P_m − total_power| / total_power`.
    pub budget_error: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.active_residual
            .max(self.inactive_violation)
            .max(self.budget_error)
    }
}

pub fn waterfill_kkt(
    sigma: &[f64],
    noise_var: f64,
    total_power: f64,
    powers: &[f64],
) -> Result<KktReport> {
    check_len("waterfill_kkt powers", sigma.len(), powers.len())?;
    let floor = |i: usize| {
        if sigma[i] > 0.0 {
            noise_var / (sigma[i] * sigma[i])
        } else {
            f64::INFINITY
        }
    };
    let active: Vec<usize> = (0..sigma.len()).filter(|&i| powers[i] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::DegenerateChannel("no active stream".into()));
    }
    let level = active.iter().map(|&i| powers[i] + floor(i)).sum::<f64>() / active.len() as f64;
    let active_residual = active
        .iter()
        .map(|&i| (powers[i] + floor(i) - level).abs() / level)
        .fold(0.0, f64::max);
    let inactive_violation = (0..sigma.len())
        .filter(|&i| powers[i] == 0.0)
        .map(|i| ((level - floor(i)) / level).max(0.0))
        .fold(0.0, f64::max);
    let budget_error = (powers.iter().sum::<f64>() - total_power).abs() / total_power;
    Ok(KktReport {
        level,
        active_residual,
        inactive_violation,
        budget_error,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// Singular values of the estimate, descending, after the rank cut.
    pub singular_values: Vec<f64>,
    pub powers: Vec<f64>,
    pub sinr: Vec<f64>,
    /// Bits per channel use.
    pub rate: f64,
    pub active_streams: usize,
}

/// Complex SVD with singular values sorted descending: `(U, σ, V)` with `H = U diag(σ) Vᴴ`.
///
/// Computed with faer: nalgebra's complex SVD stops early on some
/// low-rank channels and loses about three digits in the reconstruction.
pub fn sorted_svd(
    h: &DMatrix<Complex64>,
) -> Result<(DMatrix<Complex64>, Vec<f64>, DMatrix<Complex64>)> {
    let (rows, cols) = h.shape();
    if h.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Numerical("SVD input has non-finite entries".into()));
    }
    let m = faer::Mat::<Complex64>::from_fn(rows, cols, |i, j| h[(i, j)]);
    let svd = m
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..s.nrows()).collect();
    order.sort_by(|&a, &b| s[b].re.total_cmp(&s[a].re));
    let sigma = order.iter().map(|&i| s[i].re).collect();
    let u_sorted = DMatrix::from_fn(rows, order.len(), |r, c| u[(r, order[c])]);
    let v_sorted = DMatrix::from_fn(cols, order.len(), |r, c| v[(r, order[c])]);
    Ok((u_sorted, sigma, v_sorted))
}

/// SVD precoding and combining designed on `h_hat`, water-filled over its
/// singular values with complex noise variance `2σ²`, scored on `h_true`
/// with residual inter-stream interference treated as noise.
pub fn rate_lower_bound(
    h_true: &DMatrix<Complex64>,
    h_hat: &DMatrix<Complex64>,
    noise_var: f64,
    total_power: f64,
) -> Result<RateReport> {
    if h_true.shape() != h_hat.shape() {
        return Err(Error::Shape {
            context: "rate_lower_bound channel",
            expected: h_true.len(),
            actual: h_hat.len(),
        });
    }
    if !(noise_var > 0.0) {
        return Err(Error::domain(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    let streams = h_true.nrows().min(h_true.ncols());
    let (u, mut sigma, v) = sorted_svd(h_hat)?;
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    for s in sigma.iter_mut() {
        if *s < RANK_THRESHOLD * sigma_max {
            *s = 0.0;
        }
    }
    let complex_noise = 2.0 * noise_var;
    if sigma_max == 0.0 {
        return Ok(RateReport {
            singular_values: sigma,
            powers: vec![0.0; streams],
            sinr: vec![0.0; streams],
            rate: 0.0,
            active_streams: 0,
        });
    }
    let powers = waterfill(&sigma, complex_noise, total_power)?;
    // G[m, m'] = û_mᴴ H v̂_m'
    let g = u.adjoint() * h_true * &v;
    let mut sinr = vec![0.0; streams];
    for m in 0..streams {
        if powers[m] == 0.0 {
            continue;
        }
        let interference: f64 = (0..streams)
            .filter(|&j| j != m)
            .map(|j| powers[j] * g[(m, j)].norm_sqr())
            .sum();
        sinr[m] = powers[m] * g[(m, m)].norm_sqr() / (complex_noise + interference);
    }
    let rate = sinr.iter().map(|s| (1.0 + s).log2()).sum();
    let active_streams = powers.iter().filter(|&&p| p > 0.0).count();
    Ok(RateReport {
        singular_values: sigma,
        powers,
        sinr,
        rate,
        active_streams,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    GampLaplace,
    GampGaussian,
    Ls,
    Lmmse,
    /// The true channel used as its own estimate; a rate reference.
    PerfectCsi,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::GampLaplace,
        Estimator::GampGaussian,
        Estimator::Ls,
        Estimator::Lmmse,
        Estimator::PerfectCsi,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Estimator::GampLaplace => "gamp_laplace",
            Estimator::GampGaussian => "gamp_gaussian",
            Estimator::Ls => "ls",
            Estimator::Lmmse => "lmmse",
            Estimator::PerfectCsi => "perfect_csi",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.tag() == s)
            .ok_or_else(|| Error::domain(format!("unknown estimator `{s}`")))
    }
}

/// Channel and sweep description shared by every trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub mt: usize,
    pub mr: usize,
    pub k_values: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub clusters: usize,
    pub subpaths: usize,
    pub spread_deg: f64,
    pub spread_model: SpreadModel,
    pub power_profile: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSettings {
    pub gamp: GampConfig,
    pub em: EmConfig,
    pub lmmse_prior_var: f64,
    pub rate_eval: bool,
    /// Record wall-clock time; off by default so trial tables are reproducible.
    pub timing: bool,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            gamp: GampConfig::default(),
            em: EmConfig::default(),
            lmmse_prior_var: crate::baselines::DEFAULT_PRIOR_VAR,
            rate_eval: true,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    /// Seed of the trial's channel stream.
    pub seed: u64,
    pub estimator: Estimator,
    pub snr_db: f64,
    pub k: usize,
    /// NaN when the estimator produced no estimate.
    pub nmse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// NaN when rate evaluation is off or failed.
    pub rate_bits: f64,
    /// Learned hyperparameters (NaN for estimators without EM).
    pub b_hat: f64,
    pub sigma2_hat: f64,
    pub wall_ms: f64,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn nmse_db(&self) -> f64 {
        to_db(self.nmse)
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for a path of labels under a master seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(master), |acc, &p| mix64(acc ^ mix64(p)))
}

const STREAM_CHANNEL: u64 = 1;
const STREAM_PILOTS: u64 = 2;
const STREAM_NOISE: u64 = 3;

struct Outcome {
    x_hat: Option<Vec<f64>>,
    iterations: usize,
    converged: bool,
    b_hat: f64,
    sigma2_hat: f64,
    error: Option<String>,
}

impl Outcome {
    fn failed(err: Error) -> Self {
        Self {
            x_hat: None,
            iterations: 0,
            converged: false,
            b_hat: f64::NAN,
            sigma2_hat: f64::NAN,
            error: Some(err.to_string()),
        }
    }

    fn from_gamp(res: Result<GampResult>) -> Self {
        match res {
            Ok(r) => Self {
                iterations: r.iterations,
                converged: r.converged,
                sigma2_hat: f64::NAN,
                b_hat: f64::NAN,
                x_hat: Some(r.x_hat),
                error: None,
            },
            Err(Error::Diverged {
                iteration,
                last_finite,
            }) => Self {
                iterations: iteration,
                converged: false,
                b_hat: f64::NAN,
                sigma2_hat: f64::NAN,
                x_hat: Some(last_finite.x_hat),
                error: Some(format!("diverged at iteration {iteration}")),
            },
            Err(e) => Self::failed(e),
        }
    }
}

fn run_estimator(
    estimator: Estimator,
    problem: &crate::channel::RealLiftedProblem,
    settings: &EstimatorSettings,
) -> Outcome {
    let (op, y) = (&problem.op, problem.y.as_slice());
    match estimator {
        Estimator::GampLaplace => match run_em_gamp_laplace(op, y, &settings.gamp, &settings.em) {
            Ok((r, em)) => {
                let mut o = Outcome::from_gamp(Ok(r));
                o.b_hat = em.b;
                o.sigma2_hat = em.noise_var;
                o
            }
            Err(e) => Outcome::from_gamp(Err(e)),
        },
        Estimator::GampGaussian => {
            let res = GaussianDenoiser::new(settings.lmmse_prior_var)
                .and_then(|mut d| run_gamp(op, y, &mut d, problem.noise_var, &settings.gamp, None));
            Outcome::from_gamp(res)
        }
        Estimator::Ls | Estimator::Lmmse => {
            let res = if estimator == Estimator::Ls {
                ls_estimate(op, y)
            } else {
                lmmse_estimate(op, y, problem.noise_var, settings.lmmse_prior_var)
            };
            match res {
                Ok(est) => Outcome {
                    x_hat: Some(est.x_hat),
                    iterations: 0,
                    converged: true,
                    b_hat: f64::NAN,
                    sigma2_hat: f64::NAN,
                    error: None,
                },
                Err(e) => Outcome::failed(e),
            }
        }
        Estimator::PerfectCsi => Outcome {
            x_hat: Some(problem.x_true.clone()),
            iterations: 0,
            converged: true,
            b_hat: f64::NAN,
            sigma2_hat: f64::NAN,
            error: None,
        },
    }
}

fn run_trial(
    scenario: &Scenario,
    estimators: &[Estimator],
    settings: &EstimatorSettings,
    trial: usize,
    master_seed: u64,
) -> Result<Vec<TrialRecord>> {
    let channel_seed = derive_seed(master_seed, &[STREAM_CHANNEL, trial as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(channel_seed);
    let geometry = sample_cluster_geometry(
        &mut rng,
        scenario.clusters,
        scenario.subpaths,
        scenario.spread_deg,
        scenario.spread_model,
        scenario.power_profile.as_deref(),
    )?;
    let channel: ChannelRealization =
        synthesize_channel(&geometry, scenario.mr, scenario.mt, &mut rng)?;

    let mut rows =
        Vec::with_capacity(scenario.k_values.len() * scenario.snr_db.len() * estimators.len());
    for &k in &scenario.k_values {
        let mut pilot_rng = ChaCha8Rng::seed_from_u64(derive_seed(
            master_seed,
            &[STREAM_PILOTS, trial as u64, k as u64],
        ));
        let pilots = generate_pilots(&mut pilot_rng, scenario.mt, k)?;
        for &snr_db in &scenario.snr_db {
            let noise_seed = derive_seed(
                master_seed,
                &[STREAM_NOISE, trial as u64, k as u64, snr_db.to_bits()],
            );
            let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
            let noise_var = noise_var_from_snr_db(snr_db);
            let problem = synthesize_problem(&channel, &pilots, noise_var, &mut noise_rng)?;
            for &est in estimators {
                let start = Instant::now();
                let out = run_estimator(est, &problem, settings);
                let mut error = out.error;
                let mut nmse_val = f64::NAN;
                let mut rate_bits = f64::NAN;
                if let Some(x_hat) = &out.x_hat {
                    match nmse(x_hat, &problem.x_true) {
                        Ok(v) => nmse_val = v,
                        Err(e) => error = error.or(Some(e.to_string())),
                    }
                    if settings.rate_eval {
                        let rate = problem
                            .channel_from_estimate(x_hat)
                            .and_then(|h_hat| rate_lower_bound(&channel.h, &h_hat, noise_var, 1.0));
                        match rate {
                            Ok(r) => rate_bits = r.rate,
                            Err(e) => error = error.or(Some(e.to_string())),
                        }
                    }
                }
                let wall_ms = if settings.timing {
                    start.elapsed().as_secs_f64() * 1e3
                } else {
                    0.0
                };
                rows.push(TrialRecord {
                    trial,
                    seed: channel_seed,
                    estimator: est,
                    snr_db,
                    k,
                    nmse: nmse_val,
                    iterations: out.iterations,
                    converged: out.converged,
                    rate_bits,
                    b_hat: out.b_hat,
                    sigma2_hat: out.sigma2_hat,
                    wall_ms,
                    error,
                });
            }
        }
    }
    Ok(rows)
}

/// Runs every estimator on identical data for each trial, K and SNR.
///
/// Trial `t` draws its channel from a stream keyed by `(master_seed, t)`,
/// its pilots from `(master_seed, t, K)` and its noise from
/// `(master_seed, t, K, SNR)`, so the table does not depend on the thread
/// count. Rows are ordered by trial, K, SNR and then estimator list order.
pub fn run_monte_carlo(
    scenario: &Scenario,
    estimators: &[Estimator],
    settings: &EstimatorSettings,
    n_trials: usize,
    master_seed: u64,
) -> Result<Vec<TrialRecord>> {
    if n_trials == 0 {
        return Err(Error::domain("need at least one trial"));
    }
    if estimators.is_empty() || scenario.k_values.is_empty() || scenario.snr_db.is_empty() {
        return Err(Error::domain("need at least one estimator, K and SNR"));
    }
    let per_trial: Vec<Vec<TrialRecord>> = (0..n_trials)
        .into_par_iter()
        .map(|t| run_trial(scenario, estimators, settings, t, master_seed))
        .collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// Summary of all trials sharing `(estimator, snr_db, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub estimator: Estimator,
    pub snr_db: f64,
    pub k: usize,
    pub trials: usize,
    pub failures: usize,
    pub nmse_mean: f64,
    pub nmse_std: f64,
    /// `10·log10` of the linear mean.
    pub nmse_db: f64,
    pub iterations_mean: f64,
    pub iterations_std: f64,
    pub converged_fraction: f64,
    pub rate_mean: f64,
    pub rate_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Groups trial rows by `(estimator, snr_db, K)`; non-finite entries are skipped.
pub fn aggregate(records: &[TrialRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Estimator, usize, u64), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.estimator, r.k, ordered_bits(r.snr_db)))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|rows| {
            let first = rows[0];
            let (nmse_mean, nmse_std) = mean_std(rows.iter().map(|r| r.nmse));
            let (iterations_mean, iterations_std) =
                mean_std(rows.iter().map(|r| r.iterations as f64));
            let (rate_mean, rate_std) = mean_std(rows.iter().map(|r| r.rate_bits));
            let n = rows.len();
            AggregateRow {
                estimator: first.estimator,
                snr_db: first.snr_db,
                k: first.k,
                trials: n,
                failures: rows.iter().filter(|r| !r.nmse.is_finite()).count(),
                nmse_mean,
                nmse_std,
                nmse_db: to_db(nmse_mean),
                iterations_mean,
                iterations_std,
                converged_fraction: rows.iter().filter(|r| r.converged).count() as f64 / n as f64,
                rate_mean,
                rate_std,
            }
        })
        .collect()
}

/// Bit pattern whose unsigned order matches the numeric order of finite floats.
fn ordered_bits(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}
