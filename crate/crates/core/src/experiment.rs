//! Runs a configured sweep and writes the trial table, the aggregate table
//! and a manifest that replays the run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::{aggregate, run_monte_carlo, AggregateRow, TrialRecord};

pub const TRIALS_FILE: &str = "trials.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

pub const TRIAL_COLUMNS: [&str; 12] = [
    "trial",
    "estimator",
    "snr_db",
    "K",
    "nmse",
    "nmse_db",
    "iterations",
    "converged",
    "rate_bits",
    "b_hat",
    "sigma2_hat",
    "wall_ms",
];

pub const AGGREGATE_COLUMNS: [&str; 13] = [
    "estimator",
    "snr_db",
    "K",
    "trials",
    "failures",
    "nmse_mean",
    "nmse_std",
    "nmse_db",
    "iterations_mean",
    "iterations_std",
    "converged_fraction",
    "rate_mean",
    "rate_std",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software: String,
    pub version: String,
    pub master_seed: u64,
    pub trial_rows: usize,
    pub failed_rows: usize,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub trials_path: PathBuf,
    pub aggregate_path: PathBuf,
    pub manifest_path: PathBuf,
    pub records: Vec<TrialRecord>,
    pub aggregate: Vec<AggregateRow>,
}

/// 17 significant digits in scientific notation; independent of locale.
pub fn format_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

pub fn write_trials_csv(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(TRIAL_COLUMNS)
        .map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.estimator.tag().to_string(),
            format_real(r.snr_db),
            r.k.to_string(),
            format_real(r.nmse),
            format_real(r.nmse_db()),
            r.iterations.to_string(),
            r.converged.to_string(),
            format_real(r.rate_bits),
            format_real(r.b_hat),
            format_real(r.sigma2_hat),
            format_real(r.wall_ms),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(AGGREGATE_COLUMNS)
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.estimator.tag().to_string(),
            format_real(r.snr_db),
            r.k.to_string(),
            r.trials.to_string(),
            r.failures.to_string(),
            format_real(r.nmse_mean),
            format_real(r.nmse_std),
            format_real(r.nmse_db),
            format_real(r.iterations_mean),
            format_real(r.iterations_std),
            format_real(r.converged_fraction),
            format_real(r.rate_mean),
            format_real(r.rate_std),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads the `config` table of a manifest written by [`run_experiment`].
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::config("manifest", e.message().to_string()))?;
    manifest.config.validate()?;
    Ok(manifest)
}

/// Runs the sweep described by `config` and writes the three output files
/// into `config.output`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let out = &config.output;
    fs::create_dir_all(out).map_err(io_err(out))?;

    let records = run_monte_carlo(
        &config.scenario(),
        &config.estimators,
        &config.estimator_settings(),
        config.n_trials,
        config.master_seed,
    )?;
    let failed_rows = records.iter().filter(|r| r.error.is_some()).count();
    for r in records.iter().filter(|r| r.error.is_some()) {
        log::warn!(
            "trial {} {} K={} SNR={} dB: {}",
            r.trial,
            r.estimator,
            r.k,
            r.snr_db,
            r.error.as_deref().unwrap_or_default()
        );
    }
    let agg = aggregate(&records);

    let trials_path = out.join(TRIALS_FILE);
    let aggregate_path = out.join(AGGREGATE_FILE);
    let manifest_path = out.join(MANIFEST_FILE);
    write_trials_csv(&trials_path, &records)?;
    write_aggregate_csv(&aggregate_path, &agg)?;

    let manifest = Manifest {
        software: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: config.master_seed,
        trial_rows: records.len(),
        failed_rows,
        config: config.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::config("manifest", e.to_string()))?;
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;

    Ok(ExperimentOutput {
        trials_path,
        aggregate_path,
        manifest_path,
        records,
        aggregate: agg,
    })
}
