//! Experiment configuration: TOML schema, defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::baselines::DEFAULT_PRIOR_VAR;
use crate::channel::SpreadModel;
use crate::em::EmConfig;
use crate::error::{Error, Result};
use crate::eval::{Estimator, EstimatorSettings, Scenario};
use crate::gamp::GampConfig;

/// Every field is optional in the file; omitted fields take the values of
/// the full-scale scenario (64×64 arrays, K = 128, 4 clusters of 10
/// sub-paths, 3.5° spread, 500 trials).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mt: usize,
    pub mr: usize,
    /// Training lengths; a bare integer is accepted for a single value.
    #[serde(deserialize_with = "one_or_many")]
    pub k: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub clusters: usize,
    pub subpaths: usize,
    pub spread_deg: f64,
    pub spread_model: SpreadModel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_profile: Option<Vec<f64>>,
    pub estimators: Vec<Estimator>,
    pub n_trials: usize,
    pub master_seed: u64,
    pub rate_eval: bool,
    /// Write measured wall time; when off `wall_ms` is 0 so tables are reproducible.
    pub timing: bool,
    pub lmmse_prior_var: f64,
    pub output: PathBuf,
    pub gamp: GampConfig,
    pub em: EmConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mt: 64,
            mr: 64,
            k: vec![128],
            snr_db: vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            clusters: 4,
            subpaths: 10,
            spread_deg: 3.5,
            spread_model: SpreadModel::Uniform,
            power_profile: None,
            estimators: vec![Estimator::GampLaplace, Estimator::Ls, Estimator::Lmmse],
            n_trials: 500,
            master_seed: 0,
            rate_eval: true,
            timing: false,
            lmmse_prior_var: DEFAULT_PRIOR_VAR,
            output: PathBuf::from("results"),
            gamp: GampConfig::default(),
            em: EmConfig::default(),
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(k) => vec![k],
        OneOrMany::Many(v) => v,
    })
}

/// Dotted key path of the assignment containing byte `offset`, qualified by
/// the nearest preceding table header.
fn key_path_at(text: &str, offset: usize) -> Option<String> {
    let head = text.get(..offset)?;
    let line_start = head.rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("");
    let key = line.split_once('=').map(|(k, _)| k.trim().to_string());
    let table = head[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && l.ends_with(']'))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    match (table, key) {
        (Some(t), Some(k)) => Some(format!("{t}.{k}")),
        (Some(t), None) => Some(t),
        (None, k) => k,
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .and_then(|s| key_path_at(text, s.start))
                .unwrap_or_else(|| "<document>".to_string());
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("mt", self.mt),
            ("mr", self.mr),
            ("clusters", self.clusters),
            ("subpaths", self.subpaths),
            ("n_trials", self.n_trials),
        ];
        for (field, v) in counts {
            if v == 0 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        if self.k.is_empty() {
            return Err(Error::config("k", "needs at least one value"));
        }
        if let Some(i) = self.k.iter().position(|&k| k == 0) {
            return Err(Error::config(format!("k[{i}]"), "must be >= 1"));
        }
        if self.snr_db.is_empty() {
            return Err(Error::config("snr_db", "needs at least one value"));
        }
        if let Some(i) = self.snr_db.iter().position(|s| !s.is_finite()) {
            return Err(Error::config(format!("snr_db[{i}]"), "must be finite"));
        }
        if !(self.spread_deg >= 0.0 && self.spread_deg.is_finite()) {
            return Err(Error::config("spread_deg", "must be finite and >= 0"));
        }
        if let Some(p) = &self.power_profile {
            if p.len() != self.clusters {
                return Err(Error::config(
                    "power_profile",
                    format!(
                        "needs {} entries (one per cluster), got {}",
                        self.clusters,
                        p.len()
                    ),
                ));
            }
            if let Some(i) = p.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::config(format!("power_profile[{i}]"), "must be > 0"));
            }
        }
        if self.estimators.is_empty() {
            return Err(Error::config("estimators", "needs at least one estimator"));
        }
        if !(self.lmmse_prior_var > 0.0 && self.lmmse_prior_var.is_finite()) {
            return Err(Error::config("lmmse_prior_var", "must be > 0"));
        }
        self.gamp.validate()?;
        self.em.validate()?;
        Ok(())
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            mt: self.mt,
            mr: self.mr,
            k_values: self.k.clone(),
            snr_db: self.snr_db.clone(),
            clusters: self.clusters,
            subpaths: self.subpaths,
            spread_deg: self.spread_deg,
            spread_model: self.spread_model,
            power_profile: self.power_profile.clone(),
        }
    }

    pub fn estimator_settings(&self) -> EstimatorSettings {
        EstimatorSettings {
            gamp: self.gamp,
            em: self.em,
            lmmse_prior_var: self.lmmse_prior_var,
            rate_eval: self.rate_eval,
            timing: self.timing,
        }
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::from_toml_str(&text)
}
