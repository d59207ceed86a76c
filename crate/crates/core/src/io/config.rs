//! TOML documents. Every document carries `schema_version`; unknown keys are
//! rejected. Relative paths inside a document resolve against its directory.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::estimate::EstimateOptions;
use crate::filter::{Resampling, DEFAULT_LEVELS};
use crate::model::{validate_params, BondUniverse, ModelParams, Prior, ValidatedModel};
use crate::sim::SimConfig;

pub const SCHEMA_VERSION: u32 = 1;

fn check_version(path: &Path, v: u32) -> Result<(), IoError> {
    if v != SCHEMA_VERSION {
        return Err(IoError::parse(
            path,
            format!("`schema_version` must be {SCHEMA_VERSION}, got {v}"),
        ));
    }
    Ok(())
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = super::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| IoError::parse(path, e.to_string()))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Bond labels and model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub bonds: Vec<String>,
    pub model: ModelParams,
}

impl ModelFile {
    pub fn new(universe: &BondUniverse, model: ModelParams) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            bonds: universe.labels().to_vec(),
            model,
        }
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let f: Self = load(path)?;
        check_version(path, f.schema_version)?;
        Ok(f)
    }

    pub fn validate(&self, path: &Path) -> Result<ValidatedModel, IoError> {
        let universe = BondUniverse::new(self.bonds.clone()).map_err(|e| IoError::parse(path, format!("`bonds`: {e}")))?;
        validate_params(&self.model, &universe).map_err(|v| IoError::parse(path, v.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model parameters serialize")
    }
}

/// Gaussian prior. The spread block defaults to the stationary law of the
/// model's spread dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorFile {
    pub schema_version: u32,
    pub mean_y: Vec<f64>,
    pub cov_y: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_x: Option<Vec<Vec<f64>>>,
}

impl PriorFile {
    pub fn read(path: &Path) -> Result<Self, IoError> {
        let f: Self = load(path)?;
        check_version(path, f.schema_version)?;
        if f.mean_x.is_some() != f.cov_x.is_some() {
            return Err(IoError::parse(path, "`mean_x` and `cov_x` must be given together"));
        }
        Ok(f)
    }

    pub fn from_prior(prior: &Prior) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            mean_y: prior.mean_y.clone(),
            cov_y: prior.cov_y.clone(),
            mean_x: Some(prior.mean_x.clone()),
            cov_x: Some(prior.cov_x.clone()),
        }
    }

    pub fn resolve(&self, model: &ValidatedModel) -> Prior {
        match (&self.mean_x, &self.cov_x) {
            (Some(mean_x), Some(cov_x)) => Prior {
                mean_y: self.mean_y.clone(),
                cov_y: self.cov_y.clone(),
                mean_x: mean_x.clone(),
                cov_x: cov_x.clone(),
            },
            _ => Prior::with_stationary_spreads(model, self.mean_y.clone(), self.cov_y.clone()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("prior serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Bp,
    Percent,
}

impl Units {
    pub fn suffix(self) -> &'static str {
        match self {
            Units::Bp => "bp",
            Units::Percent => "pct",
        }
    }

    pub fn from_suffix(s: &str) -> Option<Self> {
        match s {
            "bp" => Some(Units::Bp),
            "pct" => Some(Units::Percent),
            _ => None,
        }
    }

    /// Converts a value held in basis points.
    pub fn from_bp(self, v: f64) -> f64 {
        match self {
            Units::Bp => v,
            Units::Percent => v / 100.0,
        }
    }

    pub fn to_bp(self, v: f64) -> f64 {
        match self {
            Units::Bp => v,
            Units::Percent => v * 100.0,
        }
    }
}

fn default_particles() -> usize {
    10_000
}

fn default_levels() -> Vec<f64> {
    DEFAULT_LEVELS.to_vec()
}

/// Settings for `filter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: PathBuf,
    pub prior: PathBuf,
    pub events: PathBuf,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Report on a regular grid of this step (days) instead of after every event.
    #[serde(default)]
    pub report_every: Option<f64>,
    /// Last grid report time; defaults to the last event time.
    #[serde(default)]
    pub report_until: Option<f64>,
    #[serde(default)]
    pub units: Units,
    #[serde(default)]
    pub resampling: Resampling,
    /// Number of ancestral paths to dump; none when absent.
    #[serde(default)]
    pub trajectories: Option<usize>,
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self, IoError> {
        let mut c: Self = load(path)?;
        check_version(path, c.schema_version)?;
        let base = base_dir(path);
        c.model = base.join(&c.model);
        c.prior = base.join(&c.prior);
        c.events = base.join(&c.events);
        c.out = c.out.map(|o| base.join(o));
        if let Some(step) = c.report_every {
            if !(step > 0.0 && step.is_finite()) {
                return Err(IoError::parse(path, format!("`report_every` must be positive, got {step}")));
            }
        }
        Ok(c)
    }
}

/// Settings for `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub schema_version: u32,
    pub model: PathBuf,
    pub prior: PathBuf,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub sim: SimConfig,
}

impl SimulateConfig {
    pub fn read(path: &Path) -> Result<Self, IoError> {
        let mut c: Self = load(path)?;
        check_version(path, c.schema_version)?;
        let base = base_dir(path);
        c.model = base.join(&c.model);
        c.prior = base.join(&c.prior);
        c.out = c.out.map(|o| base.join(o));
        Ok(c)
    }
}

/// Settings for `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub schema_version: u32,
    pub composite: PathBuf,
    #[serde(default)]
    pub trades: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub options: EstimateOptions,
}

impl EstimateConfig {
    pub fn read(path: &Path) -> Result<Self, IoError> {
        let mut c: Self = load(path)?;
        check_version(path, c.schema_version)?;
        let base = base_dir(path);
        c.composite = base.join(&c.composite);
        c.trades = c.trades.map(|t| base.join(t));
        c.out = c.out.map(|o| base.join(o));
        Ok(c)
    }
}
