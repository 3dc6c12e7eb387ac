use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::InstanceSpec;
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, EstimatorKind, NoiseModel};
use crate::incentive::SchedulePolicy;
use crate::oracle::OracleSettings;
use crate::orchestrator::RunSettings;
use crate::vi::SolverParams;

/// Environment variable under which relative output directories are resolved.
pub const OUTPUT_ROOT_ENV: &str = "GNE_OUTPUT_ROOT";

/// A single value or a list; both spellings are accepted in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Sweep description. Cells are the product `seeds × estimator × cxi_product`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub instance: InstanceSpec,
    /// Load the instance from this JSON document instead of generating it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_file: Option<PathBuf>,
    /// Use one generated instance for every seed; otherwise seed `s` draws instance `s`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_seed: Option<u64>,
    pub estimator: OneOrMany<EstimatorKind>,
    #[serde(default = "default_c_factor")]
    pub c_factor: f64,
    #[serde(default = "default_cxi")]
    pub cxi_product: OneOrMany<f64>,
    pub rounds: usize,
    #[serde(default)]
    pub noise_mean: f64,
    #[serde(default)]
    pub noise_variance: f64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_length_scale")]
    pub gp_length_scale: f64,
    #[serde(default = "default_signal_scale")]
    pub gp_signal_scale: f64,
    /// Defaults to `noise_variance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gp_noise_variance: Option<f64>,
    #[serde(default)]
    pub probe_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default = "default_tol_inner")]
    pub tol_inner: f64,
    #[serde(default = "default_max_inner")]
    pub max_inner_iters: usize,
    /// 0 skips the oracle.
    #[serde(default = "default_oracle_starts")]
    pub oracle_starts: usize,
    #[serde(default = "default_envelope_window")]
    pub envelope_window: usize,
}

fn default_c_factor() -> f64 {
    2.0
}
fn default_cxi() -> OneOrMany<f64> {
    OneOrMany::One(0.5)
}
fn default_ridge() -> f64 {
    1e-6
}
fn default_length_scale() -> f64 {
    50.0
}
fn default_signal_scale() -> f64 {
    100.0
}
fn default_tol_inner() -> f64 {
    1e-9
}
fn default_max_inner() -> usize {
    200_000
}
fn default_oracle_starts() -> usize {
    20
}
fn default_envelope_window() -> usize {
    10
}

impl ExperimentConfig {
    /// Minimal config with every optional key at its default.
    pub fn new(estimator: EstimatorKind, rounds: usize, seeds: Vec<u64>, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            instance: InstanceSpec::default(),
            instance_file: None,
            instance_seed: None,
            estimator: OneOrMany::One(estimator),
            c_factor: default_c_factor(),
            cxi_product: default_cxi(),
            rounds,
            noise_mean: 0.0,
            noise_variance: 0.0,
            seeds,
            output_dir: output_dir.into(),
            ridge: default_ridge(),
            gp_length_scale: default_length_scale(),
            gp_signal_scale: default_signal_scale(),
            gp_noise_variance: None,
            probe_count: 0,
            window: None,
            tol_inner: default_tol_inner(),
            max_inner_iters: default_max_inner(),
            oracle_starts: default_oracle_starts(),
            envelope_window: default_envelope_window(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn estimators(&self) -> Vec<EstimatorKind> {
        self.estimator.to_vec()
    }

    pub fn cxi_products(&self) -> Vec<f64> {
        self.cxi_product.to_vec()
    }

    /// Checks everything that can be checked without touching the file system.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        if self.estimators().is_empty() || self.cxi_products().is_empty() {
            return Err(Error::config("estimator and cxi_product need at least one value"));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds must be positive"));
        }
        if !(self.c_factor >= 2.0) {
            return Err(Error::config(format!("c_factor must be at least 2, got {}", self.c_factor)));
        }
        if let Some(bad) = self.cxi_products().into_iter().find(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::config(format!("cxi_product must lie in [0, 1), got {bad}")));
        }
        NoiseModel::new(self.noise_mean, self.noise_variance)?;
        if !(self.tol_inner > 0.0) || self.max_inner_iters == 0 {
            return Err(Error::config("tol_inner and max_inner_iters must be positive"));
        }
        if self.window == Some(0) || self.envelope_window == 0 {
            return Err(Error::config("windows must be positive"));
        }
        if !(self.ridge > 0.0) {
            return Err(Error::config(format!("ridge must be positive, got {}", self.ridge)));
        }
        if !(self.gp_length_scale > 0.0 && self.gp_signal_scale > 0.0) {
            return Err(Error::config("Gaussian process scales must be positive"));
        }
        if self.gp_noise_variance.is_some_and(|v| !(v >= 0.0)) {
            return Err(Error::config("gp_noise_variance must be nonnegative"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::config("output_dir must not be empty"));
        }
        Ok(())
    }

    pub fn estimator_config(&self, kind: EstimatorKind) -> EstimatorConfig {
        EstimatorConfig {
            kind,
            ridge: self.ridge,
            gp_length_scale: self.gp_length_scale,
            gp_signal_scale: self.gp_signal_scale,
            gp_noise_variance: self.gp_noise_variance.unwrap_or(self.noise_variance),
            window: self.window,
        }
    }

    pub fn policy(&self, cxi_product: f64) -> SchedulePolicy {
        SchedulePolicy { c_factor: self.c_factor, cxi_product }
    }

    pub fn run_settings(&self) -> Result<RunSettings> {
        Ok(RunSettings {
            rounds: self.rounds,
            noise: NoiseModel::new(self.noise_mean, self.noise_variance)?,
            probe_count: self.probe_count,
            solver: SolverParams {
                tol: self.tol_inner,
                max_iters: self.max_inner_iters,
                ..Default::default()
            },
            envelope_window: self.envelope_window,
        })
    }

    pub fn oracle_settings(&self) -> Option<OracleSettings> {
        (self.oracle_starts > 0).then(|| OracleSettings { starts: self.oracle_starts, ..Default::default() })
    }
}

/// `dir` itself when absolute, otherwise `dir` under `root` (when given).
pub fn resolve_output_dir(dir: &Path, root: Option<&Path>) -> PathBuf {
    match root {
        Some(r) if dir.is_relative() => r.join(dir),
        _ => dir.to_path_buf(),
    }
}
