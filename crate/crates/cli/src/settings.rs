//! Flag > config file > default resolution and the echoed run configuration.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use lesion_outcome::biomarkers::ImagingOptions;
use lesion_outcome::forest::{ForestParams, MaxFeatures};
use lesion_outcome::metrics::MetricParams;
use lesion_outcome::Connectivity;
use serde::{Deserialize, Serialize};

use crate::args::{Common, ForestFlags, ImagingFlags, MetricFlags};
use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "LESION_OUTCOME_OUT";
pub const DEFAULT_OUT_DIR: &str = "lesion-outcome-out";

/// Keys accepted in the TOML config file. All optional; unknown keys are
/// rejected so typos do not silently fall back to defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub model_config: Option<String>,
    pub model_configs: Option<Vec<String>>,
    pub connectivity: Option<String>,
    pub min_lesion_ml: Option<f64>,
    pub local_thresholded: Option<bool>,
    pub include_max: Option<bool>,
    pub threads: Option<usize>,
    pub n_trees: Option<usize>,
    pub max_features: Option<String>,
    pub min_samples_leaf: Option<usize>,
    pub max_depth: Option<usize>,
    pub folds: Option<usize>,
    pub repeats: Option<usize>,
    pub permutations: Option<usize>,
    pub metric: Option<String>,
    pub threshold: Option<f64>,
    pub target_fpr: Option<f64>,
    pub n_patients: Option<usize>,
    pub n_centres: Option<usize>,
    pub incomplete_fraction: Option<f64>,
    pub holdout_centres: Option<Vec<String>>,
}

impl FileConfig {
    pub fn load(common: &Common) -> Result<Self, CliError> {
        let Some(path) = &common.config_file else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn out_dir(&self, common: &Common) -> PathBuf {
        common
            .out_dir
            .clone()
            .or_else(|| self.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn imaging(&self, flags: &ImagingFlags) -> Result<ImagingOptions, CliError> {
        let d = ImagingOptions::default();
        let connectivity = match flags.connectivity.as_ref().or(self.connectivity.as_ref()) {
            Some(s) => s.parse::<Connectivity>().map_err(usage)?,
            None => d.connectivity,
        };
        Ok(ImagingOptions {
            connectivity,
            min_lesion_ml: flags.min_lesion_ml.or(self.min_lesion_ml).unwrap_or(d.min_lesion_ml),
            local_thresholded: flags.local_thresholded || self.local_thresholded.unwrap_or(d.local_thresholded),
            include_max: flags.include_max || self.include_max.unwrap_or(d.include_max),
        })
    }

    pub fn forest(&self, flags: &ForestFlags) -> Result<ForestParams, CliError> {
        let d = ForestParams::default();
        let max_features = match flags.max_features.as_ref().or(self.max_features.as_ref()) {
            Some(s) => s.parse::<MaxFeatures>().map_err(usage)?,
            None => d.max_features,
        };
        Ok(ForestParams {
            n_trees: flags.n_trees.or(self.n_trees).unwrap_or(d.n_trees),
            max_features,
            min_samples_leaf: flags.min_samples_leaf.or(self.min_samples_leaf).unwrap_or(d.min_samples_leaf),
            max_depth: flags.max_depth.or(self.max_depth).or(d.max_depth),
            bootstrap: d.bootstrap,
        })
    }

    pub fn metrics(&self, flags: &MetricFlags) -> MetricParams {
        let d = MetricParams::default();
        MetricParams {
            threshold: flags.threshold.or(self.threshold).unwrap_or(d.threshold),
            target_fpr: flags.target_fpr.or(self.target_fpr).unwrap_or(d.target_fpr),
        }
    }

    /// Commands whose output depends on randomness refuse to pick a seed.
    pub fn required_seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        flag.or(self.seed)
            .ok_or_else(|| CliError::Usage("--seed is required (or `seed` in the config file)".into()))
    }
}

pub fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

/// Wall-clock data kept out of every compared output.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub created_unix_seconds: u64,
    pub tool_version: &'static str,
}

impl Metadata {
    pub fn now() -> Self {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Self { created_unix_seconds: secs, tool_version: env!("CARGO_PKG_VERSION") }
    }
}

/// The effective configuration of a run, echoed as `run_config.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig<T: Serialize> {
    pub command: &'static str,
    pub config_file: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub settings: T,
    pub metadata: Metadata,
}

impl<T: Serialize> RunConfig<T> {
    pub fn new(command: &'static str, common: &Common, out_dir: &Path, settings: T) -> Self {
        Self {
            command,
            config_file: common.config_file.clone(),
            out_dir: out_dir.to_path_buf(),
            settings,
            metadata: Metadata::now(),
        }
    }
}
