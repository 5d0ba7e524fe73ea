//! A trained forest bundled with the schema and settings that produced it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::Dataset;
use crate::error::{Error, Result};
use crate::forest::{Forest, ForestParams};
use crate::metrics::fit_dataset;
use crate::schema::{FeatureSchema, ModelConfig};

pub const FORMAT_VERSION: u32 = 1;

/// Hex SHA-256 over the feature names and blocks, in order.
pub fn schema_hash(schema: &FeatureSchema) -> String {
    let mut h = Sha256::new();
    for f in schema.features() {
        h.update(f.name.as_bytes());
        h.update([0]);
        h.update(format!("{:?}", f.block).as_bytes());
        h.update([0]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n_train: usize,
    pub n_unfavourable: usize,
    pub centres: Vec<String>,
    pub training_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub config: ModelConfig,
    pub schema: FeatureSchema,
    pub schema_hash: String,
    pub seed: u64,
    pub params: ForestParams,
    pub training: TrainingSummary,
    pub forest: Forest<f64>,
}

impl TrainedModel {
    /// Project `data` onto `config` and fit.
    pub fn train(data: &Dataset, config: ModelConfig, params: &ForestParams, seed: u64) -> Result<Self> {
        let data = data.for_config(config)?;
        let forest = fit_dataset(&data, params, seed)?;
        let predictions = forest.predict_proba(&data.features)?;
        let correct = predictions.iter().zip(&data.labels).filter(|(p, &l)| (**p > 0.5) == l).count();
        let mut centres: Vec<String> = data.centres.clone();
        centres.sort();
        centres.dedup();
        Ok(Self {
            format_version: FORMAT_VERSION,
            config,
            schema_hash: schema_hash(&data.schema),
            schema: data.schema.clone(),
            seed,
            params: params.clone(),
            training: TrainingSummary {
                n_train: data.len(),
                n_unfavourable: data.n_unfavourable(),
                centres,
                training_accuracy: correct as f64 / data.len() as f64,
            },
            forest,
        })
    }

    /// Project `data` onto this model's schema, checking the hash.
    pub fn prepare(&self, data: &Dataset) -> Result<Dataset> {
        let projected = data.project(&self.schema)?;
        let hash = schema_hash(&projected.schema);
        if hash != self.schema_hash {
            return Err(Error::SchemaMismatch(format!("schema hash {hash} does not match model {}", self.schema_hash)));
        }
        Ok(projected)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(s)?;
        if model.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion(model.format_version));
        }
        if schema_hash(&model.schema) != model.schema_hash {
            return Err(Error::SchemaMismatch("stored schema hash does not match stored schema".into()));
        }
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(Error::at(path))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_schema() {
        let a = schema_hash(&ModelConfig::Local.schema());
        assert_eq!(a.len(), 64);
        assert_eq!(a, schema_hash(&ModelConfig::Local.schema()));
        assert_ne!(a, schema_hash(&ModelConfig::LocalClinical.schema()));
    }
}
