//! Hold-out evaluation reports and importance maps.

use serde::{Deserialize, Serialize};

use super::permutation::MetricParams;
use super::roc::{precision_recall, roc_curve, RocCurve};
use crate::cohort::Dataset;
use crate::error::{Error, Result};
use crate::forest::{Forest, ForestParams};
use crate::grid::LesionClass;
use crate::schema::{global_feature_name, local_feature_name, Block, FeatureSchema, GlobalStat, CUBOIDS_PER_AXIS};

/// Importances of the global block laid out as class × statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportanceMap {
    pub classes: Vec<String>,
    pub stats: Vec<String>,
    /// `values[class][stat]`
    pub values: Vec<Vec<f64>>,
}

/// Importances of the local block laid out as
/// class × sagittal × coronal × transverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalImportanceMap {
    pub classes: Vec<String>,
    /// `values[class][i][j][k]`
    pub values: Vec<Vec<Vec<Vec<f64>>>>,
}

impl LocalImportanceMap {
    pub fn class_total(&self, class: LesionClass) -> f64 {
        self.values[class.index()].iter().flatten().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceMaps {
    pub global: Option<GlobalImportanceMap>,
    pub local: Option<LocalImportanceMap>,
    /// Marshall and clinical importances, by name, in schema order.
    pub other: Vec<(String, f64)>,
}

impl ImportanceMaps {
    /// Global map as CSV, one row per class.
    pub fn global_csv(&self) -> Option<String> {
        let g = self.global.as_ref()?;
        let mut s = format!("class,{}\n", g.stats.join(","));
        for (c, row) in g.classes.iter().zip(&g.values) {
            s.push_str(c);
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        Some(s)
    }

    /// Local map as long-format CSV.
    pub fn local_csv(&self) -> Option<String> {
        let l = self.local.as_ref()?;
        let mut s = String::from("class,sagittal,coronal,transverse,importance\n");
        for (c, by_i) in l.classes.iter().zip(&l.values) {
            for (i, by_j) in by_i.iter().enumerate() {
                for (j, by_k) in by_j.iter().enumerate() {
                    for (k, v) in by_k.iter().enumerate() {
                        s.push_str(&format!("{c},{i},{j},{k},{v}\n"));
                    }
                }
            }
        }
        Some(s)
    }
}

/// Reshape per-feature importances (in schema order) into figure layouts.
pub fn importance_maps(importances: &[f64], schema: &FeatureSchema) -> Result<ImportanceMaps> {
    if importances.len() != schema.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} importances for a schema of {} features",
            importances.len(),
            schema.len()
        )));
    }
    let lookup = |name: &str| -> Result<f64> {
        schema
            .index_of(name)
            .map(|i| importances[i])
            .ok_or_else(|| Error::SchemaMismatch(format!("feature `{name}` missing from schema")))
    };
    let classes: Vec<String> = LesionClass::ALL.iter().map(|c| c.name().to_string()).collect();

    let global = if schema.has_block(Block::Global) {
        let stats: Vec<GlobalStat> = GlobalStat::stats(schema.index_of(&global_feature_name(LesionClass::Iph, GlobalStat::Max)).is_some());
        let values = LesionClass::ALL
            .iter()
            .map(|&c| stats.iter().map(|&s| lookup(&global_feature_name(c, s))).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Some(GlobalImportanceMap { classes: classes.clone(), stats: stats.iter().map(|s| s.name().to_string()).collect(), values })
    } else {
        None
    };

    let local = if schema.has_block(Block::Local) {
        let mut values = Vec::with_capacity(4);
        for class in LesionClass::ALL {
            let mut by_i = Vec::with_capacity(CUBOIDS_PER_AXIS);
            for i in 0..CUBOIDS_PER_AXIS {
                let mut by_j = Vec::with_capacity(CUBOIDS_PER_AXIS);
                for j in 0..CUBOIDS_PER_AXIS {
                    by_j.push((0..CUBOIDS_PER_AXIS).map(|k| lookup(&local_feature_name(class, i, j, k))).collect::<Result<Vec<_>>>()?);
                }
                by_i.push(by_j);
            }
            values.push(by_i);
        }
        Some(LocalImportanceMap { classes, values })
    } else {
        None
    };

    let other = schema
        .features()
        .iter()
        .zip(importances)
        .filter(|(f, _)| matches!(f.block, Block::Marshall | Block::Clinical))
        .map(|(f, &v)| (f.name.clone(), v))
        .collect();
    Ok(ImportanceMaps { global, local, other })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub patient_id: String,
    pub centre_id: String,
    pub score: f64,
    pub label: bool,
}

/// Metrics, curve and importance maps for one model on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: String,
    pub n_test: usize,
    pub n_unfavourable: usize,
    pub auroc: f64,
    pub precision: f64,
    pub recall: f64,
    pub tpr_at_fpr: f64,
    pub params: MetricParams,
    pub roc: RocCurve<f64>,
    pub importance: ImportanceMaps,
    pub predictions: Vec<Prediction>,
}

impl EvaluationReport {
    pub fn scores(&self) -> Vec<f64> {
        self.predictions.iter().map(|p| p.score).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.predictions.iter().map(|p| p.label).collect()
    }

    /// ROC points as CSV (`threshold,fpr,tpr`; the first threshold is `inf`).
    pub fn roc_csv(&self) -> String {
        let mut s = String::from("threshold,fpr,tpr\n");
        for ((t, f), p) in self.roc.thresholds.iter().zip(&self.roc.fpr).zip(&self.roc.tpr) {
            s.push_str(&format!("{t},{f},{p}\n"));
        }
        s
    }

    pub fn global_importance_csv(&self) -> Option<String> {
        self.importance.global_csv()
    }

    pub fn local_importance_csv(&self) -> Option<String> {
        self.importance.local_csv()
    }
}

/// Fit a forest on a dataset, keying per-feature randomness by feature name.
pub fn fit_dataset(data: &Dataset, params: &ForestParams, seed: u64) -> Result<Forest<f64>> {
    Forest::fit_with_keys(&data.features, &data.labels, params, seed, &data.schema.keys())
}

/// Score `test` with `forest` and assemble the full report.
pub fn evaluate(forest: &Forest<f64>, test: &Dataset, config: &str, params: &MetricParams) -> Result<EvaluationReport> {
    if test.is_empty() {
        return Err(Error::Empty("test set has no patients"));
    }
    let scores = forest.predict_proba(&test.features)?;
    let roc = roc_curve(&scores, &test.labels)?;
    let (precision, recall) = precision_recall(&scores, &test.labels, params.threshold)?;
    let tpr_at_fpr = roc.tpr_at_fpr(params.target_fpr)?;
    let importance = importance_maps(&forest.gini_importance(), &test.schema)?;
    let predictions = (0..test.len())
        .map(|i| Prediction {
            patient_id: test.patient_ids[i].clone(),
            centre_id: test.centres[i].clone(),
            score: scores[i],
            label: test.labels[i],
        })
        .collect();
    Ok(EvaluationReport {
        config: config.to_string(),
        n_test: test.len(),
        n_unfavourable: test.labels.iter().filter(|&&l| l).count(),
        auroc: roc.auroc,
        precision,
        recall,
        tpr_at_fpr,
        params: *params,
        roc,
        importance,
        predictions,
    })
}
