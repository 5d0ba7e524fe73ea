//! Patient records, cohort filtering, feature assembly and synthetic cohorts.

mod clinical;
mod synth;

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use clinical::{
    exclusion_counts, exclusion_reason, filter_cohort, label_unfavourable, load_clinical_csv, read_clinical_csv,
    write_clinical_csv, write_exclusion_log, Exclusion, FieldIssue, IssueKind, PatientRecord, PupilReactivity,
    CLINICAL_COLUMNS, EXCLUSION_STAGES, MASK_UNREADABLE, UNFAVOURABLE_MAX_GOSE,
};
pub use synth::{
    synthesize_cohort, Effect, EffectSpec, GroundTruth, LatentFeature, SynthOptions, SyntheticCohort, TruthRow,
};

use crate::biomarkers::FeatureVector;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::schema::{Block, FeatureSchema, ModelConfig, MARSHALL_FEATURE};

/// Feature matrix with labels and centre assignments, one row per patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub patient_ids: Vec<String>,
    pub centres: Vec<String>,
    pub features: Matrix<f64>,
    /// `true` for an unfavourable outcome.
    pub labels: Vec<bool>,
    pub schema: FeatureSchema,
}

const ID_COLUMNS: [&str; 3] = ["patient_id", "centre_id", "unfavourable"];

impl Dataset {
    pub fn new(
        patient_ids: Vec<String>,
        centres: Vec<String>,
        features: Matrix<f64>,
        labels: Vec<bool>,
        schema: FeatureSchema,
    ) -> Result<Self> {
        let n = patient_ids.len();
        for len in [centres.len(), features.nrows(), labels.len()] {
            if len != n {
                return Err(Error::ShapeMismatch { expected: n, found: len });
            }
        }
        if features.ncols() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} columns for a schema of {} features",
                features.ncols(),
                schema.len()
            )));
        }
        if let Some(i) = features.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i / schema.len().max(1), col: i % schema.len().max(1) });
        }
        Ok(Self { patient_ids, centres, features, labels, schema })
    }

    pub fn len(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patient_ids.is_empty()
    }

    pub fn n_unfavourable(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            patient_ids: rows.iter().map(|&i| self.patient_ids[i].clone()).collect(),
            centres: rows.iter().map(|&i| self.centres[i].clone()).collect(),
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            schema: self.schema.clone(),
        }
    }

    /// Rows whose centre satisfies `keep`.
    pub fn filter_centres(&self, keep: impl Fn(&str) -> bool) -> Dataset {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.centres[i])).collect();
        self.subset(&rows)
    }

    /// Re-project onto another schema by feature name.
    pub fn project(&self, schema: &FeatureSchema) -> Result<Dataset> {
        let cols = schema.project_from(self.schema.names())?;
        Ok(Dataset {
            patient_ids: self.patient_ids.clone(),
            centres: self.centres.clone(),
            features: self.features.select_columns(&cols),
            labels: self.labels.clone(),
            schema: schema.clone(),
        })
    }

    pub fn for_config(&self, config: ModelConfig) -> Result<Dataset> {
        let include_max = self.schema.names().any(|n| n.ends_with("/global/max"));
        self.project(&config.schema_with(include_max))
    }

    /// CSV with `patient_id,centre_id,unfavourable` followed by the schema's
    /// features. Values use the shortest representation that round-trips.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = ID_COLUMNS.to_vec();
        header.extend(self.schema.names());
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            row.clear();
            row.push(self.patient_ids[i].clone());
            row.push(self.centres[i].clone());
            row.push(u8::from(self.labels[i]).to_string());
            row.extend(self.features.row(i).iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        for (i, name) in ID_COLUMNS.iter().enumerate() {
            if headers.get(i) != Some(name) {
                return Err(Error::MissingColumn(name.to_string()));
            }
        }
        let schema = FeatureSchema::from_names(headers.iter().skip(ID_COLUMNS.len()))?;
        let (mut ids, mut centres, mut labels, mut data) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            ids.push(rec[0].to_string());
            centres.push(rec[1].to_string());
            labels.push(match &rec[2] {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::MissingField {
                        patient: rec[0].to_string(),
                        field: format!("unfavourable (got `{other}`)"),
                    })
                }
            });
            for (c, v) in rec.iter().skip(ID_COLUMNS.len()).enumerate() {
                let x: f64 = v.parse().map_err(|_| Error::NonFinite { row: r, col: c })?;
                data.push(x);
            }
        }
        let features = Matrix::from_vec(ids.len(), schema.len(), data)?;
        Dataset::new(ids, centres, features, labels, schema)
    }
}

/// Records that entered modelling together with their assembled features.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub records: Vec<PatientRecord>,
    pub dataset: Dataset,
}

/// Build the feature matrix for `schema` from kept records and per-patient
/// imaging features (keyed by patient id). Rows follow `records`.
pub fn assemble_with_schema(
    records: &[PatientRecord],
    imaging: &HashMap<String, FeatureVector>,
    schema: &FeatureSchema,
) -> Result<Cohort> {
    let needs_imaging = schema.has_block(Block::Global) || schema.has_block(Block::Local);
    let mut data = Vec::with_capacity(records.len() * schema.len());
    let mut labels = Vec::with_capacity(records.len());
    let mut centres = Vec::with_capacity(records.len());
    let missing = |r: &PatientRecord, field: &str| Error::MissingField { patient: r.patient_id.clone(), field: field.into() };
    for r in records {
        labels.push(r.unfavourable().ok_or_else(|| missing(r, "gose"))?);
        centres.push(r.centre_id.clone().ok_or_else(|| missing(r, "centre_id"))?);
        let img = if needs_imaging {
            let v = imaging.get(&r.patient_id).ok_or_else(|| Error::MissingMask(r.patient_id.clone()))?;
            Some((v, schema_lookup(v)))
        } else {
            None
        };
        for f in schema.features() {
            let value = match f.block {
                Block::Marshall => f64::from(r.marshall.ok_or_else(|| missing(r, MARSHALL_FEATURE))?),
                Block::Clinical => {
                    let vals = r.clinical_values().ok_or_else(|| missing(r, "clinical biomarkers"))?;
                    let idx = crate::schema::CLINICAL_FEATURES.iter().position(|n| *n == f.name).expect("clinical name");
                    vals[idx]
                }
                Block::Global | Block::Local => {
                    let (v, lookup) = img.as_ref().expect("imaging present");
                    let i = lookup.get(f.name.as_str()).ok_or_else(|| {
                        Error::SchemaMismatch(format!("imaging features of {} lack `{}`", r.patient_id, f.name))
                    })?;
                    v.values[*i]
                }
            };
            data.push(value);
        }
    }
    let features = Matrix::from_vec(records.len(), schema.len(), data)?;
    let dataset =
        Dataset::new(records.iter().map(|r| r.patient_id.clone()).collect(), centres, features, labels, schema.clone())?;
    Ok(Cohort { records: records.to_vec(), dataset })
}

fn schema_lookup(v: &FeatureVector) -> HashMap<&str, usize> {
    v.names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect()
}

pub fn assemble_features(
    records: &[PatientRecord],
    imaging: &HashMap<String, FeatureVector>,
    config: ModelConfig,
) -> Result<Cohort> {
    assemble_with_schema(records, imaging, &config.schema())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biomarkers::{extract_imaging_features, ImagingBlocks, ImagingOptions};
    use crate::grid::VoxelGrid;

    fn record(id: &str, gose: u8) -> PatientRecord {
        PatientRecord {
            patient_id: id.into(),
            centre_id: Some("C1".into()),
            age: Some(56.6),
            gcs_motor: Some(5),
            pupils: Some(PupilReactivity::One),
            hypoxia: Some(false),
            hypotension: Some(true),
            marshall: Some(3),
            gose: Some(gose),
            mask_path: Some("m.nii".into()),
            pre_scan_surgery: Some(false),
            timestamps_complete: Some(true),
            issues: vec![],
        }
    }

    fn imaging(ids: &[&str]) -> HashMap<String, FeatureVector> {
        let mut g = VoxelGrid::empty([8, 8, 8], [1.0; 3]).unwrap();
        g.set(1, 1, 1, 2).unwrap();
        let v = extract_imaging_features(&g, ImagingBlocks::Both, &ImagingOptions::default()).unwrap();
        ids.iter().map(|id| (id.to_string(), v.clone())).collect()
    }

    #[test]
    fn column_counts_per_config() {
        let records = vec![record("A", 4), record("B", 7)];
        let img = imaging(&["A", "B"]);
        let expected = [1, 20, 256, 276, 6, 25, 261, 281];
        for (cfg, n) in ModelConfig::ALL.into_iter().zip(expected) {
            let c = assemble_features(&records, &img, cfg).unwrap();
            assert_eq!(c.dataset.features.ncols(), n, "{cfg}");
            assert_eq!(c.dataset.labels, vec![true, false]);
        }
    }

    #[test]
    fn clinical_encoding() {
        let c = assemble_features(&[record("A", 4)], &HashMap::new(), ModelConfig::MarshallClinical).unwrap();
        assert_eq!(c.dataset.features.row(0), &[3.0, 56.6, 5.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn imaging_config_needs_mask() {
        let err = assemble_features(&[record("A", 4)], &HashMap::new(), ModelConfig::Local).unwrap_err();
        assert!(matches!(err, Error::MissingMask(p) if p == "A"));
    }

    #[test]
    fn csv_round_trip_and_projection() {
        let records = vec![record("A", 4), record("B", 7)];
        let full = assemble_with_schema(&records, &imaging(&["A", "B"]), &FeatureSchema::full(false)).unwrap();
        let mut buf = Vec::new();
        full.dataset.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, full.dataset);
        let local = back.for_config(ModelConfig::LocalClinical).unwrap();
        let direct = assemble_features(&records, &imaging(&["A", "B"]), ModelConfig::LocalClinical).unwrap();
        assert_eq!(local, direct.dataset);
    }
}
