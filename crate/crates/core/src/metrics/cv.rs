//! Stratified k-fold and leave-one-centre-out cross-validation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::permutation::MetricParams;
use super::report::{evaluate, fit_dataset, EvaluationReport};
use super::roc::auroc;
use crate::cohort::Dataset;
use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::rng;
use crate::schema::ModelConfig;

/// Fold index per row. Each class is shuffled separately, then the negatives
/// followed by the positives are dealt round-robin, so fold sizes and per-fold
/// class counts each differ by at most one.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64, repeat: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {k}")));
    }
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    if neg.len() < k || pos.len() < k {
        return Err(Error::TooSmallToStratify(format!(
            "{} favourable and {} unfavourable patients for {k} folds",
            neg.len(),
            pos.len()
        )));
    }
    let mut g = rng::stream(seed, &[0xF01D, repeat]);
    neg.shuffle(&mut g);
    pos.shuffle(&mut g);
    let mut folds = vec![0; labels.len()];
    for (slot, i) in neg.into_iter().chain(pos).enumerate() {
        folds[i] = slot % k;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvParams {
    pub folds: usize,
    pub repeats: usize,
}

impl Default for CvParams {
    fn default() -> Self {
        Self { folds: 5, repeats: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Always `"stratified-k-fold"`.
    pub mechanism: String,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    /// AUROC per (repeat, fold), repeat-major.
    pub fold_aurocs: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation (divides by the number of folds).
    pub std: f64,
    pub std_convention: String,
}

pub fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Stratified k-fold AUROC with a forest refit per fold. The forest of
/// (repeat `r`, fold `f`) is seeded from `(seed, r, f)`.
pub fn cross_validate(data: &Dataset, forest: &ForestParams, cv: &CvParams, seed: u64) -> Result<CvResult> {
    if cv.repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be at least 1".into()));
    }
    let mut jobs = Vec::new();
    for r in 0..cv.repeats {
        let folds = stratified_folds(&data.labels, cv.folds, seed, r as u64)?;
        for f in 0..cv.folds {
            let train: Vec<usize> = (0..data.len()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..data.len()).filter(|&i| folds[i] == f).collect();
            jobs.push((r, f, train, test));
        }
    }
    let fold_aurocs = jobs
        .par_iter()
        .map(|(r, f, train, test)| {
            let model = fit_dataset(&data.subset(train), forest, rng::mix(seed, &[0xC5, *r as u64, *f as u64]))?;
            let test = data.subset(test);
            auroc(&model.predict_proba(&test.features)?, &test.labels)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std) = mean_and_population_std(&fold_aurocs);
    Ok(CvResult {
        mechanism: "stratified-k-fold".into(),
        folds: cv.folds,
        repeats: cv.repeats,
        seed,
        fold_aurocs,
        mean,
        std,
        std_convention: "population".into(),
    })
}

/// Held-out centre outcome; `report` is `None` ("na") when the centre's
/// labels, or the remaining training labels, are single-class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentreResult {
    pub centre_id: String,
    pub n_test: usize,
    pub n_unfavourable: usize,
    pub report: Option<EvaluationReport>,
}

/// Centres ordered by patient count (descending), then id.
pub fn centres_by_size(data: &Dataset) -> Vec<(String, Vec<usize>)> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in data.centres.iter().enumerate() {
        groups.entry(c.as_str()).or_default().push(i);
    }
    let mut v: Vec<(String, Vec<usize>)> = groups.into_iter().map(|(c, idx)| (c.to_string(), idx)).collect();
    v.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Train on every centre but one, test on the held-out centre.
pub fn leave_one_centre_out(
    data: &Dataset,
    config: &str,
    forest: &ForestParams,
    metrics: &MetricParams,
    seed: u64,
) -> Result<Vec<CentreResult>> {
    let centres = centres_by_size(data);
    if centres.len() < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 centres, found {}", centres.len())));
    }
    centres
        .par_iter()
        .map(|(centre, test_idx)| {
            let test = data.subset(test_idx);
            let train_idx: Vec<usize> = (0..data.len()).filter(|i| !test_idx.contains(i)).collect();
            let train = data.subset(&train_idx);
            let n_unfavourable = test.labels.iter().filter(|&&l| l).count();
            let single = |l: &[bool]| l.iter().all(|&v| v) || l.iter().all(|&v| !v);
            let report = if single(&test.labels) || single(&train.labels) {
                None
            } else {
                let model = fit_dataset(&train, forest, rng::mix(seed, &[0x10C0, crate::schema::feature_key(centre)]))?;
                Some(evaluate(&model, &test, config, metrics)?)
            };
            Ok(CentreResult { centre_id: centre.clone(), n_test: test.len(), n_unfavourable, report })
        })
        .collect()
}

/// One row per centre with the held-out AUROC of every configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentreTable {
    pub configs: Vec<String>,
    pub rows: Vec<CentreRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentreRow {
    pub centre_id: String,
    pub n_test: usize,
    pub pct_of_total: f64,
    pub n_unfavourable: usize,
    pub pct_unfavourable: f64,
    /// `None` renders as `na`.
    pub auroc: Vec<Option<f64>>,
}

/// Leave-one-centre-out across several configurations of the same patients.
pub fn centre_table(
    datasets: &[(ModelConfig, Dataset)],
    forest: &ForestParams,
    metrics: &MetricParams,
    seed: u64,
) -> Result<CentreTable> {
    let Some((_, first)) = datasets.first() else {
        return Err(Error::Empty("no configurations"));
    };
    let per_config = datasets
        .iter()
        .map(|(cfg, d)| {
            if d.patient_ids != first.patient_ids {
                return Err(Error::SchemaMismatch(format!("configuration {cfg} covers different patients")));
            }
            Ok((*cfg, leave_one_centre_out(d, cfg.name(), forest, metrics, seed)?))
        })
        .collect::<Result<Vec<_>>>()?;
    CentreTable::from_results(&per_config, first.len())
}

impl CentreTable {
    /// Assemble the table from per-configuration leave-one-centre-out runs
    /// over the same `n_total` patients.
    pub fn from_results(per_config: &[(ModelConfig, Vec<CentreResult>)], n_total: usize) -> Result<Self> {
        let Some((_, first)) = per_config.first() else {
            return Err(Error::Empty("no configurations"));
        };
        let total = n_total as f64;
        let rows = first
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let auroc = per_config
                    .iter()
                    .map(|(cfg, p)| match p.get(i) {
                        Some(r) if r.centre_id == c.centre_id => Ok(r.report.as_ref().map(|r| r.auroc)),
                        _ => Err(Error::SchemaMismatch(format!("configuration {cfg} has different centres"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(CentreRow {
                    centre_id: c.centre_id.clone(),
                    n_test: c.n_test,
                    pct_of_total: 100.0 * c.n_test as f64 / total,
                    n_unfavourable: c.n_unfavourable,
                    pct_unfavourable: 100.0 * c.n_unfavourable as f64 / c.n_test as f64,
                    auroc,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { configs: per_config.iter().map(|(c, _)| c.name().to_string()).collect(), rows })
    }

    /// CSV with AUROCs as percentages to one decimal, `na` where undefined.
    pub fn to_csv(&self) -> String {
        let mut s = format!("centre,n_test,pct_of_total,n_unfavourable,pct_unfavourable,{}\n", self.configs.join(","));
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.1},{},{:.1}",
                r.centre_id, r.n_test, r.pct_of_total, r.n_unfavourable, r.pct_unfavourable
            ));
            for a in &r.auroc {
                match a {
                    Some(v) => s.push_str(&format!(",{:.1}", 100.0 * v)),
                    None => s.push_str(",na"),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Standard deviation of AUROC over stratified bootstrap resamples holding
/// `n_pos` positives and `n_neg` negatives drawn from `(scores, labels)`.
pub fn auroc_bootstrap_std(scores: &[f64], labels: &[bool], n_pos: usize, n_neg: usize, n_boot: usize, seed: u64) -> Result<f64> {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() || n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let values = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut g = rng::stream(seed, &[0xB5, b as u64]);
            let mut s = Vec::with_capacity(n_pos + n_neg);
            let mut l = Vec::with_capacity(n_pos + n_neg);
            for _ in 0..n_pos {
                s.push(pos[g.random_range(0..pos.len())]);
                l.push(true);
            }
            for _ in 0..n_neg {
                s.push(neg[g.random_range(0..neg.len())]);
                l.push(false);
            }
            auroc(&s, &l)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_population_std(&values).1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_balanced() {
        let labels: Vec<bool> = (0..103).map(|i| i % 3 == 0).collect();
        let folds = stratified_folds(&labels, 5, 7, 0).unwrap();
        let mut sizes = [0usize; 5];
        let mut pos = [0usize; 5];
        for (i, &f) in folds.iter().enumerate() {
            sizes[f] += 1;
            pos[f] += usize::from(labels[i]);
        }
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert!(pos.iter().max().unwrap() - pos.iter().min().unwrap() <= 1);
        assert_eq!(folds, stratified_folds(&labels, 5, 7, 0).unwrap());
        assert_ne!(folds, stratified_folds(&labels, 5, 7, 1).unwrap());
    }

    #[test]
    fn too_small_to_stratify() {
        let labels = [true, true, false, false, false, false];
        assert!(matches!(stratified_folds(&labels, 3, 0, 0), Err(Error::TooSmallToStratify(_))));
        assert!(stratified_folds(&labels, 1, 0, 0).is_err());
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_and_population_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn table_csv_marks_na() {
        let t = CentreTable {
            configs: vec!["marshall".into(), "local".into()],
            rows: vec![CentreRow {
                centre_id: "C1".into(),
                n_test: 4,
                pct_of_total: 0.6,
                n_unfavourable: 4,
                pct_unfavourable: 100.0,
                auroc: vec![None, Some(0.5)],
            }],
        };
        assert_eq!(t.to_csv().lines().nth(1).unwrap(), "C1,4,0.6,4,100.0,na,50.0");
    }
}
