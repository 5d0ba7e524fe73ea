use std::collections::HashMap;
use std::path::{Path, PathBuf};

use lesion_outcome::biomarkers::{extract_imaging_features, FeatureVector, ImagingBlocks, ImagingOptions};
use lesion_outcome::cohort::{
    assemble_with_schema, exclusion_counts, filter_cohort, load_clinical_csv, synthesize_cohort, write_clinical_csv,
    write_exclusion_log, Dataset, EffectSpec, Exclusion, SynthOptions, MASK_UNREADABLE,
};
use lesion_outcome::forest::ForestParams;
use lesion_outcome::metrics::{
    centre_table, cross_validate, evaluate, importance_maps, permutation_test, CvParams, EvaluationReport, Metric,
    MetricParams,
};
use lesion_outcome::model::TrainedModel;
use lesion_outcome::nifti::{encode_mask, gzip};
use lesion_outcome::{read_mask, FeatureSchema, ModelConfig};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::*;
use crate::error::CliError;
use crate::output::Outputs;
use crate::settings::{usage, FileConfig, RunConfig};

pub const DEFAULT_MODEL_CONFIG: ModelConfig = ModelConfig::LocalClinical;
pub const DEFAULT_PERMUTATIONS: usize = 10_000;
pub const DEFAULT_SYNTH_PATIENTS: usize = 600;
pub const DEFAULT_SYNTH_CENTRES: usize = 5;
pub const DEFAULT_CV_SEED: u64 = 0;

fn finish<T: Serialize>(mut outputs: Outputs, run: RunConfig<T>) -> Result<(), CliError> {
    outputs.add_json("run_config.json", &run)?;
    let dir = run.out_dir.clone();
    let n = outputs.len();
    outputs.commit(&dir)?;
    println!("wrote {n} files to {}", dir.display());
    Ok(())
}

fn read_features(path: &Path) -> Result<Dataset, CliError> {
    let file = std::fs::File::open(path).map_err(CliError::io(path))?;
    Ok(Dataset::read_csv(std::io::BufReader::new(file))?)
}

fn model_config(flag: Option<&String>, file: &FileConfig) -> Result<ModelConfig, CliError> {
    match flag.or(file.model_config.as_ref()) {
        Some(s) => s.parse().map_err(usage),
        None => Ok(DEFAULT_MODEL_CONFIG),
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> lesion_outcome::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

#[derive(Serialize)]
struct ExtractSettings {
    clinical: PathBuf,
    masks: PathBuf,
    imaging: ImagingOptions,
    threads: Option<usize>,
}

pub fn extract(a: &ExtractArgs) -> Result<(), CliError> {
    let file = FileConfig::load(&a.common)?;
    let out_dir = file.out_dir(&a.common);
    let opts = file.imaging(&a.imaging)?;
    let threads = a.threads.or(file.threads);
    let mask_root = a
        .masks
        .clone()
        .unwrap_or_else(|| a.clinical.parent().map(Path::to_path_buf).unwrap_or_default());

    let records = load_clinical_csv(&a.clinical)?;
    let n_input = records.len();
    let (mut kept, mut log) = filter_cohort(records);
    kept.sort_by(|x, y| x.patient_id.cmp(&y.patient_id));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let extracted: Vec<lesion_outcome::Result<FeatureVector>> = pool.install(|| {
        kept.par_iter()
            .map(|r| {
                let path = mask_root.join(r.mask_path.as_ref().expect("filtered records have a mask"));
                read_mask(&path).and_then(|g| extract_imaging_features(&g, ImagingBlocks::Both, &opts))
            })
            .collect()
    });

    let mut usable = Vec::with_capacity(kept.len());
    let mut imaging = HashMap::new();
    for (r, res) in kept.into_iter().zip(extracted) {
        match res {
            Ok(v) => {
                imaging.insert(r.patient_id.clone(), v);
                usable.push(r);
            }
            Err(e) => {
                warn!("{}: {e}", r.patient_id);
                log.push(Exclusion { patient_id: r.patient_id, reason: MASK_UNREADABLE.into() });
            }
        }
    }
    let cohort = assemble_with_schema(&usable, &imaging, &FeatureSchema::full(opts.include_max))?;
    info!("{} of {n_input} patients kept", cohort.dataset.len());

    #[derive(Serialize)]
    struct Summary {
        n_input: usize,
        n_kept: usize,
        excluded: Vec<(String, usize)>,
    }
    let mut outputs = Outputs::new();
    outputs.add("features.csv", csv_bytes(|b| cohort.dataset.write_csv(b))?);
    outputs.add("exclusions.csv", csv_bytes(|b| write_exclusion_log(&log, b))?);
    outputs.add_json(
        "cohort_summary.json",
        &Summary { n_input, n_kept: cohort.dataset.len(), excluded: exclusion_counts(&log) },
    )?;
    let settings = ExtractSettings { clinical: a.clinical.clone(), masks: mask_root, imaging: opts, threads };
    finish(outputs, RunConfig::new("extract", &a.common, &out_dir, settings))
}

#[derive(Serialize)]
struct TrainSettings {
    features: PathBuf,
    model_config: ModelConfig,
    seed: u64,
    forest: ForestParams,
    holdout_centres: Vec<String>,
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let file = FileConfig::load(&a.common)?;
    let seed = file.required_seed(a.seed)?;
    let out_dir = file.out_dir(&a.common);
    let config = model_config(a.model_config.as_ref(), &file)?;
    let params = file.forest(&a.forest)?;
    let holdout =
        if a.holdout_centres.is_empty() { file.holdout_centres.clone().unwrap_or_default() } else { a.holdout_centres.clone() };

    let data = read_features(&a.features)?;
    let train = data.filter_centres(|c| !holdout.iter().any(|h| h == c));
    if train.is_empty() {
        return Err(CliError::Validation("no training patients left after removing hold-out centres".into()));
    }
    let model = TrainedModel::train(&train, config, &params, seed)?;
    info!("trained {} on {} patients", config, model.training.n_train);

    let mut outputs = Outputs::new();
    outputs.add_text("model.json", model.to_json()?);
    #[derive(Serialize)]
    struct Training<'a> {
        model_config: ModelConfig,
        schema_hash: &'a str,
        n_features: usize,
        seed: u64,
        params: &'a ForestParams,
        summary: &'a lesion_outcome::model::TrainingSummary,
        holdout_centres: &'a [String],
    }
    outputs.add_json(
        "training.json",
        &Training {
            model_config: config,
            schema_hash: &model.schema_hash,
            n_features: model.schema.len(),
            seed,
            params: &params,
            summary: &model.training,
            holdout_centres: &holdout,
        },
    )?;
    let settings = TrainSettings { features: a.features.clone(), model_config: config, seed, forest: params, holdout_centres: holdout };
    finish(outputs, RunConfig::new("train", &a.common, &out_dir, settings))
}

fn predictions_csv(report: &EvaluationReport) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["patient_id", "centre_id", "unfavourable", "score"])?;
    for p in &report.predictions {
        w.write_record([p.patient_id.clone(), p.centre_id.clone(), u8::from(p.label).to_string(), p.score.to_string()])?;
    }
    w.into_inner().map_err(|e| CliError::Validation(e.to_string()))
}

#[derive(Serialize)]
struct EvaluateSettings {
    model: PathBuf,
    features: PathBuf,
    holdout_centres: Vec<String>,
    metrics: MetricParams,
}

pub fn evaluate_cmd(a: &EvaluateArgs) -> Result<(), CliError> {
    let file = FileConfig::load(&a.common)?;
    let out_dir = file.out_dir(&a.common);
    let params = file.metrics(&a.metrics);
    let centres =
        if a.holdout_centres.is_empty() { file.holdout_centres.clone().unwrap_or_default() } else { a.holdout_centres.clone() };

    let model = TrainedModel::load(&a.model)?;
    let mut data = read_features(&a.features)?;
    if !centres.is_empty() {
        data = data.filter_centres(|c| centres.iter().any(|h| h == c));
    }
    let test = model.prepare(&data)?;
    let report = evaluate(&model.forest, &test, model.config.name(), &params)?;
    info!("{}: AUROC {:.4} on {} patients", model.config, report.auroc, report.n_test);

    let mut outputs = Outputs::new();
    outputs.add_json("report.json", &report)?;
    outputs.add_text("roc.csv", report.roc_csv());
    outputs.add("predictions.csv", predictions_csv(&report)?);
    if let Some(csv) = report.global_importance_csv() {
        outputs.add_text("importance_global.csv", csv);
    }
    if let Some(csv) = report.local_importance_csv() {
        outputs.add_text("importance_local.csv", csv);
    }
    let settings = EvaluateSettings { model: a.model.clone(), features: a.features.clone(), holdout_centres: centres, metrics: params };
    finish(outputs, RunConfig::new("evaluate", &a.common, &out_dir, settings))
}

#[derive(Serialize)]
struct CvSettings {
    features: PathBuf,
    model_config: ModelConfig,
    seed: u64,
    cv: CvParams,
    forest: ForestParams,
}

pub fn cross_validate_cmd(a: &CrossValidateArgs) -> Result<(), CliError> {
    let file = FileConfig::load(&a.common)?;
    let out_dir = file.out_dir(&a.common);
    let config = model_config(a.model_config.as_ref(), &file)?;
    let seed = a.seed.or(file.seed).unwrap_or(DEFAULT_CV_SEED);
    let forest = file.forest(&a.forest)?;
    let d = CvParams::default();
    let cv = CvParams {
        folds: a.folds.or(file.folds).unwrap_or(d.folds),
        repeats: a.repeats.or(file.repeats).unwrap_or(d.repeats),
    };
    let data = read_features(&a.features)?.for_config(config)?;
    let result = cross_validate(&data, &forest, &cv, seed)?;
    info!("{}: AUROC {:.4} ± {:.4}", config, result.mean, result.std);

    let mut outputs = Outputs::new();
    outputs.add_json("cv.json", &result)?;
    let settings = CvSettings { features: a.features.clone(), model_config: config, seed, cv, forest };
    finish(outputs, RunConfig::new("cross-validate", &a.common, &out_dir, settings))
}

#[derive(Serialize)]
struct CentreCvSettings {
    features: PathBuf,
    model_configs: Vec<ModelConfig>,
    seed: u64,
    forest: ForestParams,
    metrics: MetricParams,
}

pub fn centre_cv(a: &CentreCvArgs) -> Result<(), CliError> {
    let file = FileConfig::load(&a.common)?;
    let out_dir = file.out_dir(&a.common);
    let seed = a.seed.or(file.seed).unwrap_or(DEFAULT_CV_SEED);
    let forest = file.forest(&a.forest)?;
    let metrics = file.metrics(&a.metrics);
    let names = if a.model_configs.is_empty() { file.model_configs.clone().unwrap_or_default() } else { a.model_configs.clone() };
    let configs: Vec<ModelConfig> = if names.is_empty() {
        ModelConfig::ALL.to_vec()
    } else {
        names.iter().map(|s| s.parse().map_err(usage)).collect::<Result<_, _>>()?
    };
    let data = read_features(&a.features)?;
    let datasets = configs.iter().map(|&c| Ok((c, data.for_config(c)?))).collect::<Result<Vec<_>, CliError>>()?;
    let table = centre_table(&datasets, &forest, &metrics, seed)?;

    let mut outputs = Outputs::new();
    outputs.add_text("centre_table.csv", table.to_csv());
    outputs.add_json("centre_table.json", &table)?;
    let settings = CentreCvSettings { features: a.features.clone(), model_configs: configs, seed, forest, metrics };
    finish(outputs, RunConfig::new("centre-cv", &a.common, &out_dir, settings))
}

fn load_report(path: &Path) -> Result<EvaluationReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Serialize)]
struct CompareSettings {
    report_a: PathBuf,
    report_b: PathBuf,
    metric: Metric,
    permutations: usize,
    seed: u64,
    metrics: MetricParams,
}

pub fn compare(a: &CompareArgs) -> Result<(), CliError> {
    let file = FileConfig::load(&a.common)?;
    let seed = file.required_seed(a.seed)?;
    let out_dir = file.out_dir(&a.common);
    let metric: Metric = match a.metric.as_ref().or(file.metric.as_ref()) {
        Some(s) => s.parse().map_err(usage)?,
        None => Metric::Auroc,
    };
    let permutations = a.permutations.or(file.permutations).unwrap_or(DEFAULT_PERMUTATIONS);
    let ra = load_report(&a.report_a)?;
    let rb = load_report(&a.report_b)?;
    let defaults = FileConfig { threshold: file.threshold.or(Some(ra.params.threshold)), target_fpr: file.target_fpr.or(Some(ra.params.target_fpr)), ..file.clone() };
    let params = defaults.metrics(&a.metrics);

    let by_id: HashMap<&str, (f64, bool)> = rb.predictions.iter().map(|p| (p.patient_id.as_str(), (p.score, p.label))).collect();
    if by_id.len() != ra.predictions.len() || rb.predictions.len() != ra.predictions.len() {
        return Err(CliError::Validation("reports cover different patients".into()));
    }
    let (mut sa, mut sb, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for p in &ra.predictions {
        let &(score_b, label_b) = by_id
            .get(p.patient_id.as_str())
            .ok_or_else(|| CliError::Validation(format!("patient {} missing from {}", p.patient_id, a.report_b.display())))?;
        if label_b != p.label {
            return Err(CliError::Validation(format!("patient {} has different labels in the two reports", p.patient_id)));
        }
        sa.push(p.score);
        sb.push(score_b);
        labels.push(p.label);
    }
    let result = permutation_test(&sa, &sb, &labels, metric, &params, permutations, seed)?;
    info!("{} vs {}: {} diff {:.4}, p = {:.4}", ra.config, rb.config, metric.name(), result.observed_diff, result.p_value);

    #[derive(Serialize)]
    struct Comparison<'a> {
        model_a: &'a str,
        model_b: &'a str,
        n_patients: usize,
        #[serde(flatten)]
        result: &'a lesion_outcome::metrics::PermutationTestResult,
    }
    let mut outputs = Outputs::new();
    outputs.add_json(
        "comparison.json",
        &Comparison { model_a: &ra.config, model_b: &rb.config, n_patients: labels.len(), result: &result },
    )?;
    let settings = CompareSettings {
        report_a: a.report_a.clone(),
        report_b: a.report_b.clone(),
        metric,
        permutations,
        seed,
        metrics: params,
    };
    finish(outputs, RunConfig::new("compare", &a.common, &out_dir, settings))
}

pub fn importance(a: &ImportanceArgs) -> Result<(), CliError> {
    let file = FileConfig::load(&a.common)?;
    let out_dir = file.out_dir(&a.common);
    let model = TrainedModel::load(&a.model)?;
    let maps = importance_maps(&model.forest.gini_importance(), &model.schema)?;
    let mut outputs = Outputs::new();
    outputs.add_json("importance.json", &maps)?;
    if let Some(csv) = maps.global_csv() {
        outputs.add_text("importance_global.csv", csv);
    }
    if let Some(csv) = maps.local_csv() {
        outputs.add_text("importance_local.csv", csv);
    }
    #[derive(Serialize)]
    struct Settings {
        model: PathBuf,
        model_config: ModelConfig,
    }
    finish(outputs, RunConfig::new("importance", &a.common, &out_dir, Settings { model: a.model.clone(), model_config: model.config }))
}

#[derive(Serialize)]
struct SynthSettings {
    seed: u64,
    n_patients: usize,
    n_centres: usize,
    effect_spec: Option<PathBuf>,
    options: SynthOptions,
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let file = FileConfig::load(&a.common)?;
    let seed = file.required_seed(a.seed)?;
    let out_dir = file.out_dir(&a.common);
    let n = a.n.or(file.n_patients).unwrap_or(DEFAULT_SYNTH_PATIENTS);
    let centres = a.centres.or(file.n_centres).unwrap_or(DEFAULT_SYNTH_CENTRES);
    let spec = match &a.effect_spec {
        Some(p) => EffectSpec::from_json(&std::fs::read_to_string(p).map_err(CliError::io(p))?)?,
        None => EffectSpec::frontal_eah_and_age(),
    };
    let mut options = SynthOptions::default();
    if let Some(f) = a.incomplete_fraction.or(file.incomplete_fraction) {
        options.incomplete_fraction = f;
    }
    let cohort = synthesize_cohort(seed, n, centres, &spec, &options)?;

    let masks: Vec<(PathBuf, Vec<u8>)> = cohort
        .records
        .par_iter()
        .zip(&cohort.masks)
        .filter_map(|(r, m)| r.mask_path.as_ref().map(|p| (p, m)))
        .map(|(p, m)| Ok((p.clone(), gzip(&encode_mask(m)?)?)))
        .collect::<lesion_outcome::Result<_>>()?;
    let mut outputs = Outputs::new();
    for (path, bytes) in masks {
        outputs.add(path, bytes);
    }
    outputs.add("clinical.csv", csv_bytes(|b| write_clinical_csv(&cohort.records, b))?);
    outputs.add_json("ground_truth.json", &cohort.truth)?;
    let settings = SynthSettings { seed, n_patients: n, n_centres: centres, effect_spec: a.effect_spec.clone(), options };
    finish(outputs, RunConfig::new("synth", &a.common, &out_dir, settings))
}
