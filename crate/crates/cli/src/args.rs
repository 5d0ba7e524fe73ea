use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "lesion-outcome", version, about = "Lesion biomarkers and outcome models from 3D CT segmentation masks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract per-patient features from masks and a clinical CSV.
    Extract(ExtractArgs),
    /// Fit a random forest on one feature configuration.
    Train(TrainArgs),
    /// Score a feature table with a trained model.
    Evaluate(EvaluateArgs),
    /// Stratified k-fold cross-validation.
    CrossValidate(CrossValidateArgs),
    /// Leave-one-centre-out evaluation across configurations.
    CentreCv(CentreCvArgs),
    /// Paired permutation test between two evaluation reports.
    Compare(CompareArgs),
    /// Export a model's Gini importance maps.
    Importance(ImportanceArgs),
    /// Generate a synthetic cohort with a known outcome model.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML file of defaults; command-line flags take precedence.
    #[arg(long = "config-file")]
    pub config_file: Option<PathBuf>,
    /// Output directory (falls back to the config file, then $LESION_OUTCOME_OUT).
    #[arg(long, short = 'o')]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ImagingFlags {
    /// Voxel adjacency for connected components: 6 or 26.
    #[arg(long)]
    pub connectivity: Option<String>,
    /// Components of this volume (mL) or less are treated as noise.
    #[arg(long)]
    pub min_lesion_ml: Option<f64>,
    /// Sum local volumes over thresholded components instead of raw voxels.
    #[arg(long)]
    pub local_thresholded: bool,
    /// Add a per-class maximum component volume to the global block.
    #[arg(long)]
    pub include_max: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ForestFlags {
    #[arg(long)]
    pub n_trees: Option<usize>,
    /// sqrt, log2, all or a count.
    #[arg(long)]
    pub max_features: Option<String>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct MetricFlags {
    /// Score above which a prediction counts as unfavourable.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// False-positive rate at which sensitivity is reported.
    #[arg(long)]
    pub target_fpr: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    /// Clinical CSV.
    #[arg(long)]
    pub clinical: PathBuf,
    /// Directory mask paths are relative to (default: the CSV's directory).
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[command(flatten)]
    pub imaging: ImagingFlags,
    /// Worker threads for extraction (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Feature table written by `extract`.
    #[arg(long)]
    pub features: PathBuf,
    /// Feature configuration, e.g. `local+clinical`.
    #[arg(long = "model-config")]
    pub model_config: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Centres excluded from training (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub holdout_centres: Vec<String>,
    #[command(flatten)]
    pub forest: ForestFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Evaluate only on these centres (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub holdout_centres: Vec<String>,
    #[command(flatten)]
    pub metrics: MetricFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct CrossValidateArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long = "model-config")]
    pub model_config: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[command(flatten)]
    pub forest: ForestFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct CentreCvArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Configurations to compare (comma separated; default: all eight).
    #[arg(long = "model-configs", value_delimiter = ',')]
    pub model_configs: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub forest: ForestFlags,
    #[command(flatten)]
    pub metrics: MetricFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Report of the first model (`report.json` from `evaluate`).
    #[arg(long)]
    pub report_a: PathBuf,
    #[arg(long)]
    pub report_b: PathBuf,
    /// auroc, precision, recall or tpr_at_fpr.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub metrics: MetricFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of patients.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub centres: Option<usize>,
    /// JSON effect specification (default: frontal EAH volume and age).
    #[arg(long)]
    pub effect_spec: Option<PathBuf>,
    /// Fraction of records given a defect the cohort filter removes.
    #[arg(long)]
    pub incomplete_fraction: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}
