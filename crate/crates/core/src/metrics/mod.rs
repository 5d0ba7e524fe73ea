//! Evaluation harness: ROC analysis, paired permutation tests,
//! cross-validation and importance maps.

mod cv;
mod permutation;
mod report;
mod roc;

pub use cv::{
    auroc_bootstrap_std, centre_table, centres_by_size, cross_validate, leave_one_centre_out, mean_and_population_std,
    stratified_folds, CentreResult, CentreRow, CentreTable, CvParams, CvResult,
};
pub use permutation::{compute_metric, permutation_test, Metric, MetricParams, NullSummary, PermutationTestResult};
pub use report::{
    evaluate, fit_dataset, importance_maps, EvaluationReport, GlobalImportanceMap, ImportanceMaps, LocalImportanceMap,
    Prediction,
};
pub use roc::{auroc, precision_recall, roc_curve, tpr_at_fpr, trapezoid, RocCurve};
