//! Lesion biomarkers from 3D multi-class segmentation masks, random-forest
//! outcome models over them, and the evaluation harness around both.
//!
//! The numeric core (forest, ROC analysis, percentiles) is generic over
//! [`Scalar`]; the pipeline itself runs in `f64` through the aliases below.

pub mod biomarkers;
pub mod cohort;
pub mod components;
pub mod error;
pub mod forest;
pub mod grid;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod nifti;
pub mod rng;
pub mod scalar;
pub mod schema;

pub use biomarkers::{
    extract_imaging_features, global_biomarkers, local_biomarkers, FeatureVector, GlobalBiomarkers, ImagingBlocks,
    ImagingOptions, LocalBiomarkers,
};
pub use components::{connected_components, threshold_components, Connectivity, LesionComponent};
pub use error::{Error, Result};
pub use forest::{ForestParams, MaxFeatures};
pub use grid::{voxel_volume_ml, LesionClass, VoxelGrid};
pub use nifti::{read_mask, write_mask};
pub use scalar::Scalar;
pub use schema::{Block, FeatureSchema, ModelConfig};

pub type Forest = forest::Forest<f64>;
pub type Forest32 = forest::Forest<f32>;
pub type DecisionTree = forest::DecisionTree<f64>;
pub type Matrix = matrix::Matrix<f64>;
pub type Matrix32 = matrix::Matrix<f32>;
pub type RocCurve = metrics::RocCurve<f64>;
pub type RocCurve32 = metrics::RocCurve<f32>;
