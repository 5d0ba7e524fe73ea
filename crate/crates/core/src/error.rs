use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("i/o error on {path}: {source}")]
    IoAt {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // NIfTI container
    #[error("malformed NIfTI header: sizeof_hdr is {0}, expected 348")]
    HeaderSize(i32),
    #[error("malformed NIfTI header: magic {0:?} is not \"n+1\\0\"")]
    BadMagic([u8; 4]),
    #[error("unsupported NIfTI datatype code {0} (only integer label volumes are accepted)")]
    UnsupportedDatatype(i16),
    #[error("expected a 3D volume, header has dim[0] = {0}")]
    NotThreeDimensional(i16),
    #[error("invalid NIfTI header: {0}")]
    InvalidHeader(String),
    #[error("label out of range: value {value} at voxel {index}")]
    LabelOutOfRange { value: i64, index: usize },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid voxel grid: {0}")]
    InvalidGrid(String),

    // Feature extraction
    #[error("axis {axis} has {len} voxels; at least 4 are needed for the cuboid partition")]
    AxisTooSmall { axis: usize, len: usize },
    #[error("threshold must be non-negative and finite, got {0}")]
    InvalidThreshold(f64),

    // Cohort
    #[error("clinical table is missing column `{0}`")]
    MissingColumn(String),
    #[error("duplicate patient_id `{0}`")]
    DuplicatePatient(String),
    #[error("patient `{0}` has no mask but the configuration needs imaging features")]
    MissingMask(String),
    #[error("patient `{patient}` is missing `{field}` required by the configuration")]
    MissingField { patient: String, field: String },
    #[error("unknown model configuration `{0}`")]
    UnknownConfig(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid effect specification: {0}")]
    InvalidEffectSpec(String),
    #[error("impossible geometry: {0}")]
    ImpossibleGeometry(String),

    // Modelling and evaluation
    #[error("labels contain a single class; both outcomes are required")]
    SingleClass,
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cohort too small to stratify: {0}")]
    TooSmallToStratify(String),
    #[error("unsupported model format version {0}")]
    FormatVersion(u32),
}

impl Error {
    pub(crate) fn at(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::IoAt { path, source }
    }

    /// True for errors caused by the input data rather than by the environment.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::IoAt { .. })
    }
}
