use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest valid label code; 0 is background.
pub const MAX_LABEL: u8 = 4;

/// The four lesion classes carried by the segmentation masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LesionClass {
    /// Intraparenchymal haemorrhage.
    Iph,
    /// Extra-axial haemorrhage.
    Eah,
    /// Perilesional oedema.
    Plo,
    /// Intraventricular haemorrhage.
    Ivh,
}

impl LesionClass {
    pub const ALL: [LesionClass; 4] = [LesionClass::Iph, LesionClass::Eah, LesionClass::Plo, LesionClass::Ivh];

    pub fn code(self) -> u8 {
        match self {
            LesionClass::Iph => 1,
            LesionClass::Eah => 2,
            LesionClass::Plo => 3,
            LesionClass::Ivh => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(LesionClass::Iph),
            2 => Some(LesionClass::Eah),
            3 => Some(LesionClass::Plo),
            4 => Some(LesionClass::Ivh),
            _ => None,
        }
    }

    /// Position in [`LesionClass::ALL`].
    pub fn index(self) -> usize {
        usize::from(self.code() - 1)
    }

    pub fn name(self) -> &'static str {
        match self {
            LesionClass::Iph => "IPH",
            LesionClass::Eah => "EAH",
            LesionClass::Plo => "PLO",
            LesionClass::Ivh => "IVH",
        }
    }
}

impl fmt::Display for LesionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LesionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LesionClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown lesion class `{s}`")))
    }
}

/// Dense 3D label volume with voxel spacing in millimetres.
///
/// Voxel `(x, y, z)` lives at `x + dims[0] * (y + dims[1] * z)`, the on-disk
/// NIfTI order. Axis 0 is sagittal, axis 1 coronal, axis 2 transverse.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    spacing: [f64; 3],
    labels: Vec<u8>,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], labels: Vec<u8>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidGrid(format!("dimensions must be positive, got {dims:?}")));
        }
        let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if n != Some(labels.len()) {
            return Err(Error::InvalidGrid(format!(
                "{} labels for dimensions {dims:?}",
                labels.len()
            )));
        }
        if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be positive and finite, got {spacing:?}")));
        }
        if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &v)| v > MAX_LABEL) {
            return Err(Error::LabelOutOfRange { value: i64::from(value), index });
        }
        Ok(Self { dims, spacing, labels })
    }

    /// All-background grid.
    pub fn empty(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, vec![0; n])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Unchecked write access for in-crate painters that only write valid labels.
    pub(crate) fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.index(x, y, z)]
    }

    /// Sets a voxel label. Codes above [`MAX_LABEL`] are rejected.
    pub fn set(&mut self, x: usize, y: usize, z: usize, label: u8) -> Result<()> {
        let index = self.index(x, y, z);
        if label > MAX_LABEL {
            return Err(Error::LabelOutOfRange { value: i64::from(label), index });
        }
        self.labels[index] = label;
        Ok(())
    }

    /// Volume of one voxel in millilitres (mm³ / 1000).
    pub fn voxel_volume_ml(&self) -> f64 {
        voxel_volume_ml(self.spacing)
    }

    pub fn class_voxel_count(&self, class: LesionClass) -> usize {
        let code = class.code();
        self.labels.iter().filter(|&&v| v == code).count()
    }
}

/// Voxel volume in mL for a spacing given in mm.
pub fn voxel_volume_ml(spacing: [f64; 3]) -> f64 {
    spacing[0] * spacing[1] * spacing[2] / 1000.0
}
