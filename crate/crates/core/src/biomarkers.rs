//! Global (per-class lesion statistics) and local (per-cuboid volume)
//! biomarkers.

use serde::{Deserialize, Serialize};

use crate::components::{check_threshold, components_from_map, is_retained, label_components, Connectivity, DEFAULT_MIN_LESION_ML};
use crate::error::{Error, Result};
use crate::grid::{LesionClass, VoxelGrid};
use crate::scalar::Scalar;
use crate::schema::{cuboid_offset, global_feature_name, local_feature_name, GlobalStat, CUBOIDS, CUBOIDS_PER_AXIS};

/// Linear-interpolation percentile of an ascending slice, `q` in `[0, 1]`.
/// The position is `q * (n - 1)`. Returns zero for an empty slice.
pub fn percentile_sorted<T: Scalar>(sorted: &[T], q: T) -> T {
    let n = sorted.len();
    if n == 0 {
        return T::zero();
    }
    let pos = q * T::from_usize_lossy(n - 1);
    let lo = pos.floor();
    let lo_idx = lo.to_usize().unwrap_or(0).min(n - 1);
    let hi_idx = (lo_idx + 1).min(n - 1);
    let frac = pos - lo;
    sorted[lo_idx] + (sorted[hi_idx] - sorted[lo_idx]) * frac
}

/// Summary of one class's retained lesion volumes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VolumeSummary<T> {
    pub count: usize,
    pub mean: T,
    pub median: T,
    pub p25: T,
    pub p75: T,
    pub max: T,
}

impl<T: Scalar> VolumeSummary<T> {
    /// All-zero for an empty input.
    pub fn from_volumes(volumes: &[T]) -> Self {
        if volumes.is_empty() {
            return Self { count: 0, mean: T::zero(), median: T::zero(), p25: T::zero(), p75: T::zero(), max: T::zero() };
        }
        let mut sorted = volumes.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("lesion volumes are finite"));
        let n = T::from_usize_lossy(sorted.len());
        let quarter = T::from_f64_lossy(0.25);
        Self {
            count: sorted.len(),
            mean: sorted.iter().copied().sum::<T>() / n,
            median: percentile_sorted(&sorted, T::half()),
            p25: percentile_sorted(&sorted, quarter),
            p75: percentile_sorted(&sorted, T::from_f64_lossy(0.75)),
            max: sorted[sorted.len() - 1],
        }
    }

    pub fn stat(&self, stat: GlobalStat) -> T {
        match stat {
            GlobalStat::Count => T::from_usize_lossy(self.count),
            GlobalStat::Mean => self.mean,
            GlobalStat::Median => self.median,
            GlobalStat::P25 => self.p25,
            GlobalStat::P75 => self.p75,
            GlobalStat::Max => self.max,
        }
    }
}

/// Per-class statistics over thresholded lesion volumes, indexed by
/// [`LesionClass::index`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GlobalBiomarkers {
    pub classes: [VolumeSummary<f64>; 4],
}

impl GlobalBiomarkers {
    pub fn class(&self, class: LesionClass) -> &VolumeSummary<f64> {
        &self.classes[class.index()]
    }
}

/// Total lesion volume (mL) per class in each of the 4×4×4 cuboids.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBiomarkers {
    /// `volumes[class][cuboid_offset(i, j, k)]`.
    pub volumes: Vec<[f64; CUBOIDS]>,
}

impl LocalBiomarkers {
    /// Volume of `class` in cuboid (sagittal `i`, coronal `j`, transverse `k`).
    pub fn get(&self, class: LesionClass, i: usize, j: usize, k: usize) -> f64 {
        self.volumes[class.index()][cuboid_offset(i, j, k)]
    }

    pub fn class_total(&self, class: LesionClass) -> f64 {
        self.volumes[class.index()].iter().sum()
    }
}

/// Options shared by the imaging feature extractors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagingOptions {
    pub connectivity: Connectivity,
    /// Noise threshold in mL; components at or below it are discarded.
    pub min_lesion_ml: f64,
    /// Build local volumes from thresholded components instead of raw voxels.
    pub local_thresholded: bool,
    /// Add a per-class `max` statistic to the global block.
    pub include_max: bool,
}

impl Default for ImagingOptions {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::TwentySix,
            min_lesion_ml: DEFAULT_MIN_LESION_ML,
            local_thresholded: false,
            include_max: false,
        }
    }
}

/// Cuboid index of every coordinate along an axis of `len` voxels. Cuboid `c`
/// covers `[floor(c * len / 4), floor((c + 1) * len / 4))`.
pub fn cuboid_partition(len: usize) -> Vec<usize> {
    let mut map = vec![0; len];
    for c in 0..CUBOIDS_PER_AXIS {
        let start = c * len / CUBOIDS_PER_AXIS;
        let end = (c + 1) * len / CUBOIDS_PER_AXIS;
        map[start..end].iter_mut().for_each(|m| *m = c);
    }
    map
}

fn retained_volumes(grid: &VoxelGrid, class: LesionClass, opts: &ImagingOptions) -> (Vec<f64>, Vec<bool>, Vec<u32>) {
    let map = label_components(grid, class, opts.connectivity);
    let comps = components_from_map(grid, class, &map);
    let keep: Vec<bool> = comps.iter().map(|c| is_retained(c.volume_ml, opts.min_lesion_ml)).collect();
    let volumes = comps.iter().zip(&keep).filter(|(_, &k)| k).map(|(c, _)| c.volume_ml).collect();
    (volumes, keep, map.ids)
}

pub fn global_biomarkers(grid: &VoxelGrid, opts: &ImagingOptions) -> Result<GlobalBiomarkers> {
    check_threshold(opts.min_lesion_ml)?;
    let mut out = GlobalBiomarkers::default();
    for class in LesionClass::ALL {
        let (volumes, _, _) = retained_volumes(grid, class, opts);
        out.classes[class.index()] = VolumeSummary::from_volumes(&volumes);
    }
    Ok(out)
}

pub fn local_biomarkers(grid: &VoxelGrid, opts: &ImagingOptions) -> Result<LocalBiomarkers> {
    check_threshold(opts.min_lesion_ml)?;
    let dims = grid.dims();
    for (axis, &len) in dims.iter().enumerate() {
        if len < CUBOIDS_PER_AXIS {
            return Err(Error::AxisTooSmall { axis, len });
        }
    }
    let parts: Vec<Vec<usize>> = dims.iter().map(|&d| cuboid_partition(d)).collect();

    // counts[class][cuboid]
    let mut counts = vec![[0usize; CUBOIDS]; 4];
    let filters: Vec<Option<(Vec<bool>, Vec<u32>)>> = LesionClass::ALL
        .iter()
        .map(|&class| {
            opts.local_thresholded.then(|| {
                let (_, keep, ids) = retained_volumes(grid, class, opts);
                (keep, ids)
            })
        })
        .collect();
    let labels = grid.labels();
    let mut idx = 0;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let v = labels[idx];
                if let Some(class) = LesionClass::from_code(v) {
                    let counted = match &filters[class.index()] {
                        None => true,
                        Some((keep, ids)) => keep[ids[idx] as usize - 1],
                    };
                    if counted {
                        counts[class.index()][cuboid_offset(parts[0][x], parts[1][y], parts[2][z])] += 1;
                    }
                }
                idx += 1;
            }
        }
    }
    let voxel_ml = grid.voxel_volume_ml();
    Ok(LocalBiomarkers {
        volumes: counts.into_iter().map(|c| c.map(|n| n as f64 * voxel_ml)).collect(),
    })
}

/// Which imaging blocks to extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImagingBlocks {
    Global,
    Local,
    Both,
}

/// Named feature values for one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

/// Flatten global and/or local biomarkers into canonical schema order:
/// global (class-major, then statistic) before local (class-major, then
/// sagittal, coronal, transverse).
pub fn extract_imaging_features(grid: &VoxelGrid, which: ImagingBlocks, opts: &ImagingOptions) -> Result<FeatureVector> {
    let mut names = Vec::new();
    let mut values = Vec::new();
    if matches!(which, ImagingBlocks::Global | ImagingBlocks::Both) {
        let g = global_biomarkers(grid, opts)?;
        for class in LesionClass::ALL {
            for stat in GlobalStat::stats(opts.include_max) {
                names.push(global_feature_name(class, stat));
                values.push(g.class(class).stat(stat));
            }
        }
    }
    if matches!(which, ImagingBlocks::Local | ImagingBlocks::Both) {
        let l = local_biomarkers(grid, opts)?;
        for class in LesionClass::ALL {
            for i in 0..CUBOIDS_PER_AXIS {
                for j in 0..CUBOIDS_PER_AXIS {
                    for k in 0..CUBOIDS_PER_AXIS {
                        names.push(local_feature_name(class, i, j, k));
                        values.push(l.get(class, i, j, k));
                    }
                }
            }
        }
    }
    Ok(FeatureVector { names, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Block, FeatureSchema};

    /// Sort-and-interpolate percentile written out independently.
    fn oracle_percentile(values: &[f64], q: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pos = q * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] * (1.0 - (pos - lo as f64)) + v[hi] * (pos - lo as f64)
    }

    #[test]
    fn summary_of_one_to_four() {
        let s = VolumeSummary::from_volumes(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!(s.count, 4);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.p25, 1.75);
        assert_eq!(s.p75, 3.25);
        assert_eq!(s.max, 4.0);
        for (q, want) in [(0.5, s.median), (0.25, s.p25), (0.75, s.p75)] {
            assert_eq!(oracle_percentile(&[1.0, 2.0, 3.0, 4.0], q), want);
        }
    }

    #[test]
    fn degenerate_summaries() {
        let s = VolumeSummary::from_volumes(&[5.0]);
        assert_eq!((s.count, s.mean, s.median, s.p25, s.p75), (1, 5.0, 5.0, 5.0, 5.0));
        let e = VolumeSummary::<f64>::from_volumes(&[]);
        assert_eq!((e.count, e.mean, e.median, e.p25, e.p75), (0, 0.0, 0.0, 0.0, 0.0));
        let f = VolumeSummary::<f32>::from_volumes(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(f.p25, 1.75f32);
    }

    #[test]
    fn partition_boundaries() {
        let p = cuboid_partition(64);
        assert_eq!((p[0], p[63], p[16], p[31], p[48]), (0, 3, 1, 1, 3));
        assert_eq!(cuboid_partition(5), vec![0, 1, 2, 3, 3]);
        assert_eq!(cuboid_partition(6), vec![0, 1, 1, 2, 3, 3]);
        for len in 4..40 {
            let p = cuboid_partition(len);
            for c in 0..4 {
                let size = p.iter().filter(|&&v| v == c).count();
                assert!(size == len / 4 || size == len / 4 + 1, "len {len}");
            }
        }
    }

    #[test]
    fn local_voxel_to_cuboid() {
        let mut g = VoxelGrid::empty([64, 64, 64], [1.0; 3]).unwrap();
        g.set(0, 0, 0, 1).unwrap();
        g.set(63, 63, 63, 2).unwrap();
        g.set(16, 31, 48, 3).unwrap();
        let l = local_biomarkers(&g, &ImagingOptions::default()).unwrap();
        assert_eq!(l.get(LesionClass::Iph, 0, 0, 0), 0.001);
        assert_eq!(l.get(LesionClass::Eah, 3, 3, 3), 0.001);
        assert_eq!(l.get(LesionClass::Plo, 1, 1, 3), 0.001);
        assert_eq!(l.class_total(LesionClass::Ivh), 0.0);
    }

    #[test]
    fn uniform_eah_grid() {
        let g = VoxelGrid::new([64, 64, 64], [1.0; 3], vec![2; 64 * 64 * 64]).unwrap();
        let l = local_biomarkers(&g, &ImagingOptions::default()).unwrap();
        // 16^3 voxels of 0.001 mL per cuboid
        for &v in &l.volumes[LesionClass::Eah.index()] {
            assert!((v - 4.096).abs() < 1e-12, "{v}");
        }
        assert!(l.volumes[LesionClass::Iph.index()].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_axis_rejected() {
        let g = VoxelGrid::empty([4, 3, 8], [1.0; 3]).unwrap();
        assert!(matches!(
            local_biomarkers(&g, &ImagingOptions::default()),
            Err(Error::AxisTooSmall { axis: 1, len: 3 })
        ));
    }

    #[test]
    fn thresholded_local_drops_specks() {
        let mut g = VoxelGrid::empty([8, 8, 8], [1.0; 3]).unwrap();
        g.set(0, 0, 0, 1).unwrap();
        for x in 0..8 {
            for y in 0..4 {
                g.set(x, y, 7, 1).unwrap();
            }
        }
        let raw = local_biomarkers(&g, &ImagingOptions::default()).unwrap();
        let filt = local_biomarkers(&g, &ImagingOptions { local_thresholded: true, ..Default::default() }).unwrap();
        assert!((raw.class_total(LesionClass::Iph) - 0.033).abs() < 1e-12);
        assert!((filt.class_total(LesionClass::Iph) - 0.032).abs() < 1e-12);
    }

    #[test]
    fn global_uses_thresholded_components() {
        let mut g = VoxelGrid::empty([30, 4, 4], [1.0; 3]).unwrap();
        for x in 0..25 {
            g.set(x, 0, 0, 2).unwrap();
        }
        g.set(0, 3, 3, 2).unwrap();
        let gb = global_biomarkers(&g, &ImagingOptions::default()).unwrap();
        let eah = gb.class(LesionClass::Eah);
        assert_eq!(eah.count, 1);
        assert!((eah.mean - 0.025).abs() < 1e-12);
        assert_eq!(gb.class(LesionClass::Iph).count, 0);
    }

    #[test]
    fn feature_vector_lengths_and_names() {
        let g = VoxelGrid::empty([8, 8, 8], [1.0; 3]).unwrap();
        let o = ImagingOptions::default();
        assert_eq!(extract_imaging_features(&g, ImagingBlocks::Global, &o).unwrap().len(), 20);
        assert_eq!(extract_imaging_features(&g, ImagingBlocks::Local, &o).unwrap().len(), 256);
        let both = extract_imaging_features(&g, ImagingBlocks::Both, &o).unwrap();
        assert_eq!(both.len(), 276);
        assert!(both.values.iter().all(|&v| v == 0.0));
        let schema = FeatureSchema::for_blocks(&[Block::Global, Block::Local], false);
        assert!(both.names.iter().map(String::as_str).eq(schema.names()));
        assert!(both.get("EAH/local/1/1/2").is_some());
        assert!(both.get("IPH/global/count").is_some());
    }
}
