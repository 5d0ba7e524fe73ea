//! Seeded synthetic cohorts: ellipsoidal lesions planted into empty grids and
//! outcomes drawn from a logistic model over the planted quantities.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::clinical::{label_unfavourable, PatientRecord, PupilReactivity};
use crate::biomarkers::cuboid_partition;
use crate::error::{Error, Result};
use crate::grid::{LesionClass, VoxelGrid};
use crate::rng;

/// Per-patient quantities an effect can act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentFeature {
    /// EAH volume (mL) inside the frontal cuboids.
    EahFrontalMl,
    Age,
    /// Volume (mL) of all lesion classes together.
    TotalLesionMl,
    GcsMotor,
}

/// Adds `weight * (value - center) / scale` to the log-odds of an
/// unfavourable outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub feature: LatentFeature,
    pub weight: f64,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSpec {
    pub intercept: f64,
    #[serde(default)]
    pub effects: Vec<Effect>,
}

impl EffectSpec {
    /// Outcome driven by frontal EAH volume and age.
    pub fn frontal_eah_and_age() -> Self {
        Self {
            intercept: -1.0,
            effects: vec![
                Effect { feature: LatentFeature::EahFrontalMl, weight: 5.0, center: 0.05, scale: 0.25 },
                Effect { feature: LatentFeature::Age, weight: 2.0, center: 50.0, scale: 15.0 },
            ],
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: EffectSpec = serde_json::from_str(s).map_err(|e| Error::InvalidEffectSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.intercept.is_finite() {
            return Err(Error::InvalidEffectSpec("intercept must be finite".into()));
        }
        for e in &self.effects {
            if !(e.weight.is_finite() && e.center.is_finite() && e.scale.is_finite() && e.scale > 0.0) {
                return Err(Error::InvalidEffectSpec(format!(
                    "effect on {:?} needs a finite weight and center and a positive scale",
                    e.feature
                )));
            }
        }
        Ok(())
    }

    pub fn logit(&self, latent: &BTreeMap<LatentFeature, f64>) -> f64 {
        self.intercept
            + self.effects.iter().map(|e| e.weight * (latent[&e.feature] - e.center) / e.scale).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthOptions {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Mean number of background lesions per class.
    pub lesions_per_class: f64,
    /// Ellipsoid semi-axis range in voxels.
    pub radius: [f64; 2],
    /// Probability of a planted frontal EAH.
    pub frontal_prevalence: f64,
    /// Sub-threshold single-voxel specks per patient, drawn uniformly from `0..=max`.
    pub max_specks: u32,
    /// Cuboids (sagittal, coronal, transverse) that make up the frontal region.
    pub frontal_cuboids: Vec<[usize; 3]>,
    /// Fraction of records given a defect that the cohort filter removes.
    pub incomplete_fraction: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            dims: [32, 32, 32],
            spacing: [2.0, 2.0, 2.0],
            lesions_per_class: 1.2,
            radius: [1.0, 3.0],
            frontal_prevalence: 0.5,
            max_specks: 4,
            frontal_cuboids: vec![[1, 3, 2], [2, 3, 2]],
            incomplete_fraction: 0.0,
        }
    }
}

/// Planted truth for one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub patient_id: String,
    pub centre_id: String,
    pub latent: BTreeMap<LatentFeature, f64>,
    pub logit: f64,
    pub probability: f64,
    pub unfavourable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub n_centres: usize,
    pub spec: EffectSpec,
    pub options: SynthOptions,
    pub rows: Vec<TruthRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    /// One mask per record, same order.
    pub masks: Vec<VoxelGrid>,
    pub records: Vec<PatientRecord>,
    pub truth: GroundTruth,
}

fn centre_name(c: usize) -> String {
    format!("C{:02}", c + 1)
}

pub fn patient_name(i: usize) -> String {
    format!("P{:05}", i + 1)
}

fn paint_ellipsoid(grid: &mut VoxelGrid, centre: [f64; 3], radii: [f64; 3], label: u8) {
    let d = grid.dims();
    let lo = |a: usize| (centre[a] - radii[a]).floor().max(0.0) as usize;
    let hi = |a: usize| ((centre[a] + radii[a]).ceil() as usize).min(d[a] - 1);
    for z in lo(2)..=hi(2) {
        for y in lo(1)..=hi(1) {
            for x in lo(0)..=hi(0) {
                let p = [x as f64, y as f64, z as f64];
                let r: f64 = (0..3).map(|a| ((p[a] - centre[a]) / radii[a]).powi(2)).sum();
                if r <= 1.0 {
                    let idx = grid.index(x, y, z);
                    grid.labels_mut()[idx] = label;
                }
            }
        }
    }
}

fn random_radii(g: &mut ChaCha8Rng, range: [f64; 2]) -> [f64; 3] {
    [0, 1, 2].map(|_| g.random_range(range[0]..=range[1]))
}

fn check_geometry(n_patients: usize, n_centres: usize, opts: &SynthOptions) -> Result<()> {
    if n_patients < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 patients, got {n_patients}")));
    }
    if n_centres == 0 {
        return Err(Error::InvalidParameter("need at least 1 centre".into()));
    }
    let [r_lo, r_hi] = opts.radius;
    if !(r_lo > 0.0 && r_lo <= r_hi && r_hi.is_finite()) {
        return Err(Error::ImpossibleGeometry(format!("radius range {r_lo}..{r_hi}")));
    }
    for (a, &len) in opts.dims.iter().enumerate() {
        if len < 4 {
            return Err(Error::ImpossibleGeometry(format!("axis {a} has {len} voxels, need at least 4")));
        }
        if 2.0 * r_hi + 1.0 > len as f64 {
            return Err(Error::ImpossibleGeometry(format!(
                "lesion diameter {} exceeds axis {a} of {len} voxels",
                2.0 * r_hi + 1.0
            )));
        }
    }
    if opts.frontal_cuboids.is_empty() || opts.frontal_cuboids.iter().flatten().any(|&c| c >= 4) {
        return Err(Error::ImpossibleGeometry("frontal region needs cuboid indices in 0..4".into()));
    }
    for p in [opts.frontal_prevalence, opts.incomplete_fraction] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("probability {p} outside [0, 1]")));
        }
    }
    if !(opts.lesions_per_class >= 0.0 && opts.lesions_per_class.is_finite()) {
        return Err(Error::InvalidParameter("lesions_per_class must be non-negative".into()));
    }
    Ok(())
}

/// Voxel box `[start, end)` per axis of a cuboid.
fn cuboid_box(dims: [usize; 3], cuboid: [usize; 3]) -> [[usize; 2]; 3] {
    [0, 1, 2].map(|a| [cuboid[a] * dims[a] / 4, (cuboid[a] + 1) * dims[a] / 4])
}

fn frontal_volume(grid: &VoxelGrid, cuboids: &[[usize; 3]]) -> f64 {
    let d = grid.dims();
    let parts = [cuboid_partition(d[0]), cuboid_partition(d[1]), cuboid_partition(d[2])];
    let eah = LesionClass::Eah.code();
    let mut n = 0usize;
    for (idx, &l) in grid.labels().iter().enumerate() {
        if l == eah {
            let [x, y, z] = grid.coords(idx);
            if cuboids.contains(&[parts[0][x], parts[1][y], parts[2][z]]) {
                n += 1;
            }
        }
    }
    n as f64 * grid.voxel_volume_ml()
}

struct Patient {
    mask: VoxelGrid,
    record: PatientRecord,
    truth: TruthRow,
}

fn synthesize_patient(seed: u64, i: usize, n_centres: usize, spec: &EffectSpec, opts: &SynthOptions) -> Result<Patient> {
    let mut g = rng::stream(seed, &[0x5717, i as u64]);
    let d = opts.dims;

    // Larger centres first: weights n, n-1, ..., 1.
    let total: usize = (1..=n_centres).sum();
    let mut pick = g.random_range(0..total);
    let mut centre = 0;
    while pick >= n_centres - centre {
        pick -= n_centres - centre;
        centre += 1;
    }

    let mut mask = VoxelGrid::empty(d, opts.spacing)?;
    let poisson = Poisson::new(opts.lesions_per_class.max(1e-12)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut classes = LesionClass::ALL.to_vec();
    // Random paint order so no class systematically overwrites another.
    for k in (1..classes.len()).rev() {
        classes.swap(k, g.random_range(0..=k));
    }
    for class in classes {
        let n: f64 = if opts.lesions_per_class > 0.0 { poisson.sample(&mut g) } else { 0.0 };
        for _ in 0..n as usize {
            let radii = random_radii(&mut g, opts.radius);
            let centre = [0, 1, 2].map(|a| g.random_range(radii[a]..=(d[a] as f64 - 1.0 - radii[a])));
            paint_ellipsoid(&mut mask, centre, radii, class.code());
        }
    }
    if g.random_bool(opts.frontal_prevalence) {
        let cuboid = opts.frontal_cuboids[g.random_range(0..opts.frontal_cuboids.len())];
        let b = cuboid_box(d, cuboid);
        let radii = random_radii(&mut g, opts.radius);
        let centre = [0, 1, 2].map(|a| {
            let mid = (b[a][0] + b[a][1]) as f64 / 2.0 - 0.5;
            (mid + g.random_range(-1.0..=1.0)).clamp(radii[a], d[a] as f64 - 1.0 - radii[a])
        });
        paint_ellipsoid(&mut mask, centre, radii, LesionClass::Eah.code());
    }
    for _ in 0..g.random_range(0..=opts.max_specks) {
        let [x, y, z] = [0, 1, 2].map(|a| g.random_range(0..d[a]));
        mask.set(x, y, z, g.random_range(1..=4))?;
    }

    let age_dist = Normal::new(50.0, 18.0).expect("valid normal");
    let age = (age_dist.sample(&mut g) as f64).clamp(16.0, 95.0);
    let age = (age * 10.0).round() / 10.0;
    let total_ml = mask.labels().iter().filter(|&&l| l != 0).count() as f64 * mask.voxel_volume_ml();
    let gcs_motor: u8 = if g.random_bool(0.55) { 6 } else { g.random_range(1..=5) };
    let pupils = match g.random_range(0..10) {
        0 => PupilReactivity::None,
        1 => PupilReactivity::One,
        _ => PupilReactivity::Both,
    };
    let marshall: u8 = if total_ml == 0.0 {
        1
    } else {
        let base = 2 + (total_ml / 1.5).floor().min(4.0) as i32;
        (base + g.random_range(-1..=1)).clamp(2, 6) as u8
    };

    let latent: BTreeMap<LatentFeature, f64> = [
        (LatentFeature::EahFrontalMl, frontal_volume(&mask, &opts.frontal_cuboids)),
        (LatentFeature::Age, age),
        (LatentFeature::TotalLesionMl, total_ml),
        (LatentFeature::GcsMotor, f64::from(gcs_motor)),
    ]
    .into_iter()
    .collect();
    let logit = spec.logit(&latent);
    let probability = 1.0 / (1.0 + (-logit).exp());
    let unfavourable = g.random::<f64>() < probability;
    let gose: u8 = if unfavourable { g.random_range(1..=4) } else { g.random_range(5..=8) };
    debug_assert_eq!(label_unfavourable(gose), unfavourable);

    let patient_id = patient_name(i);
    let mut record = PatientRecord {
        patient_id: patient_id.clone(),
        centre_id: Some(centre_name(centre)),
        age: Some(age),
        gcs_motor: Some(gcs_motor),
        pupils: Some(pupils),
        hypoxia: Some(g.random_bool(0.15)),
        hypotension: Some(g.random_bool(0.12)),
        marshall: Some(marshall),
        gose: Some(gose),
        mask_path: Some(format!("masks/{patient_id}.nii.gz").into()),
        pre_scan_surgery: Some(false),
        timestamps_complete: Some(true),
        issues: vec![],
    };
    if g.random_bool(opts.incomplete_fraction) {
        match g.random_range(0..6) {
            0 => record.timestamps_complete = Some(false),
            1 => record.gose = None,
            2 => record.mask_path = None,
            3 => record.pre_scan_surgery = Some(true),
            4 => record.age = None,
            _ => record.marshall = None,
        }
    }
    let truth = TruthRow {
        patient_id,
        centre_id: centre_name(centre),
        latent,
        logit,
        probability,
        unfavourable,
    };
    Ok(Patient { mask, record, truth })
}

/// Deterministic under `seed`: each patient draws from its own stream, so the
/// output does not depend on thread scheduling.
pub fn synthesize_cohort(
    seed: u64,
    n_patients: usize,
    n_centres: usize,
    spec: &EffectSpec,
    opts: &SynthOptions,
) -> Result<SyntheticCohort> {
    spec.validate()?;
    check_geometry(n_patients, n_centres, opts)?;
    let patients = (0..n_patients)
        .into_par_iter()
        .map(|i| synthesize_patient(seed, i, n_centres, spec, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut masks = Vec::with_capacity(n_patients);
    let mut records = Vec::with_capacity(n_patients);
    let mut rows = Vec::with_capacity(n_patients);
    for p in patients {
        masks.push(p.mask);
        records.push(p.record);
        rows.push(p.truth);
    }
    Ok(SyntheticCohort {
        masks,
        records,
        truth: GroundTruth { seed, n_centres, spec: spec.clone(), options: opts.clone(), rows },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthOptions {
        SynthOptions { dims: [16, 16, 16], radius: [1.0, 2.0], ..SynthOptions::default() }
    }

    #[test]
    fn deterministic() {
        let spec = EffectSpec::frontal_eah_and_age();
        let a = synthesize_cohort(3, 20, 3, &spec, &small()).unwrap();
        let b = synthesize_cohort(3, 20, 3, &spec, &small()).unwrap();
        assert_eq!(a, b);
        let c = synthesize_cohort(4, 20, 3, &spec, &small()).unwrap();
        assert_ne!(a.masks, c.masks);
    }

    #[test]
    fn impossible_geometry() {
        let opts = SynthOptions { dims: [6, 32, 32], radius: [1.0, 3.0], ..SynthOptions::default() };
        let err = synthesize_cohort(0, 10, 2, &EffectSpec::frontal_eah_and_age(), &opts).unwrap_err();
        assert!(matches!(err, Error::ImpossibleGeometry(_)));
        assert!(synthesize_cohort(0, 1, 2, &EffectSpec::frontal_eah_and_age(), &small()).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(EffectSpec::from_json(r#"{"intercept": 0.5, "effects": [{"feature": "age", "weight": 1, "scale": 0}]}"#).is_err());
        assert!(EffectSpec::from_json(r#"{"intercept": 0.5, "effects": [{"feature": "height", "weight": 1}]}"#).is_err());
        let s = EffectSpec::from_json(r#"{"intercept": -1, "effects": [{"feature": "eah_frontal_ml", "weight": 2}]}"#).unwrap();
        assert_eq!(s.effects[0].scale, 1.0);
    }

    #[test]
    fn frontal_latent_matches_mask() {
        let opts = small();
        let c = synthesize_cohort(9, 30, 2, &EffectSpec::frontal_eah_and_age(), &opts).unwrap();
        for (m, t) in c.masks.iter().zip(&c.truth.rows) {
            assert_eq!(t.latent[&LatentFeature::EahFrontalMl], frontal_volume(m, &opts.frontal_cuboids));
        }
        assert!(c.truth.rows.iter().any(|t| t.latent[&LatentFeature::EahFrontalMl] > 0.0));
    }
}
