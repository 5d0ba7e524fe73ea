//! Connected-component labelling of lesion classes and noise thresholding.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{LesionClass, VoxelGrid};

/// Components at or below this volume (mL) are treated as noise.
pub const DEFAULT_MIN_LESION_ML: f64 = 0.02;

/// Relative slack used when comparing a component volume with the threshold,
/// so that e.g. 20 × 0.001 mL compares equal to 0.02 mL.
const THRESHOLD_REL_EPS: f64 = 1e-9;

/// Voxel adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbours only.
    #[serde(rename = "6")]
    Six,
    /// Face, edge and corner neighbours.
    #[default]
    #[serde(rename = "26")]
    TwentySix,
}

impl Connectivity {
    /// Neighbour offsets that precede a voxel in scan order (x fastest, then y, then z).
    fn backward_offsets(self) -> Vec<[isize; 3]> {
        match self {
            Connectivity::Six => vec![[-1, 0, 0], [0, -1, 0], [0, 0, -1]],
            Connectivity::TwentySix => {
                let mut v = Vec::with_capacity(13);
                for dz in -1isize..=1 {
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            if dz < 0 || (dz == 0 && dy < 0) || (dz == 0 && dy == 0 && dx < 0) {
                                v.push([dx, dy, dz]);
                            }
                        }
                    }
                }
                v
            }
        }
    }
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "6" => Ok(Connectivity::Six),
            "26" => Ok(Connectivity::TwentySix),
            other => Err(Error::InvalidParameter(format!("connectivity must be 6 or 26, got `{other}`"))),
        }
    }
}

/// One connected lesion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionComponent {
    pub lesion_class: LesionClass,
    /// 1-based id in the component map this lesion came from.
    pub id: u32,
    pub voxel_count: usize,
    pub volume_ml: f64,
    /// Mean voxel coordinate.
    pub centroid: [f64; 3],
    /// Inclusive `[min, max]` voxel corners.
    pub bounding_box: [[usize; 3]; 2],
}

/// Per-voxel component ids for one class: 0 for voxels outside the class,
/// `1..=count` otherwise, numbered by first voxel in scan order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMap {
    pub ids: Vec<u32>,
    pub count: usize,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut a: u32) -> u32 {
        while self.parent[a as usize] != a {
            let grand = self.parent[self.parent[a as usize] as usize];
            self.parent[a as usize] = grand;
            a = grand;
        }
        a
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Two-pass union-find labelling of the voxels of `class`.
pub fn label_components(grid: &VoxelGrid, class: LesionClass, connectivity: Connectivity) -> ComponentMap {
    let [nx, ny, nz] = grid.dims();
    let code = class.code();
    let labels = grid.labels();
    let offsets: Vec<_> = connectivity
        .backward_offsets()
        .into_iter()
        .map(|[dx, dy, dz]| (dx, dy, dz, dx + nx as isize * (dy + ny as isize * dz)))
        .collect();

    // provisional ids are 1-based; slot 0 in the set is unused
    let mut provisional = vec![0u32; labels.len()];
    let mut set = DisjointSet { parent: vec![0] };
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                if labels[i] != code {
                    continue;
                }
                let mut current = 0u32;
                for &(dx, dy, dz, delta) in &offsets {
                    let (xx, yy, zz) = (x as isize + dx, y as isize + dy, z as isize + dz);
                    if xx < 0 || yy < 0 || zz < 0 || xx >= nx as isize || yy >= ny as isize {
                        continue;
                    }
                    let j = (i as isize + delta) as usize;
                    let p = provisional[j];
                    if p != 0 {
                        current = if current == 0 { set.find(p) } else { set.union(current, p) };
                    }
                }
                provisional[i] = if current == 0 { set.make() } else { current };
            }
        }
    }

    let mut compact = vec![0u32; set.parent.len()];
    let mut count = 0u32;
    for p in provisional.iter_mut() {
        if *p == 0 {
            continue;
        }
        let root = set.find(*p) as usize;
        if compact[root] == 0 {
            count += 1;
            compact[root] = count;
        }
        *p = compact[root];
    }
    ComponentMap { ids: provisional, count: count as usize }
}

/// All connected components of `class`, before thresholding, ordered by first
/// voxel in scan order.
pub fn connected_components(grid: &VoxelGrid, class: LesionClass, connectivity: Connectivity) -> Vec<LesionComponent> {
    components_from_map(grid, class, &label_components(grid, class, connectivity))
}

pub fn components_from_map(grid: &VoxelGrid, class: LesionClass, map: &ComponentMap) -> Vec<LesionComponent> {
    struct Acc {
        n: usize,
        sum: [f64; 3],
        lo: [usize; 3],
        hi: [usize; 3],
    }
    let mut acc: Vec<Acc> = (0..map.count)
        .map(|_| Acc { n: 0, sum: [0.0; 3], lo: [usize::MAX; 3], hi: [0; 3] })
        .collect();
    for (i, &id) in map.ids.iter().enumerate() {
        if id == 0 {
            continue;
        }
        let a = &mut acc[id as usize - 1];
        let c = grid.coords(i);
        a.n += 1;
        for k in 0..3 {
            a.sum[k] += c[k] as f64;
            a.lo[k] = a.lo[k].min(c[k]);
            a.hi[k] = a.hi[k].max(c[k]);
        }
    }
    let voxel_ml = grid.voxel_volume_ml();
    acc.into_iter()
        .enumerate()
        .map(|(k, a)| LesionComponent {
            lesion_class: class,
            id: k as u32 + 1,
            voxel_count: a.n,
            volume_ml: a.n as f64 * voxel_ml,
            centroid: a.sum.map(|s| s / a.n as f64),
            bounding_box: [a.lo, a.hi],
        })
        .collect()
}

/// Whether a component of `volume_ml` survives a `min_ml` noise threshold.
/// Volumes equal to the threshold are discarded.
#[inline]
pub fn is_retained(volume_ml: f64, min_ml: f64) -> bool {
    volume_ml > min_ml * (1.0 + THRESHOLD_REL_EPS)
}

/// Keep only components strictly larger than `min_ml`.
pub fn threshold_components(components: Vec<LesionComponent>, min_ml: f64) -> Result<Vec<LesionComponent>> {
    check_threshold(min_ml)?;
    Ok(components.into_iter().filter(|c| is_retained(c.volume_ml, min_ml)).collect())
}

pub(crate) fn check_threshold(min_ml: f64) -> Result<()> {
    if min_ml.is_finite() && min_ml >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(min_ml))
    }
}
