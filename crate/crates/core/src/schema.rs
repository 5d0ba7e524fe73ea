//! Canonical feature names and the eight model configurations.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LesionClass;

pub const CUBOIDS_PER_AXIS: usize = 4;
pub const CUBOIDS: usize = CUBOIDS_PER_AXIS * CUBOIDS_PER_AXIS * CUBOIDS_PER_AXIS;

pub const CLINICAL_FEATURES: [&str; 5] = ["age", "gcs_motor", "pupils", "hypoxia", "hypotension"];
pub const MARSHALL_FEATURE: &str = "marshall";

/// Per-class summary statistic of lesion volumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GlobalStat {
    Count,
    Mean,
    Median,
    P25,
    P75,
    /// Largest lesion; only present when explicitly enabled.
    Max,
}

impl GlobalStat {
    pub const DEFAULT: [GlobalStat; 5] = [GlobalStat::Count, GlobalStat::Mean, GlobalStat::Median, GlobalStat::P25, GlobalStat::P75];

    pub fn name(self) -> &'static str {
        match self {
            GlobalStat::Count => "count",
            GlobalStat::Mean => "mean",
            GlobalStat::Median => "median",
            GlobalStat::P25 => "p25",
            GlobalStat::P75 => "p75",
            GlobalStat::Max => "max",
        }
    }

    pub fn stats(include_max: bool) -> Vec<GlobalStat> {
        let mut v = GlobalStat::DEFAULT.to_vec();
        if include_max {
            v.push(GlobalStat::Max);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Marshall,
    Global,
    Local,
    Clinical,
}

pub fn global_feature_name(class: LesionClass, stat: GlobalStat) -> String {
    format!("{}/global/{}", class.name(), stat.name())
}

/// Name of the local feature for cuboid `(i, j, k)` = (sagittal, coronal, transverse).
pub fn local_feature_name(class: LesionClass, i: usize, j: usize, k: usize) -> String {
    format!("{}/local/{i}/{j}/{k}", class.name())
}

/// Stable 64-bit key for a feature name (FNV-1a). Used to key per-feature
/// randomness in the forest so models do not depend on column order.
pub fn feature_key(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Flat position of cuboid `(i, j, k)` inside a class's 64 local features.
#[inline]
pub fn cuboid_offset(i: usize, j: usize, k: usize) -> usize {
    (i * CUBOIDS_PER_AXIS + j) * CUBOIDS_PER_AXIS + k
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub block: Block,
}

/// Ordered, uniquely named feature list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, f) in features.iter().enumerate() {
            if let Some(j) = seen.insert(f.name.as_str(), i) {
                return Err(Error::SchemaMismatch(format!("feature `{}` appears at {j} and {i}", f.name)));
            }
        }
        Ok(Self { features })
    }

    /// Schema of the given blocks, always laid out in canonical block order
    /// (marshall, global, local, clinical).
    pub fn for_blocks(blocks: &[Block], include_max: bool) -> Self {
        let mut sorted = blocks.to_vec();
        sorted.sort();
        sorted.dedup();
        let mut features = Vec::new();
        for block in sorted {
            let mut push = |name: String| features.push(FeatureSpec { name, block });
            match block {
                Block::Marshall => push(MARSHALL_FEATURE.to_string()),
                Block::Global => {
                    for class in LesionClass::ALL {
                        for stat in GlobalStat::stats(include_max) {
                            push(global_feature_name(class, stat));
                        }
                    }
                }
                Block::Local => {
                    for class in LesionClass::ALL {
                        for i in 0..CUBOIDS_PER_AXIS {
                            for j in 0..CUBOIDS_PER_AXIS {
                                for k in 0..CUBOIDS_PER_AXIS {
                                    push(local_feature_name(class, i, j, k));
                                }
                            }
                        }
                    }
                }
                Block::Clinical => {
                    for name in CLINICAL_FEATURES {
                        push(name.to_string());
                    }
                }
            }
        }
        Self { features }
    }

    /// Every block; the superset all configurations project from.
    pub fn full(include_max: bool) -> Self {
        Self::for_blocks(&[Block::Marshall, Block::Global, Block::Local, Block::Clinical], include_max)
    }

    /// Schema for a list of names, inferring each block from the name.
    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let features = names
            .into_iter()
            .map(|n| {
                block_of(n)
                    .map(|block| FeatureSpec { name: n.to_string(), block })
                    .ok_or_else(|| Error::SchemaMismatch(format!("unrecognised feature `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(features)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn keys(&self) -> Vec<u64> {
        self.features.iter().map(|f| feature_key(&f.name)).collect()
    }

    pub fn has_block(&self, block: Block) -> bool {
        self.features.iter().any(|f| f.block == block)
    }

    /// Column indices of this schema's features inside `names`.
    pub fn project_from<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Result<Vec<usize>> {
        let lookup: HashMap<&str, usize> = names.into_iter().enumerate().map(|(i, n)| (n, i)).collect();
        self.features
            .iter()
            .map(|f| {
                lookup
                    .get(f.name.as_str())
                    .copied()
                    .ok_or_else(|| Error::SchemaMismatch(format!("feature `{}` not found", f.name)))
            })
            .collect()
    }
}

/// Block a feature name belongs to, if it is one of ours.
pub fn block_of(name: &str) -> Option<Block> {
    if name == MARSHALL_FEATURE {
        Some(Block::Marshall)
    } else if CLINICAL_FEATURES.contains(&name) {
        Some(Block::Clinical)
    } else {
        let mut parts = name.split('/');
        let class = parts.next()?;
        class.parse::<LesionClass>().ok()?;
        match parts.next()? {
            "global" => Some(Block::Global),
            "local" => Some(Block::Local),
            _ => None,
        }
    }
}

/// The eight feature-set configurations compared by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelConfig {
    Marshall,
    Global,
    Local,
    GlobalLocal,
    MarshallClinical,
    GlobalClinical,
    LocalClinical,
    GlobalLocalClinical,
}

impl ModelConfig {
    pub const ALL: [ModelConfig; 8] = [
        ModelConfig::Marshall,
        ModelConfig::Global,
        ModelConfig::Local,
        ModelConfig::GlobalLocal,
        ModelConfig::MarshallClinical,
        ModelConfig::GlobalClinical,
        ModelConfig::LocalClinical,
        ModelConfig::GlobalLocalClinical,
    ];

    pub fn blocks(self) -> &'static [Block] {
        use Block::*;
        match self {
            ModelConfig::Marshall => &[Marshall],
            ModelConfig::Global => &[Global],
            ModelConfig::Local => &[Local],
            ModelConfig::GlobalLocal => &[Global, Local],
            ModelConfig::MarshallClinical => &[Marshall, Clinical],
            ModelConfig::GlobalClinical => &[Global, Clinical],
            ModelConfig::LocalClinical => &[Local, Clinical],
            ModelConfig::GlobalLocalClinical => &[Global, Local, Clinical],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelConfig::Marshall => "marshall",
            ModelConfig::Global => "global",
            ModelConfig::Local => "local",
            ModelConfig::GlobalLocal => "global+local",
            ModelConfig::MarshallClinical => "marshall+clinical",
            ModelConfig::GlobalClinical => "global+clinical",
            ModelConfig::LocalClinical => "local+clinical",
            ModelConfig::GlobalLocalClinical => "global+local+clinical",
        }
    }

    pub fn needs_imaging(self) -> bool {
        self.blocks().iter().any(|b| matches!(b, Block::Global | Block::Local))
    }

    pub fn schema(self) -> FeatureSchema {
        FeatureSchema::for_blocks(self.blocks(), false)
    }

    pub fn schema_with(self, include_max: bool) -> FeatureSchema {
        FeatureSchema::for_blocks(self.blocks(), include_max)
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelConfig {
    type Err = Error;

    /// Accepts the blocks in any order, e.g. `local+global` or `clinical+local`.
    fn from_str(s: &str) -> Result<Self> {
        let mut blocks = Vec::new();
        for part in s.split('+').map(str::trim) {
            blocks.push(match part.to_ascii_lowercase().as_str() {
                "marshall" => Block::Marshall,
                "global" => Block::Global,
                "local" => Block::Local,
                "clinical" => Block::Clinical,
                _ => return Err(Error::UnknownConfig(s.to_string())),
            });
        }
        blocks.sort();
        blocks.dedup();
        ModelConfig::ALL
            .into_iter()
            .find(|c| c.blocks() == blocks.as_slice())
            .ok_or_else(|| Error::UnknownConfig(s.to_string()))
    }
}

impl TryFrom<String> for ModelConfig {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelConfig> for String {
    fn from(c: ModelConfig) -> String {
        c.name().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_column_counts() {
        let counts: Vec<usize> = ModelConfig::ALL.iter().map(|c| c.schema().len()).collect();
        assert_eq!(counts, vec![1, 20, 256, 276, 6, 25, 261, 281]);
        assert_eq!(ModelConfig::Global.schema_with(true).len(), 24);
    }

    #[test]
    fn names_are_stable() {
        let s = ModelConfig::GlobalLocal.schema();
        assert_eq!(s.features()[0].name, "IPH/global/count");
        assert!(s.index_of("EAH/local/1/1/2").is_some());
        assert_eq!(
            s.index_of("EAH/local/1/1/2").unwrap(),
            20 + 64 + cuboid_offset(1, 1, 2)
        );
        let names: Vec<_> = s.names().collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
    }

    #[test]
    fn parse_configs() {
        for c in ModelConfig::ALL {
            assert_eq!(c.name().parse::<ModelConfig>().unwrap(), c);
        }
        assert_eq!("local+global".parse::<ModelConfig>().unwrap(), ModelConfig::GlobalLocal);
        assert_eq!("clinical + local".parse::<ModelConfig>().unwrap(), ModelConfig::LocalClinical);
        assert!("marshall+local".parse::<ModelConfig>().is_err());
        assert!("clinical".parse::<ModelConfig>().is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let f = FeatureSpec { name: "age".into(), block: Block::Clinical };
        assert!(FeatureSchema::new(vec![f.clone(), f]).is_err());
    }
}
