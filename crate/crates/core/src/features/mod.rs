//! Scan-level feature vectors: tumor-region aggregated deep features and
//! radiomics-lite descriptors.

mod components;
mod crops;
mod deep;
mod radiomics;

use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use components::{centroid, connected_components, Component};
pub use crops::{tumor_crops, CropBox, CropConfig};
pub use deep::{deep_feature_vectors, downsample_mask_to_stage, masked_mean, MaskedMean};
pub use radiomics::{radiomics_lite, RADIOMICS_NAMES};

use crate::error::{Error, Result};
use crate::tensor::StageId;

pub const EMPTY_MASK_FEATURE: &str = "empty_mask";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Deep,
    Radiomics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub scan_id: String,
    pub kind: FeatureKind,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// Deep vectors only: contiguous index range of each encoder stage.
    pub stage_slices: Vec<(StageId, Range<usize>)>,
}

impl FeatureVector {
    pub fn validate(&self) -> Result<()> {
        if self.names.len() != self.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.names.len(),
                actual: self.values.len(),
            });
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::invalid(format!("duplicate feature name `{dup}`")));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if self.kind == FeatureKind::Deep {
            let stages: Vec<StageId> = self.stage_slices.iter().map(|(s, _)| *s).collect();
            if stages != StageId::ALL {
                return Err(Error::invalid("deep vector must cover stages PE..SB4"));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

/// Recover stage slices from `PE_000`-style column names. Columns that do not
/// carry a stage prefix are ignored; every stage must be present and
/// contiguous.
pub fn stage_slices_from_names(names: &[String]) -> Result<Vec<(StageId, Range<usize>)>> {
    let mut out: Vec<(StageId, Range<usize>)> = Vec::new();
    for (i, n) in names.iter().enumerate() {
        let Some((prefix, _)) = n.split_once('_') else {
            continue;
        };
        let Ok(stage) = prefix.parse::<StageId>() else {
            continue;
        };
        match out.last_mut() {
            Some((s, r)) if *s == stage && r.end == i => r.end = i + 1,
            _ => {
                if out.iter().any(|(s, _)| *s == stage) {
                    return Err(Error::invalid(format!("stage {stage} columns are not contiguous")));
                }
                out.push((stage, i..i + 1));
            }
        }
    }
    let found: Vec<StageId> = out.iter().map(|(s, _)| *s).collect();
    if found != StageId::ALL {
        return Err(Error::invalid(format!(
            "missing stage slice metadata: found stages {found:?}"
        )));
    }
    Ok(out)
}
