use serde::{Deserialize, Serialize};

use super::components::{centroid, connected_components};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{Dims, MaskVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropBox {
    pub origin: [usize; 3],
    pub size: [usize; 3],
}

impl CropBox {
    pub fn full(dims: Dims) -> Self {
        Self {
            origin: [0; 3],
            size: dims,
        }
    }

    pub fn end(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.origin[a] + self.size[a])
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.origin[a] && p[a] < self.origin[a] + self.size[a])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CropConfig {
    pub k: usize,
    pub size: [usize; 3],
    pub jitter: usize,
}

impl Default for CropConfig {
    fn default() -> Self {
        Self {
            k: 8,
            size: [16; 3],
            jitter: 2,
        }
    }
}

/// `k` crops around the centroid of the largest mask component.
///
/// Crop 0 is unjittered. Crops `1..k` add a uniform integer offset in
/// `[-jitter, jitter]` per axis, drawn `z, y, x` from the stream
/// `(seed, "crops", 0)`. Every box is clamped into the volume. An empty mask
/// centres on the volume midpoint instead.
pub fn tumor_crops(mask: &MaskVolume, cfg: &CropConfig, seed: u64) -> Result<Vec<CropBox>> {
    let dims = mask.dims();
    if cfg.k == 0 {
        return Err(Error::invalid("crop count k must be at least 1"));
    }
    if (0..3).any(|a| cfg.size[a] == 0 || cfg.size[a] > dims[a]) {
        return Err(Error::invalid(format!(
            "crop size {:?} does not fit dims {dims:?}",
            cfg.size
        )));
    }
    let components = connected_components(mask);
    let center: [i64; 3] = match components.first() {
        Some(c) => centroid(c, dims).map(|v| (v + 0.5).floor() as i64),
        None => dims.map(|d| (d / 2) as i64),
    };

    let mut rng = SplitMix64::for_role(seed, "crops", 0);
    let r = cfg.jitter as i64;
    let crops = (0..cfg.k)
        .map(|i| {
            let offset = if i == 0 {
                [0i64; 3]
            } else {
                [0; 3].map(|_| rng.range_inclusive(-r, r))
            };
            let mut origin = [0usize; 3];
            for a in 0..3 {
                let o = center[a] - (cfg.size[a] / 2) as i64 + offset[a];
                origin[a] = o.clamp(0, (dims[a] - cfg.size[a]) as i64) as usize;
            }
            CropBox {
                origin,
                size: cfg.size,
            }
        })
        .collect();
    Ok(crops)
}
