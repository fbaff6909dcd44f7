use super::crops::CropBox;
use super::{FeatureKind, FeatureVector, EMPTY_MASK_FEATURE};
use crate::error::{Error, Result};
use crate::tensor::{ceil_div, linear_index, voxel_count, Dims, FeaturePyramid, MaskVolume, StageMap};

/// Max-pool a mask onto a grid `factor` times coarser (ceil size): a cell is
/// foreground iff any voxel it covers is.
pub fn downsample_mask_to_stage(mask: &MaskVolume, factor: usize) -> Result<MaskVolume> {
    if factor == 0 {
        return Err(Error::invalid("downsample factor must be at least 1"));
    }
    let dims = mask.dims();
    let out_dims = dims.map(|d| ceil_div(d, factor));
    let mut out = vec![0u8; voxel_count(out_dims)];
    for (i, &v) in mask.data().iter().enumerate() {
        if v == 1 {
            let [z, y, x] = crate::tensor::coords(dims, i);
            out[linear_index(out_dims, z / factor, y / factor, x / factor)] = 1;
        }
    }
    MaskVolume::new(out_dims, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMean {
    pub values: Vec<f64>,
    /// No foreground cell: `values` is the unmasked grid mean.
    pub fallback: bool,
}

/// Per-channel mean over foreground cells of `mask`.
pub fn masked_mean(stage: &StageMap, mask: &MaskVolume) -> Result<MaskedMean> {
    if stage.grid != mask.dims() {
        return Err(Error::Shape(format!(
            "stage grid {:?} does not match mask {:?}",
            stage.grid,
            mask.dims()
        )));
    }
    let m = mask.data();
    let fallback = m.iter().all(|&v| v == 0);
    let values = (0..stage.channels)
        .map(|c| {
            let (sum, count) = stage
                .channel(c)
                .iter()
                .zip(m)
                .filter(|(_, &on)| fallback || on == 1)
                .fold((0.0f64, 0usize), |(s, n), (&v, _)| (s + f64::from(v), n + 1));
            sum / count as f64
        })
        .collect();
    Ok(MaskedMean { values, fallback })
}

fn sub_grid<T: Copy>(data: &[T], channels: usize, dims: Dims, lo: [usize; 3], hi: [usize; 3]) -> Vec<T> {
    let n = voxel_count(dims);
    let mut out = Vec::with_capacity(channels * (0..3).map(|a| hi[a] - lo[a]).product::<usize>());
    for c in 0..channels {
        for z in lo[0]..hi[0] {
            for y in lo[1]..hi[1] {
                for x in lo[2]..hi[2] {
                    out.push(data[c * n + linear_index(dims, z, y, x)]);
                }
            }
        }
    }
    out
}

/// Restrict the mask to `crop` (zero elsewhere), max-pool it onto each
/// stage, and average each stage's channels over the pooled foreground
/// inside the crop's stage-grid footprint `[floor(o/f), floor((o+s-1)/f)]`.
fn crop_vector(pyramid: &FeaturePyramid, mask: &MaskVolume, crop: &CropBox) -> Result<Vec<f64>> {
    let dims = mask.dims();
    let mut restricted = MaskVolume::zeros(dims)?;
    let end = crop.end();
    for z in crop.origin[0]..end[0] {
        for y in crop.origin[1]..end[1] {
            for x in crop.origin[2]..end[2] {
                if mask.get(z, y, x) {
                    restricted.set(z, y, x, true);
                }
            }
        }
    }
    let mut out = Vec::new();
    for stage in pyramid.stages() {
        let f = stage.downsample;
        let stage_mask = downsample_mask_to_stage(&restricted, f)?;
        let lo = crop.origin.map(|o| o / f);
        let hi = [0, 1, 2].map(|a| (end[a] - 1) / f + 1);
        let grid = [0, 1, 2].map(|a| hi[a] - lo[a]);
        let cropped = StageMap::new(
            stage.stage,
            f,
            stage.channels,
            grid,
            sub_grid(&stage.data, stage.channels, stage.grid, lo, hi),
        )?;
        let cropped_mask = MaskVolume::new(grid, sub_grid(stage_mask.data(), 1, stage.grid, lo, hi))?;
        out.extend(masked_mean(&cropped, &cropped_mask)?.values);
    }
    Ok(out)
}

/// One deep feature vector per crop: stage means `PE‖SB1‖…‖SB4` followed by
/// the `empty_mask` indicator.
pub fn deep_feature_vectors(
    scan_id: &str,
    pyramid: &FeaturePyramid,
    mask: &MaskVolume,
    crops: &[CropBox],
) -> Result<Vec<FeatureVector>> {
    if pyramid.volume_dims() != mask.dims() {
        return Err(Error::Shape(format!(
            "pyramid built for {:?} but mask is {:?}",
            pyramid.volume_dims(),
            mask.dims()
        )));
    }
    let mut names = Vec::new();
    let mut slices = Vec::new();
    for st in pyramid.stages() {
        let start = names.len();
        names.extend((0..st.channels).map(|c| format!("{}_{c:03}", st.stage)));
        slices.push((st.stage, start..names.len()));
    }
    names.push(EMPTY_MASK_FEATURE.to_string());
    let empty = if mask.is_empty() { 1.0 } else { 0.0 };

    crops
        .iter()
        .map(|crop| {
            let mut values = crop_vector(pyramid, mask, crop)?;
            values.push(empty);
            let fv = FeatureVector {
                scan_id: scan_id.to_string(),
                kind: FeatureKind::Deep,
                names: names.clone(),
                values,
                stage_slices: slices.clone(),
            };
            fv.validate()?;
            Ok(fv)
        })
        .collect()
}
