//! Dense volumetric grids shared by every stage of the pipeline.
//!
//! All grids use `(z, y, x)` axis order with `x` fastest. Multi-channel grids
//! are channel-major: the whole `(z, y, x)` block of channel 0, then channel 1,
//! and so on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Dims = [usize; 3];

pub fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

#[inline]
pub fn linear_index(dims: Dims, z: usize, y: usize, x: usize) -> usize {
    (z * dims[1] + y) * dims[2] + x
}

#[inline]
pub fn coords(dims: Dims, idx: usize) -> [usize; 3] {
    let x = idx % dims[2];
    let y = (idx / dims[2]) % dims[1];
    let z = idx / (dims[1] * dims[2]);
    [z, y, x]
}

fn check_dims(dims: Dims) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!("dims must be positive, got {dims:?}")));
    }
    Ok(())
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::PayloadLengthMismatch { expected, actual });
    }
    Ok(())
}

fn check_finite(data: &[f32]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Scalar intensity volume with physical voxel spacing in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: Dims,
    spacing: [f32; 3],
    data: Vec<f32>,
}

impl Volume3D {
    pub fn new(dims: Dims, spacing: [f32; 3], data: Vec<f32>) -> Result<Self> {
        check_dims(dims)?;
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::Shape(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        check_len(voxel_count(dims), data.len())?;
        check_finite(&data)?;
        Ok(Self {
            dims,
            spacing,
            data,
        })
    }

    pub fn filled(dims: Dims, spacing: [f32; 3], value: f32) -> Result<Self> {
        Self::new(dims, spacing, vec![value; voxel_count(dims)])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        self.data[linear_index(self.dims, z, y, x)]
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

/// Binary segmentation mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskVolume {
    dims: Dims,
    data: Vec<u8>,
}

impl MaskVolume {
    pub fn new(dims: Dims, data: Vec<u8>) -> Result<Self> {
        check_dims(dims)?;
        check_len(voxel_count(dims), data.len())?;
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::Shape(format!("mask value {v} outside {{0,1}}")));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::new(dims, vec![0; voxel_count(dims)])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.data[linear_index(self.dims, z, y, x)] == 1
    }

    pub fn set(&mut self, z: usize, y: usize, x: usize, on: bool) {
        let i = linear_index(self.dims, z, y, x);
        self.data[i] = u8::from(on);
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }
}

/// Per-voxel two-class logits: channel 0 = background, channel 1 = tumor.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVolume {
    dims: Dims,
    data: Vec<f32>,
}

impl LogitVolume {
    pub const CHANNELS: usize = 2;

    pub fn new(dims: Dims, data: Vec<f32>) -> Result<Self> {
        check_dims(dims)?;
        check_len(Self::CHANNELS * voxel_count(dims), data.len())?;
        check_finite(&data)?;
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// `(background, tumor)` logits at linear voxel index `idx`.
    pub fn pair(&self, idx: usize) -> [f64; 2] {
        let n = voxel_count(self.dims);
        [f64::from(self.data[idx]), f64::from(self.data[n + idx])]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StageId {
    PE,
    SB1,
    SB2,
    SB3,
    SB4,
}

impl StageId {
    pub const ALL: [StageId; 5] = [
        StageId::PE,
        StageId::SB1,
        StageId::SB2,
        StageId::SB3,
        StageId::SB4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageId::PE => "PE",
            StageId::SB1 => "SB1",
            StageId::SB2 => "SB2",
            StageId::SB3 => "SB3",
            StageId::SB4 => "SB4",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StageId::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage `{s}`")))
    }
}

/// One encoder stage: a `channels × grid` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct StageMap {
    pub stage: StageId,
    pub downsample: usize,
    pub channels: usize,
    pub grid: Dims,
    pub data: Vec<f32>,
}

impl StageMap {
    pub fn new(
        stage: StageId,
        downsample: usize,
        channels: usize,
        grid: Dims,
        data: Vec<f32>,
    ) -> Result<Self> {
        check_dims(grid)?;
        if downsample == 0 || channels == 0 {
            return Err(Error::Shape(
                "stage downsample and channels must be positive".into(),
            ));
        }
        check_len(channels * voxel_count(grid), data.len())?;
        check_finite(&data)?;
        Ok(Self {
            stage,
            downsample,
            channels,
            grid,
            data,
        })
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = voxel_count(self.grid);
        &self.data[c * n..(c + 1) * n]
    }
}

/// The five encoder stages `PE, SB1..SB4` of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    volume_dims: Dims,
    stages: Vec<StageMap>,
}

pub fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

impl FeaturePyramid {
    pub fn new(volume_dims: Dims, stages: Vec<StageMap>) -> Result<Self> {
        if stages.len() != StageId::ALL.len() {
            return Err(Error::Shape(format!(
                "pyramid needs 5 stages, got {}",
                stages.len()
            )));
        }
        for (i, (st, expected)) in stages.iter().zip(StageId::ALL).enumerate() {
            if st.stage != expected {
                return Err(Error::Shape(format!(
                    "stage {i} is {} but {expected} was expected",
                    st.stage
                )));
            }
            let want = volume_dims.map(|d| ceil_div(d, st.downsample));
            if st.grid != want {
                return Err(Error::Shape(format!(
                    "stage {} grid {:?} does not match ceil(volume / {}) = {want:?}",
                    st.stage, st.grid, st.downsample
                )));
            }
            if i > 0 {
                let prev = &stages[i - 1];
                if st.downsample <= prev.downsample {
                    return Err(Error::Shape(
                        "downsample factors must strictly increase".into(),
                    ));
                }
                if st.channels < prev.channels {
                    return Err(Error::Shape(
                        "channel counts must be non-decreasing".into(),
                    ));
                }
            }
        }
        Ok(Self {
            volume_dims,
            stages,
        })
    }

    pub fn volume_dims(&self) -> Dims {
        self.volume_dims
    }

    pub fn stages(&self) -> &[StageMap] {
        &self.stages
    }

    pub fn stage(&self, id: StageId) -> &StageMap {
        &self.stages[id.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let dims = [3, 4, 5];
        for i in 0..voxel_count(dims) {
            let [z, y, x] = coords(dims, i);
            assert_eq!(linear_index(dims, z, y, x), i);
        }
    }

    #[test]
    fn volume_rejects_bad_inputs() {
        assert!(Volume3D::new([1, 1, 2], [1.0; 3], vec![0.0]).is_err());
        assert!(Volume3D::new([1, 1, 1], [0.0, 1.0, 1.0], vec![0.0]).is_err());
        assert!(matches!(
            Volume3D::new([1, 1, 1], [1.0; 3], vec![f32::NAN]),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn mask_rejects_non_binary() {
        assert!(MaskVolume::new([1, 1, 2], vec![0, 2]).is_err());
    }

    #[test]
    fn pyramid_checks_order_and_grids() {
        let mk = |stage, f, c, g: usize| {
            StageMap::new(stage, f, c, [g; 3], vec![0.0; c * g * g * g]).unwrap()
        };
        let good = vec![
            mk(StageId::PE, 2, 2, 4),
            mk(StageId::SB1, 4, 2, 2),
            mk(StageId::SB2, 8, 3, 1),
            mk(StageId::SB3, 16, 3, 1),
            mk(StageId::SB4, 32, 4, 1),
        ];
        assert!(FeaturePyramid::new([8; 3], good.clone()).is_ok());
        let mut swapped = good.clone();
        swapped.swap(0, 1);
        assert!(FeaturePyramid::new([8; 3], swapped).is_err());
        assert!(FeaturePyramid::new([16; 3], good).is_err());
    }
}
