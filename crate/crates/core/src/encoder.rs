//! A small fixed-weight hierarchical encoder producing the five-stage feature
//! pyramid (`PE`, `SB1..SB4`) from a volume.
//!
//! `PE`: `patch³` average pool, then a per-cell linear map `1 → widths[0]`
//! followed by `tanh`. Each `SBk`: `2³` average pool of the previous stage
//! (partial windows at the border average what is present), then a linear map
//! `widths[k-1] → widths[k]` and `tanh`. Weights and biases are drawn from
//! `uniform(-1/√fan_in, 1/√fan_in)` on the stream `(seed, "encoder", stage)`,
//! weights row-major first, then biases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{ceil_div, linear_index, voxel_count, Dims, FeaturePyramid, StageId, StageMap, Volume3D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyEncoderConfig {
    pub patch_size: usize,
    pub widths: [usize; 5],
    pub seed: u64,
}

impl Default for ToyEncoderConfig {
    fn default() -> Self {
        Self {
            patch_size: 2,
            widths: [8, 8, 16, 32, 64],
            seed: 7,
        }
    }
}

impl ToyEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("patch_size and widths must be positive"));
        }
        if self.widths.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("stage widths must be non-decreasing"));
        }
        Ok(())
    }

    pub fn total_width(&self) -> usize {
        self.widths.iter().sum()
    }
}

struct Dense {
    in_ch: usize,
    out_ch: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn seeded(seed: u64, stage: usize, in_ch: usize, out_ch: usize) -> Self {
        let mut rng = SplitMix64::for_role(seed, "encoder", stage as u64);
        let bound = 1.0 / (in_ch as f64).sqrt();
        let weight = (0..in_ch * out_ch).map(|_| rng.uniform(-bound, bound)).collect();
        let bias = (0..out_ch).map(|_| rng.uniform(-bound, bound)).collect();
        Self {
            in_ch,
            out_ch,
            weight,
            bias,
        }
    }

    /// Apply `tanh(W·x + b)` at every cell of a channel-major grid.
    fn apply(&self, input: &[f64], cells: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.out_ch * cells];
        for o in 0..self.out_ch {
            let row = &self.weight[o * self.in_ch..(o + 1) * self.in_ch];
            for cell in 0..cells {
                let mut acc = self.bias[o];
                for (i, w) in row.iter().enumerate() {
                    acc += w * input[i * cells + cell];
                }
                out[o * cells + cell] = acc.tanh();
            }
        }
        out
    }
}

/// Average pool a channel-major grid by `factor` per axis with ceil output
/// size.
fn avg_pool(input: &[f64], channels: usize, dims: Dims, factor: usize) -> (Vec<f64>, Dims) {
    let out_dims = dims.map(|d| ceil_div(d, factor));
    let n_in = voxel_count(dims);
    let n_out = voxel_count(out_dims);
    let mut out = vec![0.0; channels * n_out];
    for c in 0..channels {
        let src = &input[c * n_in..(c + 1) * n_in];
        for oz in 0..out_dims[0] {
            for oy in 0..out_dims[1] {
                for ox in 0..out_dims[2] {
                    let (mut sum, mut count) = (0.0, 0usize);
                    for z in oz * factor..((oz + 1) * factor).min(dims[0]) {
                        for y in oy * factor..((oy + 1) * factor).min(dims[1]) {
                            for x in ox * factor..((ox + 1) * factor).min(dims[2]) {
                                sum += src[linear_index(dims, z, y, x)];
                                count += 1;
                            }
                        }
                    }
                    out[c * n_out + linear_index(out_dims, oz, oy, ox)] = sum / count as f64;
                }
            }
        }
    }
    (out, out_dims)
}

pub fn toy_encode(volume: &Volume3D, cfg: &ToyEncoderConfig) -> Result<FeaturePyramid> {
    cfg.validate()?;
    let dims = volume.dims();
    if dims.iter().any(|&d| d % cfg.patch_size != 0) {
        return Err(Error::invalid(format!(
            "patch size {} does not divide volume dims {dims:?}",
            cfg.patch_size
        )));
    }
    let input: Vec<f64> = volume.data().iter().map(|&v| f64::from(v)).collect();
    let (mut current, mut grid) = avg_pool(&input, 1, dims, cfg.patch_size);
    let mut in_ch = 1;
    let mut factor = cfg.patch_size;
    let mut stages = Vec::with_capacity(5);
    for (s, stage) in StageId::ALL.into_iter().enumerate() {
        if s > 0 {
            let (pooled, g) = avg_pool(&current, in_ch, grid, 2);
            current = pooled;
            grid = g;
            factor *= 2;
        }
        let layer = Dense::seeded(cfg.seed, s, in_ch, cfg.widths[s]);
        current = layer.apply(&current, voxel_count(grid));
        in_ch = cfg.widths[s];
        let data = current.iter().map(|&v| v as f32).collect();
        stages.push(StageMap::new(stage, factor, in_ch, grid, data)?);
        // Later stages consume the stored f32 values.
        current = stages[s].data.iter().map(|&v| f64::from(v)).collect();
    }
    FeaturePyramid::new(dims, stages)
}
