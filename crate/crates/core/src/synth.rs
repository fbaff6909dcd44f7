//! Deterministic synthetic cohorts standing in for CT scans and their
//! segmentation-model outputs.
//!
//! Each scan is a noisy background with additive ellipsoidal "tumor" blobs.
//! The predicted mask is the union of blobs. Two-class logits encode the local
//! blob fraction, with optional confidently-wrong tumor evidence injected into
//! OOD scans.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{CohortLabel, CohortManifest, ScanRecord};
use crate::ovf::write_ovf;
use crate::rng::SplitMix64;
use crate::tensor::{coords, linear_index, voxel_count, Dims, LogitVolume, MaskVolume, Volume3D};

fn default_dims() -> Dims {
    [32, 32, 32]
}

fn default_spacing() -> [f32; 3] {
    [1.0; 3]
}

fn default_logit_scale() -> f64 {
    4.0
}

fn default_logit_noise() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub cohort_name: String,
    pub label: CohortLabel,
    pub n_scans: usize,
    #[serde(default = "default_dims")]
    pub dims: Dims,
    #[serde(default = "default_spacing")]
    pub spacing: [f32; 3],
    /// Inclusive blob-count range.
    pub blob_count: [usize; 2],
    /// Per-axis ellipsoid radius range, voxels.
    pub blob_radius: [f64; 2],
    pub texture_mean: f64,
    pub texture_std: f64,
    pub background_mean: f64,
    pub background_std: f64,
    #[serde(default)]
    pub logit_miscalibration: f64,
    #[serde(default = "default_logit_scale")]
    pub logit_scale: f64,
    #[serde(default = "default_logit_noise")]
    pub logit_noise: f64,
    pub seed: u64,
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("cohort `{}`: {m}", self.cohort_name)));
        if self.dims.iter().any(|&d| d == 0) {
            return bad("dims must be positive");
        }
        if self.blob_count[0] > self.blob_count[1] {
            return bad("blob_count range is reversed");
        }
        let [rmin, rmax] = self.blob_radius;
        if !(rmin > 0.0 && rmin <= rmax && rmax.is_finite()) {
            return bad("blob_radius must satisfy 0 < min <= max");
        }
        let reach = rmax.ceil() as usize;
        if self.dims.iter().any(|&d| 2 * reach + 1 > d) {
            return bad("blob radius range does not fit inside dims");
        }
        if self.texture_std < 0.0 || self.background_std < 0.0 || self.logit_noise < 0.0 {
            return bad("standard deviations must be non-negative");
        }
        if self.logit_miscalibration < 0.0 {
            return bad("logit_miscalibration must be non-negative");
        }
        Ok(())
    }
}

/// Clip to `[lo, hi]` and map affinely onto `[0, 1]`.
pub fn hu_window_normalize(volume: &Volume3D, lo: f32, hi: f32) -> Result<Volume3D> {
    if !(lo < hi) {
        return Err(Error::invalid(format!("window lo {lo} must be below hi {hi}")));
    }
    let scale = hi - lo;
    let data = volume
        .data()
        .iter()
        .map(|&v| (v.clamp(lo, hi) - lo) / scale)
        .collect();
    Volume3D::new(volume.dims(), volume.spacing(), data)
}

fn axis_origins(dim: usize, window: usize, stride: usize) -> Vec<usize> {
    let last = dim - window;
    let mut out: Vec<usize> = (0..).map(|k| k * stride).take_while(|&o| o < last).collect();
    out.push(last);
    out
}

/// Window origins for sliding-window inference, lexicographic in `(z, y, x)`.
pub fn sliding_window_origins(dims: Dims, window: Dims, overlap: f64) -> Result<Vec<[usize; 3]>> {
    if (0..3).any(|a| window[a] == 0 || window[a] > dims[a]) {
        return Err(Error::invalid(format!(
            "window {window:?} does not fit dims {dims:?}"
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid("overlap fraction must be in [0, 1)"));
    }
    let axes: Vec<Vec<usize>> = (0..3)
        .map(|a| {
            let stride = ((window[a] as f64 * (1.0 - overlap)).floor() as usize).max(1);
            axis_origins(dims[a], window[a], stride)
        })
        .collect();
    let mut out = Vec::with_capacity(axes.iter().map(Vec::len).product());
    for &z in &axes[0] {
        for &y in &axes[1] {
            for &x in &axes[2] {
                out.push([z, y, x]);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub center: [usize; 3],
    pub radii: [f64; 3],
}

impl Blob {
    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3)
            .map(|a| {
                let d = (p[a] as f64 - self.center[a] as f64) / self.radii[a];
                d * d
            })
            .sum::<f64>()
            <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScan {
    pub volume: Volume3D,
    pub mask: MaskVolume,
    pub logits: LogitVolume,
}

/// Fraction of the in-bounds 3×3×3 neighbourhood of every voxel that lies in
/// the mask.
fn neighbourhood_fraction(mask: &MaskVolume) -> Vec<f64> {
    let dims = mask.dims();
    let m = mask.data();
    (0..voxel_count(dims))
        .map(|i| {
            let [z, y, x] = coords(dims, i);
            let (mut hit, mut total) = (0u32, 0u32);
            for nz in z.saturating_sub(1)..=(z + 1).min(dims[0] - 1) {
                for ny in y.saturating_sub(1)..=(y + 1).min(dims[1] - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(dims[2] - 1) {
                        total += 1;
                        hit += u32::from(m[linear_index(dims, nz, ny, nx)]);
                    }
                }
            }
            f64::from(hit) / f64::from(total)
        })
        .collect()
}

/// Generate scan `index` of a cohort. Pure in `(spec, index)`.
///
/// Draw order from the per-scan stream: blob count, then per blob the three
/// radii and three centre coordinates, then one background normal per voxel,
/// one blob-texture normal per voxel, one logit-noise normal per voxel.
pub fn generate_scan(spec: &CohortSpec, index: u64) -> Result<SyntheticScan> {
    spec.validate()?;
    let dims = spec.dims;
    let n = voxel_count(dims);
    let mut rng = SplitMix64::for_role(spec.seed, "scan", index);

    let count = rng.range_inclusive(spec.blob_count[0] as i64, spec.blob_count[1] as i64);
    let blobs: Vec<Blob> = (0..count)
        .map(|_| {
            let radii = [0; 3].map(|_| rng.uniform(spec.blob_radius[0], spec.blob_radius[1]));
            let mut center = [0usize; 3];
            for a in 0..3 {
                let reach = radii[a].ceil() as i64;
                center[a] = rng.range_inclusive(reach, dims[a] as i64 - 1 - reach) as usize;
            }
            Blob { center, radii }
        })
        .collect();

    let inside: Vec<u8> = (0..n)
        .map(|i| {
            let p = coords(dims, i);
            u8::from(blobs.iter().any(|b| b.contains(p)))
        })
        .collect();
    let mask = MaskVolume::new(dims, inside)?;

    let background: Vec<f64> = (0..n)
        .map(|_| spec.background_mean + spec.background_std * rng.normal())
        .collect();
    let texture: Vec<f64> = (0..n)
        .map(|_| spec.texture_mean + spec.texture_std * rng.normal())
        .collect();
    let volume_data: Vec<f32> = (0..n)
        .map(|i| {
            let blob = if mask.data()[i] == 1 { texture[i] } else { 0.0 };
            (background[i] + blob).clamp(0.0, 1.0) as f32
        })
        .collect();
    let volume = Volume3D::new(dims, spec.spacing, volume_data)?;

    let frac = neighbourhood_fraction(&mask);
    let decoy = if spec.label == CohortLabel::Ood {
        spec.logit_miscalibration
    } else {
        0.0
    };
    let mut logit_data = vec![0f32; 2 * n];
    for i in 0..n {
        let mut t = spec.logit_scale * (2.0 * frac[i] - 1.0) + spec.logit_noise * rng.normal();
        if frac[i] > 0.0 {
            t += decoy;
        }
        logit_data[i] = (-0.5 * t) as f32;
        logit_data[n + i] = (0.5 * t) as f32;
    }
    let logits = LogitVolume::new(dims, logit_data)?;

    Ok(SyntheticScan {
        volume,
        mask,
        logits,
    })
}

pub fn scan_id(cohort_name: &str, index: usize) -> String {
    format!("{cohort_name}_{index:04}")
}

/// Generate every cohort into `out_dir` and write `out_dir/manifest.json`.
/// Artifact paths in the manifest are relative to `out_dir`.
pub fn make_cohort(specs: &[CohortSpec], out_dir: &Path, dataset_name: &str) -> Result<CohortManifest> {
    for s in specs {
        if s.n_scans == 0 {
            return Err(Error::EmptyCohort(s.cohort_name.clone()));
        }
        s.validate()?;
    }
    let jobs: Vec<(&CohortSpec, usize)> = specs
        .iter()
        .flat_map(|s| (0..s.n_scans).map(move |i| (s, i)))
        .collect();
    for s in specs {
        let dir = out_dir.join(&s.cohort_name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let records = jobs
        .par_iter()
        .map(|&(spec, i)| {
            let id = scan_id(&spec.cohort_name, i);
            let scan = generate_scan(spec, i as u64)?;
            let rel = |kind: &str| PathBuf::from(&spec.cohort_name).join(format!("{id}_{kind}.ovf"));
            let (v, m, l) = (rel("volume"), rel("mask"), rel("logits"));
            write_ovf(&scan.volume, &out_dir.join(&v))?;
            write_ovf(&scan.mask, &out_dir.join(&m))?;
            write_ovf(&scan.logits, &out_dir.join(&l))?;
            Ok(ScanRecord {
                scan_id: id,
                cohort_label: spec.label,
                cohort_name: spec.cohort_name.clone(),
                volume: v,
                mask: m,
                logits: l,
                pyramid: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = CohortManifest {
        dataset_name: dataset_name.to_string(),
        records,
        provenance: Some(serde_json::json!({
            "generator": "synthetic-cohorts",
            "seeds": specs.iter().map(|s| s.seed).collect::<Vec<_>>(),
            "specs": specs,
        })),
        base_dir: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
