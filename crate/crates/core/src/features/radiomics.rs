//! Radiomics-lite: 14 first-order intensity statistics over the masked
//! voxels and 12 voxel-based shape descriptors.
//!
//! Moments are population moments (divide by n); kurtosis is excess
//! kurtosis. Percentiles interpolate linearly between order statistics at
//! position `q·(n−1)`. Entropy (base 2) and uniformity use 64 equal bins on
//! `[0, 1]` with the last bin closed on the right. Surface area counts
//! exposed voxel faces, each weighted by its physical area.

use super::{FeatureKind, FeatureVector, EMPTY_MASK_FEATURE};
use crate::error::{Error, Result};
use crate::tensor::{coords, linear_index, MaskVolume, Volume3D};

pub const RADIOMICS_NAMES: [&str; 26] = [
    "fo_mean",
    "fo_variance",
    "fo_skewness",
    "fo_kurtosis",
    "fo_min",
    "fo_max",
    "fo_median",
    "fo_p10",
    "fo_p90",
    "fo_iqr",
    "fo_rms",
    "fo_energy",
    "fo_entropy",
    "fo_uniformity",
    "shape_voxel_count",
    "shape_volume_mm3",
    "shape_surface_mm2",
    "shape_surface_to_volume",
    "shape_sphericity",
    "shape_bbox_z_mm",
    "shape_bbox_y_mm",
    "shape_bbox_x_mm",
    "shape_bbox_diagonal_mm",
    "shape_centroid_offset_z",
    "shape_centroid_offset_y",
    "shape_centroid_offset_x",
];

const HIST_BINS: usize = 64;

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn first_order(values: &[f64]) -> [f64; 14] {
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let constant = sorted[0] == sorted[sorted.len() - 1];
    let mean = if constant { sorted[0] } else { values.iter().sum::<f64>() / n };
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skew, kurt) = if values.len() < 2 || m2 == 0.0 {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    let variance = if values.len() < 2 { 0.0 } else { m2 };

    let energy: f64 = values.iter().map(|v| v * v).sum();

    let mut hist = [0usize; HIST_BINS];
    for &v in values {
        let b = ((v * HIST_BINS as f64).floor().max(0.0) as usize).min(HIST_BINS - 1);
        hist[b] += 1;
    }
    let (mut entropy, mut uniformity) = (0.0, 0.0);
    for &h in &hist {
        if h > 0 {
            let p = h as f64 / n;
            entropy -= p * p.log2();
            uniformity += p * p;
        }
    }

    [
        mean,
        variance,
        skew,
        kurt,
        sorted[0],
        sorted[sorted.len() - 1],
        percentile(&sorted, 0.5),
        percentile(&sorted, 0.1),
        percentile(&sorted, 0.9),
        percentile(&sorted, 0.75) - percentile(&sorted, 0.25),
        (energy / n).sqrt(),
        energy,
        // -0.0 for a single occupied bin
        entropy + 0.0,
        uniformity,
    ]
}

fn shape(mask: &MaskVolume, spacing: [f64; 3]) -> [f64; 12] {
    let dims = mask.dims();
    let face_area = [
        spacing[1] * spacing[2],
        spacing[0] * spacing[2],
        spacing[0] * spacing[1],
    ];
    let (mut count, mut area) = (0usize, 0.0f64);
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut csum = [0.0f64; 3];
    for (i, &m) in mask.data().iter().enumerate() {
        if m == 0 {
            continue;
        }
        count += 1;
        let p = coords(dims, i);
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
            csum[a] += p[a] as f64;
            for step in [-1i64, 1] {
                let q = p[a] as i64 + step;
                let exposed = if q < 0 || q >= dims[a] as i64 {
                    true
                } else {
                    let mut n = p;
                    n[a] = q as usize;
                    mask.data()[linear_index(dims, n[0], n[1], n[2])] == 0
                };
                if exposed {
                    area += face_area[a];
                }
            }
        }
    }
    let volume = count as f64 * spacing.iter().product::<f64>();
    let bbox = [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as f64 * spacing[a]);
    let diagonal = bbox.iter().map(|b| b * b).sum::<f64>().sqrt();
    let offset = [0, 1, 2].map(|a| {
        let centre = (dims[a] as f64 - 1.0) / 2.0;
        (csum[a] / count as f64 - centre) / dims[a] as f64
    });
    let sphericity = (36.0 * std::f64::consts::PI * volume * volume).cbrt() / area;
    [
        count as f64,
        volume,
        area,
        area / volume,
        sphericity,
        bbox[0],
        bbox[1],
        bbox[2],
        diagonal,
        offset[0],
        offset[1],
        offset[2],
    ]
}

/// Radiomics-lite vector over the masked region; an empty mask yields all
/// zeros with `empty_mask = 1`.
pub fn radiomics_lite(scan_id: &str, volume: &Volume3D, mask: &MaskVolume) -> Result<FeatureVector> {
    if volume.dims() != mask.dims() {
        return Err(Error::Shape(format!(
            "volume {:?} and mask {:?} differ",
            volume.dims(),
            mask.dims()
        )));
    }
    let mut names: Vec<String> = RADIOMICS_NAMES.iter().map(|s| s.to_string()).collect();
    names.push(EMPTY_MASK_FEATURE.to_string());

    let mut values = Vec::with_capacity(names.len());
    if mask.is_empty() {
        values.resize(RADIOMICS_NAMES.len(), 0.0);
        values.push(1.0);
    } else {
        let masked: Vec<f64> = volume
            .data()
            .iter()
            .zip(mask.data())
            .filter(|(_, &m)| m == 1)
            .map(|(&v, _)| f64::from(v))
            .collect();
        values.extend(first_order(&masked));
        values.extend(shape(mask, volume.spacing().map(f64::from)));
        values.push(0.0);
    }
    let fv = FeatureVector {
        scan_id: scan_id.to_string(),
        kind: FeatureKind::Radiomics,
        names,
        values,
        stage_slices: Vec::new(),
    };
    fv.validate()?;
    Ok(fv)
}
