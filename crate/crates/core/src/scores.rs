//! Training-free confidence baselines computed from per-voxel logits and
//! averaged over the predicted tumor region. Every scan score follows the
//! same direction: higher means more likely OOD.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{voxel_count, LogitVolume, MaskVolume};

/// Number of highest tumor-logit voxels scored when the mask is empty.
pub const FALLBACK_VOXELS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMethod {
    MaxSoftmax,
    MaxLogit,
    Energy,
    Entropy,
}

impl ScoreMethod {
    pub const ALL: [ScoreMethod; 4] = [
        ScoreMethod::MaxSoftmax,
        ScoreMethod::MaxLogit,
        ScoreMethod::Energy,
        ScoreMethod::Entropy,
    ];

    /// Display name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            ScoreMethod::MaxSoftmax => "MaxSoftmax",
            ScoreMethod::MaxLogit => "MaxLogits",
            ScoreMethod::Energy => "Energy",
            ScoreMethod::Entropy => "Entropy",
        }
    }
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ScoreMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreMethod::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s) || format!("{m:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown score method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub method: ScoreMethod,
    pub temperature: f64,
}

impl ScoreConfig {
    pub fn new(method: ScoreMethod) -> Self {
        Self {
            method,
            temperature: 1.0,
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid("temperature must be positive"));
        }
        self.temperature = t;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodScore {
    pub scan_id: String,
    pub method: String,
    pub value: f64,
    pub fallback_used: bool,
}

pub fn voxel_softmax(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e = logits.map(|l| (l - m).exp());
    let s = e[0] + e[1];
    e.map(|v| v / s)
}

/// `log Σ exp(lᵢ)` with max-shift.
pub fn logsumexp(logits: [f64; 2]) -> f64 {
    let (hi, lo) = if logits[0] >= logits[1] {
        (logits[0], logits[1])
    } else {
        (logits[1], logits[0])
    };
    hi + (lo - hi).exp().ln_1p()
}

/// Raw per-voxel statistic before the OOD sign convention is applied.
pub fn voxel_score(logits: [f64; 2], cfg: &ScoreConfig) -> f64 {
    match cfg.method {
        ScoreMethod::MaxSoftmax => {
            let p = voxel_softmax(logits);
            p[0].max(p[1])
        }
        ScoreMethod::MaxLogit => logits[0].max(logits[1]),
        ScoreMethod::Energy => {
            let t = cfg.temperature;
            -t * logsumexp(logits.map(|l| l / t))
        }
        ScoreMethod::Entropy => voxel_softmax(logits)
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum(),
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Voxels scored for a scan: the mask, or the top tumor-logit voxels when the
/// mask is empty (ties resolved by lower voxel index).
fn scored_voxels(logits: &LogitVolume, mask: &MaskVolume) -> (Vec<usize>, bool) {
    let selected: Vec<usize> = mask
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m == 1)
        .map(|(i, _)| i)
        .collect();
    if !selected.is_empty() {
        return (selected, false);
    }
    let mut all: Vec<usize> = (0..voxel_count(logits.dims())).collect();
    all.sort_by(|&a, &b| {
        logits.pair(b)[1]
            .total_cmp(&logits.pair(a)[1])
            .then(a.cmp(&b))
    });
    all.truncate(FALLBACK_VOXELS);
    (all, true)
}

pub fn scan_score(
    scan_id: &str,
    logits: &LogitVolume,
    mask: &MaskVolume,
    cfg: &ScoreConfig,
) -> Result<OodScore> {
    if logits.dims() != mask.dims() {
        return Err(Error::Shape(format!(
            "logits {:?} and mask {:?} differ",
            logits.dims(),
            mask.dims()
        )));
    }
    let (voxels, fallback_used) = scored_voxels(logits, mask);
    let mut acc = CompensatedSum::default();
    for &i in &voxels {
        acc.add(voxel_score(logits.pair(i), cfg));
    }
    let mean = acc.total() / voxels.len() as f64;
    let value = match cfg.method {
        ScoreMethod::MaxSoftmax => 1.0 - mean,
        ScoreMethod::MaxLogit => -mean,
        ScoreMethod::Energy | ScoreMethod::Entropy => mean,
    };
    if !value.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(OodScore {
        scan_id: scan_id.to_string(),
        method: cfg.method.label().to_string(),
        value,
        fallback_used,
    })
}
