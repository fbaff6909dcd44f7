//! Repeated patient-level train/test evaluation.

use std::collections::HashMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureVector};
use crate::forest::{fit_forest, rfe, Hyperparams, Matrix, RfeConfig};
use crate::manifest::{CohortLabel, CohortManifest};
use crate::metrics::{auroc, fpr95, mean_std};
use crate::rng::{derive_seed, SplitMix64};
use crate::scores::OodScore;
use crate::tensor::StageId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub train_frac: f64,
    pub n_seeds: usize,
    pub base_seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            train_frac: 0.4,
            n_seeds: 100,
            base_seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::invalid("train_frac must lie in (0, 1)"));
        }
        if self.n_seeds == 0 {
            return Err(Error::invalid("n_seeds must be at least 1"));
        }
        Ok(())
    }

    /// Seed used for the forest (and RFE) of split `s`.
    pub fn rf_seed(&self, s: usize) -> u64 {
        derive_seed(self.base_seed, "rf", s as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub scan_id: String,
    pub cohort_label: CohortLabel,
    pub crop_index: usize,
    pub values: Vec<f64>,
}

/// All crop vectors of one feature family, one row per (scan, crop).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub kind: FeatureKind,
    pub names: Vec<String>,
    pub stage_slices: Vec<(StageId, Range<usize>)>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(kind: FeatureKind, names: Vec<String>, stage_slices: Vec<(StageId, Range<usize>)>) -> Self {
        Self {
            kind,
            names,
            stage_slices,
            rows: Vec::new(),
        }
    }

    /// Append one scan's crop vectors; crop indices follow slice order.
    pub fn push_scan(&mut self, label: CohortLabel, vectors: &[FeatureVector]) -> Result<()> {
        for (i, v) in vectors.iter().enumerate() {
            if v.kind != self.kind || v.names != self.names {
                return Err(Error::Record {
                    scan_id: v.scan_id.clone(),
                    message: "feature names differ from the table header".into(),
                });
            }
            self.rows.push(FeatureRow {
                scan_id: v.scan_id.clone(),
                cohort_label: label,
                crop_index: i,
                values: v.values.clone(),
            });
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    /// Crop vectors grouped by scan, in row order.
    pub fn by_scan(&self) -> HashMap<&str, Vec<&[f64]>> {
        let mut map: HashMap<&str, Vec<&[f64]>> = HashMap::new();
        for r in &self.rows {
            map.entry(r.scan_id.as_str()).or_default().push(&r.values);
        }
        map
    }

    pub fn restrict(&self, cols: Range<usize>) -> Result<FeatureTable> {
        if cols.end > self.width() || cols.is_empty() {
            return Err(Error::invalid(format!("column range {cols:?} out of bounds")));
        }
        let stage_slices = self
            .stage_slices
            .iter()
            .filter(|(_, r)| r.start >= cols.start && r.end <= cols.end)
            .map(|(s, r)| (*s, r.start - cols.start..r.end - cols.start))
            .collect();
        Ok(FeatureTable {
            kind: self.kind,
            names: self.names[cols.clone()].to_vec(),
            stage_slices,
            rows: self
                .rows
                .iter()
                .map(|r| FeatureRow {
                    values: r.values[cols.clone()].to_vec(),
                    ..r.clone()
                })
                .collect(),
        })
    }

    pub fn stage_table(&self, stage: StageId) -> Result<FeatureTable> {
        let range = self
            .stage_slices
            .iter()
            .find(|(s, _)| *s == stage)
            .map(|(_, r)| r.clone())
            .ok_or_else(|| Error::invalid(format!("missing stage slice metadata for {stage}")))?;
        self.restrict(range)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub scan_id: String,
    pub label: CohortLabel,
    pub cohort: String,
    pub score: f64,
    pub method: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledScores {
    pub entries: Vec<LabeledScore>,
}

impl LabeledScores {
    /// Attach labels and cohorts from the manifest.
    pub fn from_scores(manifest: &CohortManifest, scores: &[OodScore]) -> Result<Self> {
        let entries = scores
            .iter()
            .map(|s| {
                let rec = manifest
                    .record(&s.scan_id)
                    .ok_or_else(|| Error::invalid(format!("score for unknown scan `{}`", s.scan_id)))?;
                Ok(LabeledScore {
                    scan_id: s.scan_id.clone(),
                    label: rec.cohort_label,
                    cohort: rec.cohort_name.clone(),
                    score: s.value,
                    method: s.method.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }

    /// ID entries against one OOD cohort.
    pub fn against(&self, cohort: &str) -> (Vec<f64>, Vec<bool>) {
        self.entries
            .iter()
            .filter(|e| e.label == CohortLabel::Id || e.cohort == cohort)
            .map(|e| (e.score, e.label == CohortLabel::Ood))
            .unzip()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub cohort: String,
    /// Percent.
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub fpr95_mean: f64,
    pub fpr95_std: f64,
    pub auroc_per_seed: Vec<f64>,
    pub fpr95_per_seed: Vec<f64>,
}

impl MethodResult {
    fn from_seeds(method: &str, cohort: &str, auroc: Vec<f64>, fpr: Vec<f64>) -> Self {
        let (auroc_mean, auroc_std) = mean_std(&auroc);
        let (fpr95_mean, fpr95_std) = mean_std(&fpr);
        Self {
            method: method.to_string(),
            cohort: cohort.to_string(),
            auroc_mean,
            auroc_std,
            fpr95_mean,
            fpr95_std,
            auroc_per_seed: auroc,
            fpr95_per_seed: fpr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub train_frac: f64,
    pub n_seeds: usize,
    pub base_seed: u64,
    pub results: Vec<MethodResult>,
}

impl EvalReport {
    pub fn new(protocol: &ProtocolConfig) -> Self {
        Self {
            train_frac: protocol.train_frac,
            n_seeds: protocol.n_seeds,
            base_seed: protocol.base_seed,
            results: Vec::new(),
        }
    }

    pub fn get(&self, method: &str, cohort: &str) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method && r.cohort == cohort)
    }

    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.results {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
        out
    }
}

/// Names of the OOD cohorts, in manifest order.
pub fn ood_cohorts(manifest: &CohortManifest) -> Vec<String> {
    manifest
        .cohort_names()
        .into_iter()
        .filter(|c| {
            manifest
                .records
                .iter()
                .any(|r| &r.cohort_name == c && r.cohort_label == CohortLabel::Ood)
        })
        .collect()
}

fn check_manifest(manifest: &CohortManifest) -> Result<()> {
    if !manifest.has_both_labels() {
        return Err(Error::invalid("manifest needs an ID cohort and at least one OOD cohort"));
    }
    Ok(())
}

/// `max(1, floor(frac·n))`.
pub fn train_count(n: usize, train_frac: f64) -> usize {
    ((train_frac * n as f64).floor() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Per-cohort shuffle of scan ids (manifest order in, stream
/// `(base_seed, "split", s)` shared across cohorts in manifest order), first
/// `train_count` of each cohort to the training side.
pub fn patient_split(manifest: &CohortManifest, protocol: &ProtocolConfig, s: usize) -> Result<Split> {
    let mut rng = SplitMix64::for_role(protocol.base_seed, "split", s as u64);
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for cohort in manifest.cohort_names() {
        let mut ids: Vec<String> = manifest
            .records
            .iter()
            .filter(|r| r.cohort_name == cohort)
            .map(|r| r.scan_id.clone())
            .collect();
        let k = train_count(ids.len(), protocol.train_frac);
        if k >= ids.len() {
            return Err(Error::invalid(format!(
                "cohort `{cohort}` with {} scans is too small for a non-empty train/test split",
                ids.len()
            )));
        }
        rng.shuffle(&mut ids);
        split.test.extend(ids.split_off(k));
        split.train.extend(ids);
    }
    Ok(split)
}

/// Options for a random-forest method under the repeated-split protocol.
#[derive(Debug, Clone)]
pub struct RfMethod<'a> {
    pub name: &'a str,
    pub table: &'a FeatureTable,
    pub hyperparams: &'a Hyperparams,
    pub rfe: Option<&'a RfeConfig>,
}

/// Test-side scan scores of one split.
pub fn rf_split_scores(
    manifest: &CohortManifest,
    method: &RfMethod<'_>,
    protocol: &ProtocolConfig,
    s: usize,
) -> Result<Vec<OodScore>> {
    let split = patient_split(manifest, protocol, s)?;
    let by_scan = method.table.by_scan();
    let crops_of = |id: &str| {
        by_scan
            .get(id)
            .ok_or_else(|| Error::Record {
                scan_id: id.to_string(),
                message: format!("no {:?} feature rows", method.table.kind),
            })
    };
    let mut data = Vec::new();
    let mut y = Vec::new();
    for id in &split.train {
        let label = manifest.record(id).map(|r| r.cohort_label.class()).unwrap_or(0);
        for c in crops_of(id)? {
            data.extend_from_slice(c);
            y.push(label);
        }
    }
    let width = method.table.width();
    let x = Matrix::new(y.len(), width, data)?;
    let seed = protocol.rf_seed(s);
    let cols: Vec<usize> = match method.rfe {
        Some(cfg) if cfg.target_count < width => rfe(&x, &y, method.hyperparams, cfg, seed)?,
        _ => (0..width).collect(),
    };
    let x = x.select_columns(&cols);
    let names = cols.iter().map(|&c| method.table.names[c].clone()).collect();
    let forest = fit_forest(&x, &y, method.hyperparams, names, seed)?;
    split
        .test
        .iter()
        .map(|id| {
            let crops: Vec<Vec<f64>> = crops_of(id)?
                .iter()
                .map(|c| cols.iter().map(|&j| c[j]).collect())
                .collect();
            let mut score = crate::forest::predict_scan(&forest, id, &crops)?;
            score.method = method.name.to_string();
            Ok(score)
        })
        .collect()
}

fn cohort_metrics(labeled: &LabeledScores, cohort: &str) -> Result<(f64, f64)> {
    let (scores, positive) = labeled.against(cohort);
    Ok((100.0 * auroc(&scores, &positive)?, 100.0 * fpr95(&scores, &positive)?))
}

/// Train and evaluate an RF method over `n_seeds` splits. Seeds run in
/// parallel; results are gathered in seed order.
pub fn repeated_split_eval(
    manifest: &CohortManifest,
    method: &RfMethod<'_>,
    protocol: &ProtocolConfig,
) -> Result<Vec<MethodResult>> {
    protocol.validate()?;
    check_manifest(manifest)?;
    let cohorts = ood_cohorts(manifest);
    let per_seed: Vec<Vec<(f64, f64)>> = (0..protocol.n_seeds)
        .into_par_iter()
        .map(|s| {
            let scores = rf_split_scores(manifest, method, protocol, s)?;
            let labeled = LabeledScores::from_scores(manifest, &scores)?;
            cohorts.iter().map(|c| cohort_metrics(&labeled, c)).collect()
        })
        .collect::<Result<_>>()?;
    Ok(cohorts
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            let (a, f) = per_seed.iter().map(|v| v[ci]).unzip();
            MethodResult::from_seeds(method.name, c, a, f)
        })
        .collect())
}

/// Training-free baseline on the full cohorts. The single result is repeated
/// for every seed so per-seed tables stay rectangular.
pub fn baseline_eval(
    manifest: &CohortManifest,
    method: &str,
    scores: &[OodScore],
    protocol: &ProtocolConfig,
) -> Result<Vec<MethodResult>> {
    protocol.validate()?;
    check_manifest(manifest)?;
    let labeled = LabeledScores::from_scores(manifest, scores)?;
    ood_cohorts(manifest)
        .iter()
        .map(|c| {
            let (a, f) = cohort_metrics(&labeled, c)?;
            Ok(MethodResult::from_seeds(
                method,
                c,
                vec![a; protocol.n_seeds],
                vec![f; protocol.n_seeds],
            ))
        })
        .collect()
}
