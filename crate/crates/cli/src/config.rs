//! Run configuration and its canonical hashing.

use std::fs;
use std::path::{Path, PathBuf};

use rfdeep_core::encoder::ToyEncoderConfig;
use rfdeep_core::features::CropConfig;
use rfdeep_core::forest::{Hyperparams, RfeConfig};
use rfdeep_core::protocol::ProtocolConfig;
use rfdeep_core::synth::CohortSpec;
use rfdeep_core::tensor::StageId;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfeSettings {
    pub radiomics: Option<RfeConfig>,
    pub deep: Option<RfeConfig>,
}

impl Default for RfeSettings {
    fn default() -> Self {
        Self {
            radiomics: Some(RfeConfig::default()),
            deep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreSettings {
    pub temperature: f64,
}

impl Default for ScoreSettings {
    fn default() -> Self {
        Self { temperature: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainSettings {
    pub permutation_repeats: usize,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        Self {
            permutation_repeats: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub work_dir: PathBuf,
    /// Existing manifest to use instead of generated cohorts.
    pub manifest: Option<PathBuf>,
    pub dataset_name: String,
    pub cohorts: Vec<CohortSpec>,
    pub encoder: ToyEncoderConfig,
    pub crops: CropConfig,
    pub rf: Hyperparams,
    pub rfe: RfeSettings,
    pub scores: ScoreSettings,
    pub protocol: ProtocolConfig,
    /// Stages evaluated by `ablate`; `None` means all five.
    pub ablation_stages: Option<Vec<StageId>>,
    pub explain: ExplainSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            work_dir: PathBuf::from("work"),
            manifest: None,
            dataset_name: "synthetic".into(),
            cohorts: Vec::new(),
            encoder: ToyEncoderConfig::default(),
            crops: CropConfig::default(),
            rf: Hyperparams::default(),
            rfe: RfeSettings::default(),
            scores: ScoreSettings::default(),
            protocol: ProtocolConfig::default(),
            ablation_stages: None,
            explain: ExplainSettings::default(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    /// Parse a config file. Relative `work_dir` and `manifest` paths resolve
    /// against the config file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.work_dir.is_relative() {
            cfg.work_dir = base.join(&cfg.work_dir);
        }
        if let Some(m) = &cfg.manifest {
            if m.is_relative() {
                cfg.manifest = Some(base.join(m));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.manifest.is_none() && self.cohorts.is_empty() {
            return Err(config_err("either `manifest` or `cohorts` must be given"));
        }
        if let Some(m) = &self.manifest {
            if !m.exists() {
                return Err(config_err(format!("manifest {} does not exist", m.display())));
            }
        }
        for c in &self.cohorts {
            c.validate().map_err(config_err)?;
        }
        self.encoder.validate().map_err(config_err)?;
        self.rf.validate().map_err(config_err)?;
        self.protocol.validate().map_err(config_err)?;
        if self.crops.k == 0 {
            return Err(config_err("crops.k must be at least 1"));
        }
        if !(self.scores.temperature > 0.0 && self.scores.temperature.is_finite()) {
            return Err(config_err("scores.temperature must be positive"));
        }
        if self.explain.permutation_repeats == 0 {
            return Err(config_err("explain.permutation_repeats must be at least 1"));
        }
        Ok(())
    }

    pub fn stages_for_ablation(&self) -> Vec<StageId> {
        self.ablation_stages.clone().unwrap_or_else(|| StageId::ALL.to_vec())
    }
}

/// SHA-256 over `upstream` and the canonical JSON of `section`. Parsing into
/// typed structs first makes the digest blind to whitespace and key order.
pub fn section_hash<T: Serialize>(upstream: &str, step: &str, section: &T) -> String {
    let canonical = serde_json::to_value(section)
        .and_then(|v| serde_json::to_string(&v))
        .expect("config sections serialize");
    let mut h = Sha256::new();
    h.update(upstream.as_bytes());
    h.update([0]);
    h.update(step.as_bytes());
    h.update([0]);
    h.update(canonical.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
