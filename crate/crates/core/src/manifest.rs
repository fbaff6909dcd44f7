//! Cohort manifests: JSON lists of scans with their ID/OOD label and artifact
//! paths. Relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ovf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CohortLabel {
    #[serde(rename = "ID")]
    Id,
    #[serde(rename = "OOD")]
    Ood,
}

impl CohortLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CohortLabel::Id => "ID",
            CohortLabel::Ood => "OOD",
        }
    }

    /// Class index used by the classifiers: OOD is the positive class.
    pub fn class(self) -> usize {
        match self {
            CohortLabel::Id => 0,
            CohortLabel::Ood => 1,
        }
    }
}

impl fmt::Display for CohortLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CohortLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ID" => Ok(CohortLabel::Id),
            "OOD" => Ok(CohortLabel::Ood),
            other => Err(Error::invalid(format!("unknown cohort_label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub scan_id: String,
    pub cohort_label: CohortLabel,
    pub cohort_name: String,
    pub volume: PathBuf,
    pub mask: PathBuf,
    pub logits: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pyramid: Option<Vec<PathBuf>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub dataset_name: String,
    pub records: Vec<ScanRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
    /// Directory relative artifact paths resolve against. Not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Untyped record used so that a bad `cohort_label` can be reported with its
/// scan id instead of a bare serde position.
#[derive(Deserialize)]
struct RawRecord {
    scan_id: String,
    cohort_label: String,
    cohort_name: String,
    volume: PathBuf,
    mask: PathBuf,
    logits: PathBuf,
    #[serde(default)]
    pyramid: Option<Vec<PathBuf>>,
}

#[derive(Deserialize)]
struct RawManifest {
    dataset_name: String,
    records: Vec<RawRecord>,
    #[serde(default)]
    provenance: Option<serde_json::Value>,
}

impl CohortManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn record(&self, scan_id: &str) -> Option<&ScanRecord> {
        self.records.iter().find(|r| r.scan_id == scan_id)
    }

    /// Cohort names in order of first appearance.
    pub fn cohort_names(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.cohort_name.as_str()))
            .map(|r| r.cohort_name.clone())
            .collect()
    }

    pub fn has_both_labels(&self) -> bool {
        let id = self.records.iter().any(|r| r.cohort_label == CohortLabel::Id);
        let ood = self.records.iter().any(|r| r.cohort_label == CohortLabel::Ood);
        id && ood
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Parse and eagerly validate a manifest: unique ids, known labels, and every
/// referenced artifact present with a well-formed OVF header.
pub fn load_manifest(path: &Path) -> Result<CohortManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawManifest =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(raw.records.len());
    for r in raw.records {
        let fail = |message: String| Error::Record {
            scan_id: r.scan_id.clone(),
            message,
        };
        if !seen.insert(r.scan_id.clone()) {
            return Err(fail("duplicate scan_id".into()));
        }
        let label = r
            .cohort_label
            .parse::<CohortLabel>()
            .map_err(|e| fail(e.to_string()))?;
        if let Some(p) = &r.pyramid {
            if p.len() != 5 {
                return Err(fail(format!("pyramid lists {} paths, expected 5", p.len())));
            }
        }
        records.push(ScanRecord {
            scan_id: r.scan_id,
            cohort_label: label,
            cohort_name: r.cohort_name,
            volume: r.volume,
            mask: r.mask,
            logits: r.logits,
            pyramid: r.pyramid,
        });
    }

    let manifest = CohortManifest {
        dataset_name: raw.dataset_name,
        records,
        provenance: raw.provenance,
        base_dir,
    };
    for r in &manifest.records {
        let artifacts = [&r.volume, &r.mask, &r.logits]
            .into_iter()
            .chain(r.pyramid.iter().flatten());
        for a in artifacts {
            let full = manifest.resolve(a);
            if !full.exists() {
                return Err(Error::Record {
                    scan_id: r.scan_id.clone(),
                    message: format!("missing artifact {}", full.display()),
                });
            }
            ovf::validate_header(&full).map_err(|e| Error::Record {
                scan_id: r.scan_id.clone(),
                message: format!("{}: {e}", full.display()),
            })?;
        }
    }
    Ok(manifest)
}
