//! Step chaining with content-hash stamps.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{section_hash, RunConfig};
use crate::error::{CliError, CliResult, Stage};
use crate::steps::{self, Layout};

/// Steps run by `pipeline`, in order.
pub const PIPELINE: [Stage; 7] = [
    Stage::Gen,
    Stage::Encode,
    Stage::Extract,
    Stage::Score,
    Stage::Train,
    Stage::Eval,
    Stage::Report,
];

#[derive(Debug, Serialize, Deserialize)]
struct Stamp {
    hash: String,
    outputs: Vec<PathBuf>,
}

fn file_digest(path: &Path) -> String {
    match fs::read(path) {
        Ok(bytes) => Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect(),
        Err(_) => String::new(),
    }
}

/// Config fields each step depends on.
fn section(cfg: &RunConfig, stage: Stage) -> Value {
    match stage {
        Stage::Gen => match &cfg.manifest {
            Some(m) => json!({ "manifest_sha256": file_digest(m) }),
            None => json!({ "cohorts": cfg.cohorts, "dataset_name": cfg.dataset_name }),
        },
        Stage::Encode => json!(cfg.encoder),
        Stage::Extract => json!({ "crops": cfg.crops, "base_seed": cfg.protocol.base_seed }),
        Stage::Score => json!(cfg.scores),
        Stage::Train => json!({ "rf": cfg.rf, "rfe": cfg.rfe, "base_seed": cfg.protocol.base_seed }),
        Stage::Eval => json!({ "rf": cfg.rf, "rfe": cfg.rfe, "protocol": cfg.protocol }),
        Stage::Ablate => json!({ "rf": cfg.rf, "protocol": cfg.protocol, "stages": cfg.stages_for_ablation() }),
        Stage::Explain => json!({ "explain": cfg.explain, "base_seed": cfg.protocol.base_seed }),
        Stage::Report | Stage::Config => Value::Null,
    }
}

/// Steps whose outputs `stage` consumes, chained in pipeline order.
fn upstream(stage: Stage) -> &'static [Stage] {
    match stage {
        Stage::Ablate => &PIPELINE[..3],
        Stage::Explain => &PIPELINE[..5],
        _ => {
            let i = PIPELINE.iter().position(|s| *s == stage).unwrap_or(0);
            &PIPELINE[..i]
        }
    }
}

/// Hash of `stage` chained over its upstream steps.
pub fn step_hash(cfg: &RunConfig, stage: Stage) -> String {
    let mut h = String::new();
    for s in upstream(stage).iter().chain(std::iter::once(&stage)) {
        h = section_hash(&h, s.as_str(), &section(cfg, *s));
    }
    h
}

fn stamp_path(cfg: &RunConfig, stage: Stage) -> PathBuf {
    Layout::new(cfg).stamps().join(format!("{stage}.json"))
}

fn is_current(cfg: &RunConfig, stage: Stage, hash: &str) -> bool {
    let Ok(text) = fs::read_to_string(stamp_path(cfg, stage)) else {
        return false;
    };
    match serde_json::from_str::<Stamp>(&text) {
        Ok(s) => s.hash == hash && s.outputs.iter().all(|p| p.exists()),
        Err(_) => false,
    }
}

fn write_stamp(cfg: &RunConfig, stage: Stage, hash: String, outputs: Vec<PathBuf>) -> CliResult<()> {
    let path = stamp_path(cfg, stage);
    let dir = path.parent().expect("stamp path has a parent");
    let err = |e: std::io::Error| CliError::data(stage, format!("{}: {e}", path.display()));
    fs::create_dir_all(dir).map_err(err)?;
    let text = serde_json::to_string_pretty(&Stamp { hash, outputs }).expect("stamp serializes");
    fs::write(&path, text).map_err(err)
}

fn dispatch(cfg: &RunConfig, stage: Stage) -> CliResult<Vec<PathBuf>> {
    match stage {
        Stage::Gen => steps::gen(cfg),
        Stage::Encode => steps::encode(cfg),
        Stage::Extract => steps::extract(cfg),
        Stage::Score => steps::score(cfg),
        Stage::Train => steps::train(cfg),
        Stage::Eval => steps::eval(cfg),
        Stage::Ablate => steps::ablate(cfg),
        Stage::Explain => steps::explain(cfg),
        Stage::Report => steps::report(cfg),
        Stage::Config => Err(CliError::Config("`config` is not a step".into())),
    }
}

/// Run a single step unconditionally and record its stamp.
pub fn run_step(cfg: &RunConfig, stage: Stage) -> CliResult<()> {
    let outputs = dispatch(cfg, stage)?;
    write_stamp(cfg, stage, step_hash(cfg, stage), outputs)
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct PipelineOutcome {
    pub ran: Vec<Stage>,
    pub skipped: Vec<Stage>,
}

/// Run every pipeline step whose stamp is missing or stale. Once a step
/// runs, everything after it runs too.
pub fn run_pipeline(cfg: &RunConfig, force: bool) -> CliResult<PipelineOutcome> {
    let mut outcome = PipelineOutcome::default();
    let mut dirty = force;
    for stage in PIPELINE {
        let hash = step_hash(cfg, stage);
        if !dirty && is_current(cfg, stage, &hash) {
            eprintln!("skip {stage}");
            outcome.skipped.push(stage);
            continue;
        }
        dirty = true;
        eprintln!("run {stage}");
        let outputs = dispatch(cfg, stage)?;
        write_stamp(cfg, stage, hash, outputs)?;
        outcome.ran.push(stage);
    }
    Ok(outcome)
}
