use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn cohort(name: &str, label: &str, seed: u64, texture: f64) -> Value {
    json!({
        "cohort_name": name,
        "label": label,
        "n_scans": 10,
        "blob_count": [1, 2],
        "blob_radius": [3.0, 5.0],
        "texture_mean": texture,
        "texture_std": 0.05,
        "background_mean": 0.3,
        "background_std": 0.1,
        "seed": seed
    })
}

fn small_config(dir: &Path) -> PathBuf {
    let cfg = json!({
        "work_dir": "work",
        "cohorts": [cohort("id", "ID", 1, 0.3), cohort("ood", "OOD", 2, 0.5)],
        "crops": { "k": 2 },
        "rf": { "n_trees": 15 },
        "protocol": { "n_seeds": 3, "base_seed": 5 }
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn rfdeep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfdeep")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn pipeline_runs_then_skips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    let first = rfdeep(&["--config", c, "pipeline"]);
    assert!(first.status.success(), "{}", stderr(&first));
    for f in ["report/summary.csv", "report/summary.txt", "eval/per_seed.csv", "models/rf_deep.json"] {
        assert!(dir.path().join("work").join(f).exists(), "{f}");
    }
    let summary = fs::read_to_string(dir.path().join("work/report/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 7);
    assert!(summary.starts_with("method,ood_auroc_mean,ood_auroc_std,ood_fpr95_mean,ood_fpr95_std"));

    let again = rfdeep(&["--config", c, "pipeline"]);
    assert!(again.status.success());
    let log = stderr(&again);
    assert_eq!(log.matches("skip ").count(), 7, "{log}");
    assert!(!log.contains("run "));

    let per_seed = fs::read_to_string(dir.path().join("work/eval/per_seed.csv")).unwrap();
    assert!(per_seed.starts_with("seed,method,cohort,auroc,fpr95\n"));
    assert_eq!(per_seed.lines().count(), 1 + 6 * 3);
}

#[test]
fn changed_seed_reruns_dependent_steps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    assert!(rfdeep(&["--config", c, "pipeline"]).status.success());
    let o = rfdeep(&["--config", c, "--seed", "6", "pipeline"]);
    assert!(o.status.success());
    let log = stderr(&o);
    assert!(log.contains("skip gen") && log.contains("skip encode") && log.contains("run extract"), "{log}");
}

#[test]
fn corrupt_volume_fails_in_extract_naming_the_scan() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    assert!(rfdeep(&["--config", c, "gen"]).status.success());
    assert!(rfdeep(&["--config", c, "encode"]).status.success());
    let victim = dir.path().join("work/data/ood/ood_0003_volume.ovf");
    let mut bytes = fs::read(&victim).unwrap();
    bytes[..4].copy_from_slice(b"XXXX");
    fs::write(&victim, bytes).unwrap();

    let o = rfdeep(&["--config", c, "pipeline"]);
    assert_eq!(o.status.code(), Some(3));
    let line = stderr(&o).lines().last().unwrap().to_string();
    let v: Value = serde_json::from_str(&line).unwrap();
    assert_eq!(v["error"]["stage"], "extract");
    assert_eq!(v["error"]["scan_id"], "ood_0003");
}

#[test]
fn config_problems_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(rfdeep(&["--config", missing.to_str().unwrap(), "gen"]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"cohorts": [], "protocol": {"n_seeds": 0}}"#).unwrap();
    assert_eq!(rfdeep(&["--config", bad.to_str().unwrap(), "gen"]).status.code(), Some(2));

    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(rfdeep(&["--config", bad.to_str().unwrap(), "gen"]).status.code(), Some(2));

    assert_eq!(rfdeep(&["gen"]).status.code(), Some(2));
    assert_eq!(rfdeep(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn config_hash_ignores_layout_of_the_file() {
    use rfdeep_cli::pipeline::step_hash;
    use rfdeep_cli::{RunConfig, Stage};
    let dir = tempfile::tempdir().unwrap();
    let a = small_config(dir.path());
    let b = dir.path().join("reordered.json");
    let v: Value = serde_json::from_str(&fs::read_to_string(&a).unwrap()).unwrap();
    // compact, with top-level keys reversed
    let obj = v.as_object().unwrap();
    let mut text = String::from("{");
    for (i, (k, val)) in obj.iter().rev().enumerate() {
        if i > 0 {
            text.push(',');
        }
        text.push_str(&format!("{}:{}", Value::from(k.as_str()), val));
    }
    text.push('}');
    fs::write(&b, text).unwrap();
    let ca = RunConfig::load(&a).unwrap();
    let cb = RunConfig::load(&b).unwrap();
    assert_eq!(step_hash(&ca, Stage::Report), step_hash(&cb, Stage::Report));
    let mut cc = ca.clone();
    cc.crops.jitter += 1;
    assert_ne!(step_hash(&ca, Stage::Report), step_hash(&cc, Stage::Report));
}

#[test]
fn ablate_and_explain_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    assert!(rfdeep(&["--config", c, "pipeline"]).status.success());
    let o = rfdeep(&["--config", c, "ablate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let abl = fs::read_to_string(dir.path().join("work/ablation/ablation.csv")).unwrap();
    let stages: Vec<&str> = abl.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(stages, ["PE", "SB1", "SB2", "SB3", "SB4"]);

    let o = rfdeep(&["--config", c, "explain"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let shap = fs::read_to_string(dir.path().join("work/explain/shap_deep.csv")).unwrap();
    assert_eq!(shap.lines().count(), 1 + 20);
    // base + Σφ = prediction for each scan
    for line in shap.lines().skip(1) {
        let v: Vec<f64> = line.split(',').skip(2).map(|s| s.parse().unwrap()).collect();
        let total = v[0] + v[2..].iter().sum::<f64>();
        assert!((total - v[1]).abs() < 1e-9);
    }
}
