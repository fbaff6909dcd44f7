//! One function per subcommand. Every step reads its inputs from and writes
//! its outputs to the work directory.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rfdeep_core::encoder::toy_encode;
use rfdeep_core::features::{deep_feature_vectors, radiomics_lite, tumor_crops, FeatureKind, FeatureVector};
use rfdeep_core::forest::{
    fit_forest, mdi_importance, permutation_importance, rfe, tree_shap, Forest, Matrix, RfeConfig,
};
use rfdeep_core::manifest::{load_manifest, CohortLabel, CohortManifest, ScanRecord};
use rfdeep_core::ovf::{read_logits, read_mask, read_pyramid, read_volume, write_pyramid};
use rfdeep_core::protocol::{
    baseline_eval, ood_cohorts, repeated_split_eval, EvalReport, FeatureTable, RfMethod,
};
use rfdeep_core::rng::derive_seed;
use rfdeep_core::scores::{scan_score, OodScore, ScoreConfig, ScoreMethod};
use rfdeep_core::synth::make_cohort;
use rfdeep_core::tensor::StageId;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Context, Stage};
use crate::tables;

pub const RF_DEEP: &str = "RF-Deep";
pub const RF_RADIOMICS: &str = "RF-Radiomics";

/// Table-1 row order.
pub fn method_order() -> Vec<String> {
    let mut m: Vec<String> = ScoreMethod::ALL.iter().map(|s| s.label().to_string()).collect();
    m.push(RF_RADIOMICS.into());
    m.push(RF_DEEP.into());
    m
}

/// Artifact locations under the work directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            root: cfg.work_dir.clone(),
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }
    pub fn generated_manifest(&self) -> PathBuf {
        self.data_dir().join("manifest.json")
    }
    pub fn encoded_manifest(&self) -> PathBuf {
        self.data_dir().join("manifest_encoded.json")
    }
    pub fn pyramid_dir(&self) -> PathBuf {
        self.data_dir().join("pyramids")
    }
    pub fn deep_features(&self) -> PathBuf {
        self.root.join("features").join("deep.csv")
    }
    pub fn radiomics_features(&self) -> PathBuf {
        self.root.join("features").join("radiomics.csv")
    }
    pub fn scores(&self) -> PathBuf {
        self.root.join("scores").join("scores.csv")
    }
    pub fn model(&self, kind: FeatureKind) -> PathBuf {
        let name = match kind {
            FeatureKind::Deep => "rf_deep.json",
            FeatureKind::Radiomics => "rf_radiomics.json",
        };
        self.root.join("models").join(name)
    }
    pub fn eval_report(&self) -> PathBuf {
        self.root.join("eval").join("report.json")
    }
    pub fn per_seed(&self) -> PathBuf {
        self.root.join("eval").join("per_seed.csv")
    }
    pub fn summary_csv(&self) -> PathBuf {
        self.root.join("report").join("summary.csv")
    }
    pub fn summary_txt(&self) -> PathBuf {
        self.root.join("report").join("summary.txt")
    }
    pub fn ablation_csv(&self) -> PathBuf {
        self.root.join("ablation").join("ablation.csv")
    }
    pub fn ablation_txt(&self) -> PathBuf {
        self.root.join("ablation").join("ablation.txt")
    }
    pub fn ablation_per_seed(&self) -> PathBuf {
        self.root.join("ablation").join("per_seed.csv")
    }
    pub fn ablation_report(&self) -> PathBuf {
        self.root.join("ablation").join("report.json")
    }
    pub fn shap(&self, kind: FeatureKind) -> PathBuf {
        self.root.join("explain").join(format!("shap_{}.csv", kind_name(kind)))
    }
    pub fn importance(&self, kind: FeatureKind) -> PathBuf {
        self.root.join("explain").join(format!("importance_{}.csv", kind_name(kind)))
    }
    pub fn stamps(&self) -> PathBuf {
        self.root.join(".stamps")
    }
}

fn kind_name(kind: FeatureKind) -> &'static str {
    match kind {
        FeatureKind::Deep => "deep",
        FeatureKind::Radiomics => "radiomics",
    }
}

fn io_err(stage: Stage, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::data(stage, format!("{}: {e}", path.display()))
}

fn create_dir(stage: Stage, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(stage, dir, e))
}

fn write_text(stage: Stage, path: &Path, text: &str) -> CliResult<()> {
    if let Some(d) = path.parent() {
        create_dir(stage, d)?;
    }
    fs::write(path, text).map_err(|e| io_err(stage, path, e))
}

fn write_json<T: serde::Serialize>(stage: Stage, path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(stage, path, e))?;
    write_text(stage, path, &(text + "\n"))
}

fn read_json<T: serde::de::DeserializeOwned>(stage: Stage, path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(stage, path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(stage, path, e))
}

/// Manifest holding the raw scans: the configured one, or the generated one.
pub fn source_manifest_path(cfg: &RunConfig) -> PathBuf {
    cfg.manifest
        .clone()
        .unwrap_or_else(|| Layout::new(cfg).generated_manifest())
}

fn load(stage: Stage, path: &Path) -> CliResult<CohortManifest> {
    load_manifest(path).stage(stage)
}

fn crop_seed(cfg: &RunConfig, scan_id: &str) -> u64 {
    derive_seed(cfg.protocol.base_seed, &format!("crops/{scan_id}"), 0)
}

// ---------------------------------------------------------------------------

pub fn gen(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let stage = Stage::Gen;
    if let Some(m) = &cfg.manifest {
        load(stage, m)?;
        return Ok(vec![m.clone()]);
    }
    let layout = Layout::new(cfg);
    create_dir(stage, &layout.data_dir())?;
    make_cohort(&cfg.cohorts, &layout.data_dir(), &cfg.dataset_name).stage(stage)?;
    Ok(vec![layout.generated_manifest()])
}

/// Express an artifact path relative to `base` when it lies inside it.
fn rebase(manifest: &CohortManifest, p: &Path, base: &Path) -> PathBuf {
    let full = manifest.resolve(p);
    if let Ok(rel) = full.strip_prefix(base) {
        return rel.to_path_buf();
    }
    fs::canonicalize(&full).unwrap_or(full)
}

pub fn encode(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let stage = Stage::Encode;
    let layout = Layout::new(cfg);
    let manifest = load(stage, &source_manifest_path(cfg))?;
    create_dir(stage, &layout.pyramid_dir())?;
    let data_dir = layout.data_dir();
    let records = manifest
        .records
        .par_iter()
        .map(|r| {
            let volume = read_volume(&manifest.resolve(&r.volume)).scan(stage, &r.scan_id)?;
            let pyramid = toy_encode(&volume, &cfg.encoder).scan(stage, &r.scan_id)?;
            let rel: Vec<PathBuf> = StageId::ALL
                .iter()
                .map(|s| PathBuf::from("pyramids").join(format!("{}_{s}.ovf", r.scan_id)))
                .collect();
            let full: Vec<PathBuf> = rel.iter().map(|p| data_dir.join(p)).collect();
            write_pyramid(&pyramid, &full).scan(stage, &r.scan_id)?;
            Ok(ScanRecord {
                volume: rebase(&manifest, &r.volume, &data_dir),
                mask: rebase(&manifest, &r.mask, &data_dir),
                logits: rebase(&manifest, &r.logits, &data_dir),
                pyramid: Some(rel),
                ..r.clone()
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let out = CohortManifest {
        records,
        base_dir: data_dir,
        ..manifest
    };
    out.save(&layout.encoded_manifest()).stage(stage)?;
    Ok(vec![layout.encoded_manifest()])
}

pub fn extract(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let stage = Stage::Extract;
    let layout = Layout::new(cfg);
    let manifest = load(stage, &layout.encoded_manifest())?;
    let per_scan: Vec<(CohortLabel, Vec<FeatureVector>, FeatureVector)> = manifest
        .records
        .par_iter()
        .map(|r| {
            let id = r.scan_id.as_str();
            let volume = read_volume(&manifest.resolve(&r.volume)).scan(stage, id)?;
            let mask = read_mask(&manifest.resolve(&r.mask)).scan(stage, id)?;
            let paths: Vec<PathBuf> = r
                .pyramid
                .as_ref()
                .ok_or_else(|| CliError::scan(stage, id, "no pyramid; run `encode` first"))?
                .iter()
                .map(|p| manifest.resolve(p))
                .collect();
            let pyramid = read_pyramid(&paths, volume.dims()).scan(stage, id)?;
            let crops = tumor_crops(&mask, &cfg.crops, crop_seed(cfg, id)).scan(stage, id)?;
            let deep = deep_feature_vectors(id, &pyramid, &mask, &crops).scan(stage, id)?;
            let radiomics = radiomics_lite(id, &volume, &mask).scan(stage, id)?;
            Ok((r.cohort_label, deep, radiomics))
        })
        .collect::<CliResult<_>>()?;

    let Some((_, first_deep, first_rad)) = per_scan.first() else {
        return Err(CliError::data(stage, "manifest has no records"));
    };
    let mut deep = FeatureTable::new(
        FeatureKind::Deep,
        first_deep[0].names.clone(),
        first_deep[0].stage_slices.clone(),
    );
    let mut radiomics = FeatureTable::new(FeatureKind::Radiomics, first_rad.names.clone(), Vec::new());
    for (label, d, r) in &per_scan {
        deep.push_scan(*label, d).stage(stage)?;
        radiomics.push_scan(*label, std::slice::from_ref(r)).stage(stage)?;
    }
    tables::write_feature_table(stage, &layout.deep_features(), &deep)?;
    tables::write_feature_table(stage, &layout.radiomics_features(), &radiomics)?;
    Ok(vec![layout.deep_features(), layout.radiomics_features()])
}

pub fn score(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let stage = Stage::Score;
    let layout = Layout::new(cfg);
    let manifest = load(stage, &source_manifest_path(cfg))?;
    let configs = ScoreMethod::ALL
        .iter()
        .map(|&m| ScoreConfig::new(m).with_temperature(cfg.scores.temperature))
        .collect::<rfdeep_core::Result<Vec<_>>>()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let per_scan: Vec<Vec<(CohortLabel, OodScore)>> = manifest
        .records
        .par_iter()
        .map(|r| {
            let id = r.scan_id.as_str();
            let logits = read_logits(&manifest.resolve(&r.logits)).scan(stage, id)?;
            let mask = read_mask(&manifest.resolve(&r.mask)).scan(stage, id)?;
            configs
                .iter()
                .map(|c| Ok((r.cohort_label, scan_score(id, &logits, &mask, c).scan(stage, id)?)))
                .collect()
        })
        .collect::<CliResult<_>>()?;
    let flat: Vec<_> = per_scan.into_iter().flatten().collect();
    tables::write_scores(stage, &layout.scores(), &flat)?;
    Ok(vec![layout.scores()])
}

fn read_tables(stage: Stage, layout: &Layout) -> CliResult<(FeatureTable, FeatureTable)> {
    Ok((
        tables::read_feature_table(stage, &layout.deep_features(), FeatureKind::Deep)?,
        tables::read_feature_table(stage, &layout.radiomics_features(), FeatureKind::Radiomics)?,
    ))
}

fn rfe_for(cfg: &RunConfig, kind: FeatureKind) -> Option<&RfeConfig> {
    match kind {
        FeatureKind::Deep => cfg.rfe.deep.as_ref(),
        FeatureKind::Radiomics => cfg.rfe.radiomics.as_ref(),
    }
}

/// Fit one forest on every row of `table`.
fn train_full(cfg: &RunConfig, table: &FeatureTable, stage: Stage) -> CliResult<Forest> {
    let rows: Vec<Vec<f64>> = table.rows.iter().map(|r| r.values.clone()).collect();
    let y: Vec<usize> = table.rows.iter().map(|r| r.cohort_label.class()).collect();
    let x = Matrix::from_rows(&rows).stage(stage)?;
    let seed = derive_seed(cfg.protocol.base_seed, "train", 0);
    let cols: Vec<usize> = match rfe_for(cfg, table.kind) {
        Some(r) if r.target_count < table.width() => rfe(&x, &y, &cfg.rf, r, seed).stage(stage)?,
        _ => (0..table.width()).collect(),
    };
    let names = cols.iter().map(|&c| table.names[c].clone()).collect();
    fit_forest(&x.select_columns(&cols), &y, &cfg.rf, names, seed).stage(stage)
}

pub fn train(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let stage = Stage::Train;
    let layout = Layout::new(cfg);
    let (deep, radiomics) = read_tables(stage, &layout)?;
    let mut out = Vec::new();
    for table in [&radiomics, &deep] {
        let forest = train_full(cfg, table, stage)?;
        let path = layout.model(table.kind);
        create_dir(stage, path.parent().expect("model path has a parent"))?;
        forest.save(&path).stage(stage)?;
        out.push(path);
    }
    Ok(out)
}

fn write_report(
    stage: Stage,
    report: &EvalReport,
    json: &Path,
    per_seed: &Path,
) -> CliResult<()> {
    write_json(stage, json, report)?;
    tables::write_per_seed(stage, per_seed, report)
}

pub fn eval(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let stage = Stage::Eval;
    let layout = Layout::new(cfg);
    let manifest = load(stage, &source_manifest_path(cfg))?;
    let scores = tables::read_scores(stage, &layout.scores())?;
    let (deep, radiomics) = read_tables(stage, &layout)?;
    let mut report = EvalReport::new(&cfg.protocol);
    for m in ScoreMethod::ALL {
        let own: Vec<OodScore> = scores.iter().filter(|s| s.method == m.label()).cloned().collect();
        report
            .results
            .extend(baseline_eval(&manifest, m.label(), &own, &cfg.protocol).stage(stage)?);
    }
    for (name, table) in [(RF_RADIOMICS, &radiomics), (RF_DEEP, &deep)] {
        let method = RfMethod {
            name,
            table,
            hyperparams: &cfg.rf,
            rfe: rfe_for(cfg, table.kind),
        };
        report
            .results
            .extend(repeated_split_eval(&manifest, &method, &cfg.protocol).stage(stage)?);
    }
    write_report(stage, &report, &layout.eval_report(), &layout.per_seed())?;
    Ok(vec![layout.eval_report(), layout.per_seed()])
}

pub fn report(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let stage = Stage::Report;
    let layout = Layout::new(cfg);
    let manifest = load(stage, &source_manifest_path(cfg))?;
    let report: EvalReport = read_json(stage, &layout.eval_report())?;
    let cohorts = ood_cohorts(&manifest);
    let summary = tables::summarize(&report, &method_order(), &cohorts, "method");
    tables::write_summary_csv(stage, &layout.summary_csv(), &summary)?;
    let text = tables::summary_text(&summary, &cohorts);
    write_text(stage, &layout.summary_txt(), &text)?;
    print!("{text}");
    Ok(vec![layout.summary_csv(), layout.summary_txt()])
}

pub fn ablate(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let stage = Stage::Ablate;
    let layout = Layout::new(cfg);
    let manifest = load(stage, &source_manifest_path(cfg))?;
    let deep = tables::read_feature_table(stage, &layout.deep_features(), FeatureKind::Deep)?;
    let stages = cfg.stages_for_ablation();
    let mut report = EvalReport::new(&cfg.protocol);
    for s in &stages {
        let table = deep.stage_table(*s).stage(stage)?;
        let name = s.to_string();
        let method = RfMethod {
            name: &name,
            table: &table,
            hyperparams: &cfg.rf,
            rfe: None,
        };
        report
            .results
            .extend(repeated_split_eval(&manifest, &method, &cfg.protocol).stage(stage)?);
    }
    write_report(stage, &report, &layout.ablation_report(), &layout.ablation_per_seed())?;
    let cohorts = ood_cohorts(&manifest);
    let names: Vec<String> = stages.iter().map(|s| s.to_string()).collect();
    let summary = tables::summarize(&report, &names, &cohorts, "stage");
    tables::write_summary_csv(stage, &layout.ablation_csv(), &summary)?;
    let text = tables::summary_text(&summary, &cohorts);
    write_text(stage, &layout.ablation_txt(), &text)?;
    print!("{text}");
    Ok(vec![layout.ablation_csv(), layout.ablation_txt()])
}

fn explain_kind(cfg: &RunConfig, layout: &Layout, table: &FeatureTable) -> CliResult<()> {
    let stage = Stage::Explain;
    let forest = Forest::load(&layout.model(table.kind)).stage(stage)?;
    let cols: Vec<usize> = forest
        .feature_names
        .iter()
        .map(|n| {
            table
                .names
                .iter()
                .position(|t| t == n)
                .ok_or_else(|| CliError::data(stage, format!("model feature `{n}` missing from table")))
        })
        .collect::<CliResult<_>>()?;
    let pick = |v: &[f64]| cols.iter().map(|&c| v[c]).collect::<Vec<f64>>();

    // scans in row order, crops averaged
    let mut scans: Vec<(&str, CohortLabel, Vec<Vec<f64>>)> = Vec::new();
    for r in &table.rows {
        match scans.last_mut() {
            Some((id, _, crops)) if *id == r.scan_id => crops.push(pick(&r.values)),
            _ => scans.push((&r.scan_id, r.cohort_label, vec![pick(&r.values)])),
        }
    }
    let d = cols.len();
    let explained: Vec<(f64, f64, Vec<f64>)> = scans
        .par_iter()
        .map(|(id, _, crops)| {
            let mut base = 0.0;
            let mut pred = 0.0;
            let mut phi = vec![0.0; d];
            for c in crops {
                let ex = tree_shap(&forest, c).scan(stage, id)?;
                base += ex.base;
                pred += ex.prediction;
                for (p, v) in phi.iter_mut().zip(&ex.contributions) {
                    *p += v;
                }
            }
            let k = crops.len() as f64;
            Ok((base / k, pred / k, phi.into_iter().map(|v| v / k).collect()))
        })
        .collect::<CliResult<_>>()?;

    let mut csv_text = String::from("scan_id,cohort_label,base,prediction");
    for n in &forest.feature_names {
        csv_text.push(',');
        csv_text.push_str(n);
    }
    csv_text.push('\n');
    for ((id, label, _), (base, pred, phi)) in scans.iter().zip(&explained) {
        csv_text.push_str(&format!("{id},{label},{base},{pred}"));
        for v in phi {
            csv_text.push_str(&format!(",{v}"));
        }
        csv_text.push('\n');
    }
    write_text(stage, &layout.shap(table.kind), &csv_text)?;

    let rows: Vec<Vec<f64>> = table.rows.iter().map(|r| pick(&r.values)).collect();
    let y: Vec<usize> = table.rows.iter().map(|r| r.cohort_label.class()).collect();
    let x = Matrix::from_rows(&rows).stage(stage)?;
    let seed = derive_seed(cfg.protocol.base_seed, "explain", 0);
    let perm = permutation_importance(&forest, &x, &y, cfg.explain.permutation_repeats, seed).stage(stage)?;
    let mdi = mdi_importance(&forest);
    let n = explained.len().max(1) as f64;
    let mut imp = String::from("feature,mean_abs_shap,mdi,permutation\n");
    for (j, name) in forest.feature_names.iter().enumerate() {
        let mean_abs = explained.iter().map(|(_, _, p)| p[j].abs()).sum::<f64>() / n;
        imp.push_str(&format!("{name},{mean_abs},{},{}\n", mdi[j], perm[j]));
    }
    write_text(stage, &layout.importance(table.kind), &imp)
}

pub fn explain(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let layout = Layout::new(cfg);
    let (deep, radiomics) = read_tables(Stage::Explain, &layout)?;
    let mut out = Vec::new();
    for table in [&radiomics, &deep] {
        explain_kind(cfg, &layout, table)?;
        out.push(layout.shap(table.kind));
        out.push(layout.importance(table.kind));
    }
    Ok(out)
}
