//! CSV artifacts exchanged between steps.

use std::path::Path;

use rfdeep_core::features::{stage_slices_from_names, FeatureKind};
use rfdeep_core::manifest::CohortLabel;
use rfdeep_core::protocol::{EvalReport, FeatureRow, FeatureTable, MethodResult};
use rfdeep_core::scores::OodScore;

use crate::error::{CliError, CliResult, Stage};

const KEY_COLUMNS: [&str; 3] = ["scan_id", "cohort_label", "crop_index"];

fn csv_err(stage: Stage, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::data(stage, format!("{}: {e}", path.display()))
}

fn writer(stage: Stage, path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| csv_err(stage, dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_err(stage, path, e))
}

fn write_rows<I>(stage: Stage, path: &Path, header: Vec<String>, rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = writer(stage, path)?;
    w.write_record(&header).map_err(|e| csv_err(stage, path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(stage, path, e))?;
    }
    w.flush().map_err(|e| csv_err(stage, path, e))
}

fn read_rows(stage: Stage, path: &Path) -> CliResult<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(stage, path, e))?;
    let header = r
        .headers()
        .map_err(|e| csv_err(stage, path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| csv_err(stage, path, e))?;
    Ok((header, rows))
}

fn parse_f64(stage: Stage, path: &Path, s: &str) -> CliResult<f64> {
    s.parse::<f64>()
        .map_err(|_| csv_err(stage, path, format!("`{s}` is not a number")))
}

fn parse_label(stage: Stage, path: &Path, s: &str) -> CliResult<CohortLabel> {
    s.parse().map_err(|e| csv_err(stage, path, e))
}

pub fn write_feature_table(stage: Stage, path: &Path, table: &FeatureTable) -> CliResult<()> {
    let mut header: Vec<String> = KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(table.names.iter().cloned());
    let rows = table.rows.iter().map(|r| {
        let mut out = vec![r.scan_id.clone(), r.cohort_label.to_string(), r.crop_index.to_string()];
        out.extend(r.values.iter().map(|v| v.to_string()));
        out
    });
    write_rows(stage, path, header, rows)
}

pub fn read_feature_table(stage: Stage, path: &Path, kind: FeatureKind) -> CliResult<FeatureTable> {
    let (header, rows) = read_rows(stage, path)?;
    if header.len() < 4 || header[..3] != KEY_COLUMNS {
        return Err(csv_err(stage, path, "feature table must start with scan_id,cohort_label,crop_index"));
    }
    let names = header[3..].to_vec();
    let slices = match kind {
        FeatureKind::Deep => stage_slices_from_names(&names).map_err(|e| csv_err(stage, path, e))?,
        FeatureKind::Radiomics => Vec::new(),
    };
    let mut table = FeatureTable::new(kind, names, slices);
    for r in rows {
        let scan_id = r[0].to_string();
        let values = r
            .iter()
            .skip(3)
            .map(|s| parse_f64(stage, path, s))
            .collect::<CliResult<Vec<_>>>()
            .map_err(|e| CliError::scan(stage, &scan_id, e))?;
        table.rows.push(FeatureRow {
            cohort_label: parse_label(stage, path, &r[1])?,
            crop_index: r[2].parse().map_err(|e| csv_err(stage, path, e))?,
            scan_id,
            values,
        });
    }
    Ok(table)
}

pub fn write_scores(stage: Stage, path: &Path, scores: &[(CohortLabel, OodScore)]) -> CliResult<()> {
    let header = ["scan_id", "cohort_label", "method", "value", "fallback_used"]
        .map(String::from)
        .to_vec();
    let rows = scores.iter().map(|(l, s)| {
        vec![
            s.scan_id.clone(),
            l.to_string(),
            s.method.clone(),
            s.value.to_string(),
            s.fallback_used.to_string(),
        ]
    });
    write_rows(stage, path, header, rows)
}

pub fn read_scores(stage: Stage, path: &Path) -> CliResult<Vec<OodScore>> {
    let (_, rows) = read_rows(stage, path)?;
    rows.iter()
        .map(|r| {
            Ok(OodScore {
                scan_id: r[0].to_string(),
                method: r[2].to_string(),
                value: parse_f64(stage, path, &r[3])?,
                fallback_used: &r[4] == "true",
            })
        })
        .collect()
}

pub fn write_per_seed(stage: Stage, path: &Path, report: &EvalReport) -> CliResult<()> {
    let header = ["seed", "method", "cohort", "auroc", "fpr95"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for r in &report.results {
        for (s, (a, f)) in r.auroc_per_seed.iter().zip(&r.fpr95_per_seed).enumerate() {
            rows.push(vec![s.to_string(), r.method.clone(), r.cohort.clone(), a.to_string(), f.to_string()]);
        }
    }
    write_rows(stage, path, header, rows)
}

/// Table-1 layout: one row per method, an AUROC/FPR95 column pair per OOD
/// cohort, percentages with two decimals.
pub struct Summary {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn pct(mean: f64, std: f64) -> [String; 2] {
    [format!("{mean:.2}"), format!("{std:.2}")]
}

pub fn summarize(report: &EvalReport, methods: &[String], cohorts: &[String], row_label: &str) -> Summary {
    let mut header = vec![row_label.to_string()];
    for c in cohorts {
        for m in ["auroc_mean", "auroc_std", "fpr95_mean", "fpr95_std"] {
            header.push(format!("{c}_{m}"));
        }
    }
    let rows = methods
        .iter()
        .filter(|m| report.results.iter().any(|r| &r.method == *m))
        .map(|m| {
            let mut row = vec![m.clone()];
            for c in cohorts {
                match report.get(m, c) {
                    Some(MethodResult {
                        auroc_mean,
                        auroc_std,
                        fpr95_mean,
                        fpr95_std,
                        ..
                    }) => {
                        row.extend(pct(*auroc_mean, *auroc_std));
                        row.extend(pct(*fpr95_mean, *fpr95_std));
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), 4)),
                }
            }
            row
        })
        .collect();
    Summary { header, rows }
}

pub fn write_summary_csv(stage: Stage, path: &Path, s: &Summary) -> CliResult<()> {
    write_rows(stage, path, s.header.clone(), s.rows.clone())
}

/// Aligned text rendering with `mean±std` cells.
pub fn summary_text(s: &Summary, cohorts: &[String]) -> String {
    let mut table: Vec<Vec<String>> = Vec::new();
    let mut head = vec![s.header[0].clone()];
    for c in cohorts {
        head.push(format!("{c} AUROC"));
        head.push(format!("{c} FPR95"));
    }
    table.push(head);
    for r in &s.rows {
        let mut line = vec![r[0].clone()];
        for chunk in r[1..].chunks(2) {
            line.push(if chunk[0].is_empty() {
                "-".into()
            } else {
                format!("{}±{}", chunk[0], chunk[1])
            });
        }
        table.push(line);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|i| table.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &table {
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                let pad = w - c.chars().count();
                if i == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn read_summary_csv(path: &Path) -> CliResult<Summary> {
    let (header, rows) = read_rows(Stage::Report, path)?;
    Ok(Summary {
        header,
        rows: rows.iter().map(|r| r.iter().map(str::to_string).collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rfdeep_core::protocol::ProtocolConfig;

    #[test]
    fn feature_table_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let mut t = FeatureTable::new(FeatureKind::Radiomics, vec!["a".into(), "b".into()], vec![]);
        t.rows.push(FeatureRow {
            scan_id: "s1".into(),
            cohort_label: CohortLabel::Ood,
            crop_index: 0,
            values: vec![0.1 + 0.2, -1e-300],
        });
        write_feature_table(Stage::Extract, &p, &t).unwrap();
        assert_eq!(read_feature_table(Stage::Train, &p, FeatureKind::Radiomics).unwrap(), t);
        assert!(read_feature_table(Stage::Train, &p, FeatureKind::Deep).is_err());
    }

    #[test]
    fn summary_shape_and_text() {
        let mut rep = EvalReport::new(&ProtocolConfig::default());
        rep.results.push(MethodResult {
            method: "RF-Deep".into(),
            cohort: "far".into(),
            auroc_mean: 95.156,
            auroc_std: 1.0,
            fpr95_mean: 18.264,
            fpr95_std: 0.5,
            auroc_per_seed: vec![],
            fpr95_per_seed: vec![],
        });
        let cohorts = vec!["far".to_string()];
        let s = summarize(&rep, &["Energy".into(), "RF-Deep".into()], &cohorts, "method");
        assert_eq!(s.rows, vec![vec!["RF-Deep", "95.16", "1.00", "18.26", "0.50"]]);
        let text = summary_text(&s, &cohorts);
        assert!(text.contains("95.16±1.00"));
        assert_eq!(text.lines().count(), 2);
    }
}
