//! Metrics rows emitted by the commands and the consolidated report.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::Confusion;
use super::store::{ensure_dir, write_bytes, write_json, Layout, Pipeline};
use crate::error::{Error, Result};

/// One result line. Fields a command does not produce stay `None` and are
/// written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub command: String,
    pub pipeline: Pipeline,
    pub k: usize,
    /// `test`, or for the image evaluator `normal`, `shifted` or `mixed`.
    pub set: String,
    pub adapted: bool,
    pub n: usize,
    pub f1: Option<f64>,
    pub fpr: Option<f64>,
    pub confusion: Option<Confusion>,
    /// F1 of the calibrated scores thresholded at 0.5.
    pub f1_post: Option<f64>,
    pub ece_pre: Option<f64>,
    pub ece_post: Option<f64>,
    pub brier_pre: Option<f64>,
    pub brier_post: Option<f64>,
    pub calibrator: Option<String>,
    pub coverage: Option<f64>,
    pub coverage_spread: Option<f64>,
    pub mean_bound: Option<f64>,
    pub config_hash: String,
    /// Artifact name to the leading bytes of its SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

impl Default for MetricsRow {
    fn default() -> Self {
        Self {
            command: String::new(),
            pipeline: Pipeline::Mono,
            k: 0,
            set: String::new(),
            adapted: false,
            n: 0,
            f1: None,
            fpr: None,
            confusion: None,
            f1_post: None,
            ece_pre: None,
            ece_post: None,
            brier_pre: None,
            brier_post: None,
            calibrator: None,
            coverage: None,
            coverage_spread: None,
            mean_bound: None,
            config_hash: String::new(),
            artifacts: BTreeMap::new(),
        }
    }
}

pub const REPORT_HEADER: [&str; 23] = [
    "command",
    "pipeline",
    "k",
    "set",
    "adapted",
    "n",
    "f1",
    "fpr",
    "tp",
    "fp",
    "fn",
    "tn",
    "f1_post",
    "ece_pre",
    "ece_post",
    "brier_pre",
    "brier_post",
    "calibrator",
    "coverage",
    "coverage_spread",
    "mean_bound",
    "config_hash",
    "artifacts",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "null".to_string(), |x| x.to_string())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    String::from_utf8(w.into_inner().map_err(|e| Error::Format(e.to_string()))?)
        .map_err(|e| Error::Format(e.to_string()))
}

pub fn rows_to_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).map_err(csv_err)?;
    for r in rows {
        let c = r.confusion;
        let artifacts: Vec<String> = r.artifacts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        w.write_record([
            r.command.clone(),
            r.pipeline.name().to_string(),
            r.k.to_string(),
            r.set.clone(),
            r.adapted.to_string(),
            r.n.to_string(),
            opt(r.f1),
            opt(r.fpr),
            opt(c.map(|c| c.tp)),
            opt(c.map(|c| c.fp)),
            opt(c.map(|c| c.fn_)),
            opt(c.map(|c| c.tn)),
            opt(r.f1_post),
            opt(r.ece_pre),
            opt(r.ece_post),
            opt(r.brier_pre),
            opt(r.brier_post),
            opt(r.calibrator.clone()),
            opt(r.coverage),
            opt(r.coverage_spread),
            opt(r.mean_bound),
            r.config_hash.clone(),
            artifacts.join(";"),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// F1 on the test windows per pipeline and horizon; absent rows become
/// `null`.
pub fn f1_series_csv(rows: &[MetricsRow], horizons: &[usize]) -> Result<String> {
    let pipelines: BTreeSet<Pipeline> = rows.iter().map(|r| r.pipeline).collect();
    let mut ks: Vec<usize> = horizons.to_vec();
    ks.extend(rows.iter().map(|r| r.k));
    ks.sort_unstable();
    ks.dedup();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["pipeline", "k", "f1", "fpr"]).map_err(csv_err)?;
    for p in pipelines {
        for &k in &ks {
            let row = rows
                .iter()
                .find(|r| r.command == "eval" && r.pipeline == p && r.k == k && r.set == "test" && !r.adapted);
            w.write_record([
                p.name().to_string(),
                k.to_string(),
                opt(row.and_then(|r| r.f1)),
                opt(row.and_then(|r| r.fpr)),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Rows of every `eval_*`, `calibrate_*` and `conformal_*` file under
/// `results/`, in file-name order.
pub fn collect_rows(layout: &Layout) -> Result<Vec<MetricsRow>> {
    let dir = layout.results();
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut names: Vec<String> = std::fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| {
            n.ends_with(".json")
                && ["eval_", "calibrate_", "conformal_"]
                    .iter()
                    .any(|p| n.starts_with(p))
        })
        .collect();
    names.sort();
    let mut rows = Vec::new();
    for n in names {
        let path = dir.join(&n);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let mut part: Vec<MetricsRow> = serde_json::from_slice(&bytes)?;
        rows.append(&mut part);
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
struct ReportJson<'a> {
    config_hash: String,
    rows: &'a [MetricsRow],
}

/// Writes `report.csv`, `report.json` and `f1_vs_k.csv` from all stored
/// rows.
pub fn write_report(layout: &Layout, cfg: &RunConfig) -> Result<Vec<MetricsRow>> {
    let rows = collect_rows(layout)?;
    ensure_dir(&layout.results())?;
    write_bytes(&layout.result("report.csv"), rows_to_csv(&rows)?.as_bytes())?;
    write_json(
        &layout.result("report.json"),
        &ReportJson {
            config_hash: cfg.hash(),
            rows: &rows,
        },
    )?;
    write_bytes(&layout.result("f1_vs_k.csv"), f1_series_csv(&rows, &cfg.horizons)?.as_bytes())?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(p: Pipeline, k: usize, f1: f64) -> MetricsRow {
        MetricsRow {
            command: "eval".into(),
            pipeline: p,
            k,
            set: "test".into(),
            f1: Some(f1),
            ..MetricsRow::default()
        }
    }

    #[test]
    fn empty_results_give_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let layout = Layout::new(dir.path());
        let rows = write_report(&layout, &RunConfig::default()).unwrap();
        assert!(rows.is_empty());
        let csv = std::fs::read_to_string(layout.result("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("command,pipeline,k"));
    }

    #[test]
    fn missing_horizons_are_null() {
        let csv = f1_series_csv(&[row(Pipeline::Mono, 5, 0.9)], &[5, 10]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "mono,5,0.9,null");
        assert_eq!(lines[2], "mono,10,null,null");
    }

    #[test]
    fn row_count_is_sum_of_files() {
        let dir = tempfile::tempdir().unwrap();
        let layout = Layout::new(dir.path());
        write_json(&layout.result("eval_mono_k5.json"), &vec![row(Pipeline::Mono, 5, 0.9)]).unwrap();
        write_json(
            &layout.result("eval_composite_k5.json"),
            &vec![row(Pipeline::Composite, 5, 0.8), row(Pipeline::Composite, 5, 0.7)],
        )
        .unwrap();
        let rows = write_report(&layout, &RunConfig::default()).unwrap();
        assert_eq!(rows.len(), 3);
        let csv = std::fs::read_to_string(layout.result("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
    }
}
