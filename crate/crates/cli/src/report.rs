//! Result consolidation: merge per-model curve records found under a
//! directory into one table keyed by (model, size), flagging holes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use abstractor_core::harness::{mean_sem, RunRecord};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// One learning-curve cell as persisted to `runs_<model>.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRow {
    pub model: String,
    pub size: usize,
    pub trial: usize,
    pub metric: String,
    /// Metric value; absent when the trial aborted.
    pub test_acc: Option<f64>,
    pub aborted: bool,
    pub record: RunRecord,
}

/// One training run as persisted by robustness sweeps and pre-training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRow {
    pub model: String,
    pub trial: usize,
    pub record: RunRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub model: String,
    pub size: usize,
    /// Non-aborted trials that produced a metric value.
    pub trials: usize,
    pub mean: Option<f64>,
    pub sem: Option<f64>,
    /// False when the cell has fewer usable trials than the widest cell in
    /// the table, so partial grids are visible at a glance.
    pub complete: bool,
}

fn collect_run_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_run_files(&path, out)?;
        } else if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("runs_") && n.ends_with(".jsonl"))
        {
            out.push(path);
        }
    }
    Ok(())
}

/// Builds the merged table from every `runs_*.jsonl` under `dir`
/// (recursively). Deterministic in file order and grouping, so re-running
/// the report writes identical bytes.
pub fn build_report(dir: &Path) -> Result<Vec<ReportRow>> {
    if !dir.is_dir() {
        return Err(CliError::validation(format!(
            "results directory does not exist: {}",
            dir.display()
        )));
    }
    let mut files = Vec::new();
    collect_run_files(dir, &mut files)?;
    let mut cells: BTreeMap<(String, usize), (usize, Vec<f64>)> = BTreeMap::new();
    for file in &files {
        let text = std::fs::read_to_string(file)?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: CellRow = serde_json::from_str(line).map_err(|e| {
                CliError::validation(format!(
                    "{} line {}: not a curve run record: {e}",
                    file.display(),
                    i + 1
                ))
            })?;
            let entry = cells.entry((row.model, row.size)).or_default();
            entry.0 += 1;
            if let Some(v) = row.test_acc {
                if !row.aborted {
                    entry.1.push(v);
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(CliError::validation(format!(
            "no curve run records found under {}",
            dir.display()
        )));
    }

    let models: BTreeSet<String> = cells.keys().map(|(m, _)| m.clone()).collect();
    let sizes: BTreeSet<usize> = cells.keys().map(|&(_, s)| s).collect();
    let expected = cells.values().map(|(total, _)| *total).max().unwrap_or(0);

    // Full cross product: a size missing for one model still gets a row, so
    // incomplete grids are flagged rather than silently dropped.
    let mut rows = Vec::new();
    for model in &models {
        for &size in &sizes {
            let (total, accs) = cells
                .get(&(model.clone(), size))
                .cloned()
                .unwrap_or((0, Vec::new()));
            let (mean, sem) = if accs.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_sem(&accs);
                (Some(m), Some(s))
            };
            rows.push(ReportRow {
                model: model.clone(),
                size,
                trials: accs.len(),
                mean,
                sem,
                complete: total == expected && accs.len() == total,
            });
        }
    }
    Ok(rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes report.csv and report.json into `dir` and prints a summary line.
pub fn report(dir: &Path) -> Result<()> {
    let rows = build_report(dir)?;
    let mut csv = String::from("model,size,trials,mean,sem,complete\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.model,
            r.size,
            r.trials,
            fmt_opt(r.mean),
            fmt_opt(r.sem),
            r.complete
        ));
    }
    std::fs::write(dir.join("report.csv"), &csv)?;
    let json = serde_json::to_string_pretty(&rows)
        .map_err(|e| CliError::Internal(format!("report encode: {e}")))?;
    std::fs::write(dir.join("report.json"), json + "\n")?;

    let models = rows.iter().map(|r| r.model.as_str()).collect::<BTreeSet<_>>().len();
    let sizes = rows.iter().map(|r| r.size).collect::<BTreeSet<_>>().len();
    let incomplete = rows.iter().filter(|r| !r.complete).count();
    println!(
        "report: {} models x {} sizes, {} incomplete -> {}",
        models,
        sizes,
        incomplete,
        dir.join("report.csv").display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use abstractor_core::harness::RunRecord;
    use std::collections::BTreeMap;

    fn record(acc: f64) -> RunRecord {
        RunRecord {
            spec_hash: "0".repeat(16),
            seed: 1,
            epochs: vec![],
            best_epoch: 1,
            test: BTreeMap::from([("elementwise_acc".to_string(), acc)]),
            wall_secs: 0.0,
            aborted: None,
            checkpoint: None,
        }
    }

    fn write_cells(path: &Path, model: &str, cells: &[(usize, usize, Option<f64>)]) {
        let mut text = String::new();
        for &(size, trial, acc) in cells {
            let row = CellRow {
                model: model.to_string(),
                size,
                trial,
                metric: "elementwise_acc".to_string(),
                test_acc: acc,
                aborted: acc.is_none(),
                record: record(acc.unwrap_or(0.0)),
            };
            text.push_str(&serde_json::to_string(&row).unwrap());
            text.push('\n');
        }
        std::fs::write(path, text).unwrap();
    }

    #[test]
    fn merges_models_and_flags_missing_cells() {
        let dir = tempfile::tempdir().unwrap();
        write_cells(
            &dir.path().join("runs_a.jsonl"),
            "a",
            &[(10, 0, Some(0.5)), (10, 1, Some(0.7)), (20, 0, Some(0.8)), (20, 1, Some(0.9))],
        );
        // Model b is missing size 20 entirely and one trial aborted at 10.
        write_cells(
            &dir.path().join("runs_b.jsonl"),
            "b",
            &[(10, 0, Some(0.4)), (10, 1, None)],
        );
        let rows = build_report(dir.path()).unwrap();
        assert_eq!(rows.len(), 4);
        let get = |m: &str, s: usize| rows.iter().find(|r| r.model == m && r.size == s).unwrap();
        assert!(get("a", 10).complete && get("a", 20).complete);
        assert_eq!(get("a", 10).mean, Some(0.6));
        let b10 = get("b", 10);
        assert!(!b10.complete, "aborted trial must mark the cell incomplete");
        assert_eq!(b10.trials, 1);
        let b20 = get("b", 20);
        assert!(!b20.complete && b20.trials == 0 && b20.mean.is_none());
    }

    #[test]
    fn report_files_are_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        write_cells(&dir.path().join("runs_a.jsonl"), "a", &[(10, 0, Some(0.5))]);
        report(dir.path()).unwrap();
        let csv1 = std::fs::read(dir.path().join("report.csv")).unwrap();
        let json1 = std::fs::read(dir.path().join("report.json")).unwrap();
        // Second run sees its own report files in the directory and must
        // still produce identical bytes.
        report(dir.path()).unwrap();
        assert_eq!(csv1, std::fs::read(dir.path().join("report.csv")).unwrap());
        assert_eq!(json1, std::fs::read(dir.path().join("report.json")).unwrap());
    }

    #[test]
    fn empty_directory_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = build_report(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn corrupt_record_lines_are_reported_not_skipped() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("runs_x.jsonl"), "{\"bad\": 1}\n").unwrap();
        let err = build_report(dir.path()).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }
}
