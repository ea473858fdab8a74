//! Files written for a run directory.
//!
//! | file                 | content |
//! |----------------------|---------|
//! | `bank.cmab`          | every adapter set, base first |
//! | `reports.json`       | checkpoint reports, then zero-shot reports |
//! | `reports.csv`        | the same, one row per class per report |
//! | `summary.csv`        | one row per report, `image/pixel/avg` triples |
//! | `loss/<phase>.csv`   | per-epoch training losses |
//! | `run.json`           | scenario name, seed, task count |
//!
//! Nothing time- or host-dependent is written, so equal runs give equal bytes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapters::write_bank;
use crate::error::{Error, Result};
use crate::metrics::{parse_reports_json, reports_csv, reports_json, summary_csv, MetricReport};
use crate::training::write_loss_log;

use super::RunState;

pub const BANK_FILE: &str = "bank.cmab";
pub const REPORTS_JSON: &str = "reports.json";
pub const REPORTS_CSV: &str = "reports.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const RUN_META: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scenario: String,
    pub seed: u64,
    pub completed_tasks: usize,
    pub bank_sets: usize,
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes reports in one format; CSV also writes the summary table.
pub fn write_reports(
    reports: &[MetricReport],
    dir: impl AsRef<Path>,
    fmt: ReportFormat,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    match fmt {
        ReportFormat::Json => Ok(vec![write(
            dir.join(REPORTS_JSON),
            &reports_json(reports)?,
        )?]),
        ReportFormat::Csv => Ok(vec![
            write(dir.join(REPORTS_CSV), &reports_csv(reports)?)?,
            write(dir.join(SUMMARY_CSV), &summary_csv(reports)?)?,
        ]),
    }
}

pub fn read_reports(dir: impl AsRef<Path>) -> Result<Vec<MetricReport>> {
    let path = dir.as_ref().join(REPORTS_JSON);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    parse_reports_json(&text, &path)
}

/// Persists the whole run under `dir`.
pub fn write_run(run: &RunState, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    write_bank(&run.bank, dir.join(BANK_FILE))?;
    let reports = run.all_reports();
    write_reports(&reports, dir, ReportFormat::Json)?;
    write_reports(&reports, dir, ReportFormat::Csv)?;
    for (phase, log) in &run.loss_logs {
        let path = dir.join("loss").join(format!("{phase}.csv"));
        std::fs::create_dir_all(dir.join("loss")).map_err(|e| Error::io(dir.join("loss"), e))?;
        write_loss_log(log, path)?;
    }
    let meta = RunMeta {
        scenario: run.scenario.clone(),
        seed: run.seed,
        completed_tasks: run.completed_tasks,
        bank_sets: run.bank.len(),
    };
    let mut text = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::data(format!("json encoding: {e}")))?;
    text.push('\n');
    write(dir.join(RUN_META), &text)?;
    Ok(())
}
