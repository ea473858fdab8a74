//! Report serialization.
//!
//! The flat CSV has one row per class per checkpoint, columns in
//! [`CSV_COLUMNS`] order. A checkpoint with no evaluated classes (an empty
//! zero-shot holdout) is written as a single row with empty class columns so
//! that reloading reproduces it. Floats use Rust's shortest round-trip
//! formatting, so a reload is value-identical.

use std::path::Path;

use crate::error::{Error, Result};

use super::{ClassEval, MetricReport, ReportKind};

pub const CSV_COLUMNS: [&str; 16] = [
    "checkpoint",
    "checkpoint_id",
    "kind",
    "class_id",
    "image_auroc",
    "pixel_ap",
    "class_avg",
    "n_test_normal",
    "n_test_anomalous",
    "acc_image",
    "acc_pixel",
    "acc_avg",
    "fm_image",
    "fm_pixel",
    "fm_avg",
    "fm_defined",
];

pub const SUMMARY_COLUMNS: [&str; 6] = [
    "checkpoint",
    "checkpoint_id",
    "kind",
    "n_classes",
    "acc_image_pixel_avg",
    "fm_image_pixel_avg",
];

const ACC_TOLERANCE: f64 = 1e-12;

fn check_invariants(r: &MetricReport) -> Result<()> {
    if (r.acc_avg - (r.acc_image + r.acc_pixel) / 2.0).abs() > ACC_TOLERANCE {
        return Err(Error::contract(format!(
            "checkpoint {}: acc_avg {} is not the mean of {} and {}",
            r.checkpoint_id, r.acc_avg, r.acc_image, r.acc_pixel
        )));
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::data(format!("csv: {e}"))
}

/// Flat per-class CSV for a checkpoint history.
pub fn reports_csv(reports: &[MetricReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    for r in reports {
        check_invariants(r)?;
        let head = [
            r.checkpoint.to_string(),
            r.checkpoint_id.clone(),
            r.kind.as_str().to_owned(),
        ];
        let tail = [
            r.acc_image.to_string(),
            r.acc_pixel.to_string(),
            r.acc_avg.to_string(),
            r.fm_image.to_string(),
            r.fm_pixel.to_string(),
            r.fm_avg.to_string(),
            r.fm_defined.to_string(),
        ];
        let class_rows: Vec<[String; 6]> = if r.classes.is_empty() {
            vec![Default::default()]
        } else {
            r.classes
                .iter()
                .map(|c| {
                    [
                        c.class_id.clone(),
                        c.image_auroc.to_string(),
                        c.pixel_ap.to_string(),
                        c.avg().to_string(),
                        c.n_test_normal.to_string(),
                        c.n_test_anomalous.to_string(),
                    ]
                })
                .collect()
        };
        for class in class_rows {
            w.write_record(head.iter().chain(&class).chain(&tail))
                .map_err(csv_error)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::data(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::data(format!("csv: {e}")))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| {
        Error::data(format!(
            "report csv line {line}: bad {} value {raw:?}",
            CSV_COLUMNS[i]
        ))
    })
}

/// Inverse of [`reports_csv`].
pub fn parse_reports_csv(text: &str) -> Result<Vec<MetricReport>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().ne(CSV_COLUMNS) {
        return Err(Error::data(format!(
            "report csv header {:?} does not match the frozen column order",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut out: Vec<MetricReport> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let line = i + 2;
        let checkpoint: usize = field(&rec, 0, line)?;
        let checkpoint_id = rec.get(1).unwrap_or("").to_owned();
        let kind = ReportKind::parse(rec.get(2).unwrap_or("")).ok_or_else(|| {
            Error::data(format!(
                "report csv line {line}: unknown kind {:?}",
                rec.get(2)
            ))
        })?;
        let same = out.last().is_some_and(|r| {
            r.checkpoint == checkpoint && r.checkpoint_id == checkpoint_id && r.kind == kind
        });
        if !same {
            out.push(MetricReport {
                checkpoint,
                checkpoint_id,
                kind,
                classes: Vec::new(),
                acc_image: field(&rec, 9, line)?,
                acc_pixel: field(&rec, 10, line)?,
                acc_avg: field(&rec, 11, line)?,
                fm_image: field(&rec, 12, line)?,
                fm_pixel: field(&rec, 13, line)?,
                fm_avg: field(&rec, 14, line)?,
                fm_defined: field(&rec, 15, line)?,
            });
        }
        let class_id = rec.get(3).unwrap_or("");
        if !class_id.is_empty() {
            let report = out.last_mut().expect("pushed above");
            report.classes.push(ClassEval {
                class_id: class_id.to_owned(),
                image_auroc: field(&rec, 4, line)?,
                pixel_ap: field(&rec, 5, line)?,
                n_test_normal: field(&rec, 7, line)?,
                n_test_anomalous: field(&rec, 8, line)?,
            });
        }
    }
    for r in &out {
        check_invariants(r)?;
    }
    Ok(out)
}

pub fn reports_json(reports: &[MetricReport]) -> Result<String> {
    for r in reports {
        check_invariants(r)?;
    }
    let mut s = serde_json::to_string_pretty(reports)
        .map_err(|e| Error::data(format!("json encoding: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_reports_json(text: &str, path: &Path) -> Result<Vec<MetricReport>> {
    serde_json::from_str(text).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })
}

fn triple(a: f64, b: f64, c: f64) -> String {
    format!("{:.1}/{:.1}/{:.1}", 100.0 * a, 100.0 * b, 100.0 * c)
}

/// One row per checkpoint with ACC and FM as `image/pixel/avg` percentages.
/// FM is `-` where it is undefined.
pub fn summary_csv(reports: &[MetricReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_COLUMNS).map_err(csv_error)?;
    for r in reports {
        check_invariants(r)?;
        let fm = if r.fm_defined {
            triple(r.fm_image, r.fm_pixel, r.fm_avg)
        } else {
            "-".to_owned()
        };
        w.write_record([
            r.checkpoint.to_string(),
            r.checkpoint_id.clone(),
            r.kind.as_str().to_owned(),
            r.classes.len().to_string(),
            triple(r.acc_image, r.acc_pixel, r.acc_avg),
            fm,
        ])
        .map_err(csv_error)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::data(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::data(format!("csv: {e}")))
}
