//! Exact evaluation metrics and per-checkpoint reports.
//!
//! ACC is the unweighted mean over classes of image AUROC and pixel AP. FM is
//! the mean drop of a class's metric between a reference checkpoint (by
//! default the one right after the class was introduced) and the final one.

mod ranking;
mod serialize;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featio::{Label, Mask};
use crate::numcore::Mat;

pub use ranking::{auroc, average_precision};
pub use serialize::{
    parse_reports_csv, parse_reports_json, reports_csv, reports_json, summary_csv, CSV_COLUMNS,
    SUMMARY_COLUMNS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEval {
    pub class_id: String,
    pub image_auroc: f64,
    pub pixel_ap: f64,
    pub n_test_normal: usize,
    pub n_test_anomalous: usize,
}

impl ClassEval {
    pub fn avg(&self) -> f64 {
        (self.image_auroc + self.pixel_ap) / 2.0
    }
}

/// Model outputs for one test image.
#[derive(Debug, Clone, Copy)]
pub struct EvalItem<'a> {
    pub label: Label,
    pub image_score: f64,
    pub pixel_map: &'a Mat,
    /// Absent only for normal images, whose pixels are then all negatives.
    pub mask: Option<&'a Mask>,
}

/// Image AUROC over the class's images and pixel AP over every pixel of
/// every image pooled into one ranking.
pub fn class_eval(class_id: &str, items: &[EvalItem<'_>]) -> Result<ClassEval> {
    let mut image_scores = Vec::with_capacity(items.len());
    let mut image_labels = Vec::with_capacity(items.len());
    let mut pixel_scores = Vec::new();
    let mut pixel_labels = Vec::new();
    for item in items {
        image_scores.push(item.image_score);
        image_labels.push(item.label.is_anomalous());
        pixel_scores.extend_from_slice(item.pixel_map.data());
        match item.mask {
            Some(mask) => {
                if (mask.height(), mask.width()) != item.pixel_map.shape() {
                    return Err(Error::data(format!(
                        "class {class_id}: pixel map {:?} does not match mask {}x{}",
                        item.pixel_map.shape(),
                        mask.height(),
                        mask.width()
                    )));
                }
                pixel_labels.extend(mask.data().iter().map(|&v| v == 1));
            }
            None if item.label == Label::Anomalous => {
                return Err(Error::data(format!(
                    "class {class_id}: anomalous test image without mask"
                )))
            }
            None => pixel_labels.extend(std::iter::repeat_n(false, item.pixel_map.len())),
        }
    }
    let image_auroc = auroc(&image_scores, &image_labels).map_err(|e| e.with_context(class_id))?;
    let pixel_ap =
        average_precision(&pixel_scores, &pixel_labels).map_err(|e| e.with_context(class_id))?;
    let n_anom = image_labels.iter().filter(|&&l| l).count();
    Ok(ClassEval {
        class_id: class_id.to_owned(),
        image_auroc,
        pixel_ap,
        n_test_normal: items.len() - n_anom,
        n_test_anomalous: n_anom,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Checkpoint,
    ZeroShot,
    Eval,
}

impl ReportKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportKind::Checkpoint => "checkpoint",
            ReportKind::ZeroShot => "zero_shot",
            ReportKind::Eval => "eval",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "checkpoint" => Some(ReportKind::Checkpoint),
            "zero_shot" => Some(ReportKind::ZeroShot),
            "eval" => Some(ReportKind::Eval),
            _ => None,
        }
    }
}

/// Which checkpoint a class's forgetting is measured from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FmBaseline {
    /// The checkpoint right after the class's task.
    #[default]
    AfterTask,
    /// The best value the class reached before the final checkpoint.
    BestSoFar,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Forgetting {
    pub fm_image: f64,
    pub fm_pixel: f64,
    pub fm_avg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Position in the task stream: 0 = base, n = after task n.
    pub checkpoint: usize,
    pub checkpoint_id: String,
    pub kind: ReportKind,
    pub classes: Vec<ClassEval>,
    pub acc_image: f64,
    pub acc_pixel: f64,
    pub acc_avg: f64,
    pub fm_image: f64,
    pub fm_pixel: f64,
    pub fm_avg: f64,
    /// False when fewer than two checkpoints exist; FM fields are then 0.
    pub fm_defined: bool,
}

impl MetricReport {
    /// Aggregates class results; FM starts undefined.
    pub fn new(
        checkpoint: usize,
        checkpoint_id: impl Into<String>,
        kind: ReportKind,
        classes: Vec<ClassEval>,
    ) -> Self {
        let (acc_image, acc_pixel) = if classes.is_empty() {
            (0.0, 0.0)
        } else {
            let n = classes.len() as f64;
            (
                classes.iter().map(|c| c.image_auroc).sum::<f64>() / n,
                classes.iter().map(|c| c.pixel_ap).sum::<f64>() / n,
            )
        };
        MetricReport {
            checkpoint,
            checkpoint_id: checkpoint_id.into(),
            kind,
            classes,
            acc_image,
            acc_pixel,
            acc_avg: (acc_image + acc_pixel) / 2.0,
            fm_image: 0.0,
            fm_pixel: 0.0,
            fm_avg: 0.0,
            fm_defined: false,
        }
    }

    pub fn set_forgetting(&mut self, fm: Forgetting) {
        self.fm_image = fm.fm_image;
        self.fm_pixel = fm.fm_pixel;
        self.fm_avg = fm.fm_avg;
        self.fm_defined = true;
    }

    pub fn class(&self, class_id: &str) -> Option<&ClassEval> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }
}

/// Forgetting over a checkpoint history ordered by time.
///
/// Each class is introduced at the first checkpoint that evaluates it; classes
/// introduced at the final checkpoint are skipped. Negative drops are kept.
pub fn forgetting_measure(history: &[MetricReport], baseline: FmBaseline) -> Result<Forgetting> {
    if history.len() < 2 {
        return Err(Error::UndefinedMetric {
            metric: "forgetting measure",
            reason: "needs at least two checkpoints".into(),
            context: None,
        });
    }
    let last = history.len() - 1;
    let mut introduced: BTreeMap<&str, usize> = BTreeMap::new();
    for (t, report) in history.iter().enumerate() {
        for c in &report.classes {
            introduced.entry(c.class_id.as_str()).or_insert(t);
        }
    }
    let mut drops = Vec::new();
    for (&class_id, &t) in &introduced {
        if t == last {
            continue;
        }
        let at = |k: usize| -> Result<&ClassEval> {
            history[k].class(class_id).ok_or_else(|| {
                Error::data(format!(
                    "class {class_id} missing from checkpoint {}",
                    history[k].checkpoint_id
                ))
            })
        };
        let fin = at(last)?;
        let reference = match baseline {
            FmBaseline::AfterTask => {
                let r = at(t)?;
                (r.image_auroc, r.pixel_ap, r.avg())
            }
            FmBaseline::BestSoFar => {
                let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
                for k in t..last {
                    let r = at(k)?;
                    best = (
                        best.0.max(r.image_auroc),
                        best.1.max(r.pixel_ap),
                        best.2.max(r.avg()),
                    );
                }
                best
            }
        };
        drops.push((
            reference.0 - fin.image_auroc,
            reference.1 - fin.pixel_ap,
            reference.2 - fin.avg(),
        ));
    }
    if drops.is_empty() {
        return Ok(Forgetting::default());
    }
    let n = drops.len() as f64;
    Ok(Forgetting {
        fm_image: drops.iter().map(|d| d.0).sum::<f64>() / n,
        fm_pixel: drops.iter().map(|d| d.1).sum::<f64>() / n,
        fm_avg: drops.iter().map(|d| d.2).sum::<f64>() / n,
    })
}
