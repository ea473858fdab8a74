//! Tie-aware AUROC and average precision, pooled per-class evaluation, and
//! the forgetting measure across checkpoints.

use continual_ad::featio::{Label, Mask};
use continual_ad::metrics::{
    auroc, average_precision, class_eval, forgetting_measure, EvalItem, FmBaseline, MetricReport,
    ReportKind,
};
use continual_ad::numcore::Mat;

fn main() -> continual_ad::Result<()> {
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [false, false, true, true];
    println!(
        "AUROC {} AP {}",
        auroc(&scores, &labels)?,
        average_precision(&scores, &labels)?
    );

    // Tied scores count half a pair for AUROC and form one PR block for AP.
    let tied = [0.5, 0.5, 0.5, 0.9];
    println!(
        "with ties: AUROC {} AP {:.4}",
        auroc(&tied, &labels)?,
        average_precision(&tied, &labels)?
    );

    // Pixel AP pools every pixel of every test image of the class.
    let map_a = Mat::from_vec(2, 2, vec![0.9, 0.2, 0.1, 0.3])?;
    let mask_a = Mask::from_vec(2, 2, vec![1, 0, 0, 0])?;
    let map_n = Mat::from_vec(2, 2, vec![0.2, 0.1, 0.4, 0.1])?;
    let items = [
        EvalItem {
            label: Label::Anomalous,
            image_score: 0.9,
            pixel_map: &map_a,
            mask: Some(&mask_a),
        },
        EvalItem {
            label: Label::Normal,
            image_score: 0.4,
            pixel_map: &map_n,
            mask: None,
        },
    ];
    let before = class_eval("widget", &items)?;
    println!(
        "widget: image AUROC {} pixel AP {}",
        before.image_auroc, before.pixel_ap
    );

    let mut after = before.clone();
    after.image_auroc = 0.8;
    after.pixel_ap = 0.6;
    let history = [
        MetricReport::new(0, "base", ReportKind::Checkpoint, vec![before]),
        MetricReport::new(1, "task_01", ReportKind::Checkpoint, vec![after]),
    ];
    let fm = forgetting_measure(&history, FmBaseline::AfterTask)?;
    println!(
        "forgetting: image {:.2} pixel {:.2} avg {:.2}",
        fm.fm_image, fm.fm_pixel, fm.fm_avg
    );

    // Undefined metrics are errors, not NaN.
    let err = auroc(&[0.3, 0.7], &[true, true]).unwrap_err();
    println!("single-class input: {err} (exit code {})", err.exit_code());
    Ok(())
}
