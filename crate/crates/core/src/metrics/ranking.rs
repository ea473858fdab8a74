use crate::error::{Error, Result};

fn undefined(metric: &'static str, reason: impl Into<String>) -> Error {
    Error::UndefinedMetric {
        metric,
        reason: reason.into(),
        context: None,
    }
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::contract(format!("NaN score at index {i}")));
    }
    Ok(())
}

/// Runs of equal scores in `order` (indices sorted by score), as `(start, end)`.
fn tie_blocks<'a>(
    scores: &'a [f64],
    order: &'a [usize],
) -> impl Iterator<Item = (usize, usize)> + 'a {
    let mut start = 0;
    std::iter::from_fn(move || {
        if start >= order.len() {
            return None;
        }
        let s = scores[order[start]];
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == s {
            end += 1;
        }
        let block = (start, end);
        start = end;
        Some(block)
    })
}

/// Area under the ROC curve as the Mann–Whitney statistic with ties counted
/// one half, from a single sort with mid-ranks.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count() as u128;
    let neg = labels.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(undefined(
            "image AUROC",
            "needs both normal and anomalous samples",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the positive rank sum, in integers: a block at 0-based start i with
    // k members has mid-rank i + (k + 1) / 2.
    let mut twice_rank_sum: u128 = 0;
    for (start, end) in tie_blocks(scores, &order) {
        let k = (end - start) as u128;
        let p = order[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        twice_rank_sum += p * (2 * start as u128 + k + 1);
    }
    let twice_u = twice_rank_sum - pos * (pos + 1);
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

/// Average precision with step interpolation: `Σ (R_k − R_{k−1})·P_k` over
/// descending distinct thresholds. Tied scores form one threshold.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let total_pos = labels.iter().filter(|&&l| l).count();
    if total_pos == 0 {
        return Err(undefined("pixel AP", "no positive pixels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut ap = 0.0;
    for (start, end) in tie_blocks(scores, &order) {
        let new_pos = order[start..end].iter().filter(|&&i| labels[i]).count();
        tp += new_pos;
        seen += end - start;
        if new_pos > 0 {
            ap += (new_pos as f64 / total_pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}
