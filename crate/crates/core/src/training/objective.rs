//! Per-sample loss composition and its gradient with respect to every
//! adapter weight.
//!
//! For stage `l` with frozen features `F` (`G × d`):
//!
//! * real branch: `B = αF + (1−α)·A(F)`, scored against the text bank.
//!   Normal samples use an all-zero target with CE + dice + focal; anomalous
//!   samples use the pooled ground-truth mask with dice + focal.
//! * synthetic branch (normal samples only): `B = αF + (1−α)·A(F + γ)` with an
//!   all-ones target and CE alone.
//!
//! Gradients stop at `F`: stage `l`'s adapter only affects stage `l`'s scores.

use crate::adapters::{draw_noise, Adapter, AdapterSet};
use crate::error::{Error, Result};
use crate::featio::{pool_mask_to_grid, FeatureSample, Label, TextBank};
use crate::numcore::{dot, matmul, matmul_at, norm, Mat, RandomStream};
use crate::scoring::sigmoid;
use crate::NUM_STAGES;

use super::losses::{ce_loss, dice_loss, focal_loss};
use super::TrainConfig;

/// Loss terms active in one branch. `None` marks a term the branch does not use.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub ce: Option<f64>,
    pub dice: Option<f64>,
    pub focal: Option<f64>,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.ce.unwrap_or(0.0) + self.dice.unwrap_or(0.0) + self.focal.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageLoss {
    pub normal: Option<LossTerms>,
    pub anomalous: Option<LossTerms>,
    pub synthetic: Option<LossTerms>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossBreakdown {
    pub l_no: f64,
    pub l_an: f64,
    pub l_syn: f64,
    pub l_total: f64,
    pub stages: Vec<StageLoss>,
}

/// Gradients for one adapter set, stage-indexed like the set.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSet {
    pub dw1: [Mat; NUM_STAGES],
    pub dw2: [Mat; NUM_STAGES],
}

impl GradSet {
    pub fn zeros_like(set: &AdapterSet) -> Self {
        GradSet {
            dw1: std::array::from_fn(|s| {
                Mat::zeros(set.adapters[s].w1.rows(), set.adapters[s].w1.cols())
            }),
            dw2: std::array::from_fn(|s| {
                Mat::zeros(set.adapters[s].w2.rows(), set.adapters[s].w2.cols())
            }),
        }
    }

    pub fn add_assign(&mut self, other: &GradSet) -> Result<()> {
        for s in 0..NUM_STAGES {
            self.dw1[s].add_assign(&other.dw1[s])?;
            self.dw2[s].add_assign(&other.dw2[s])?;
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        for m in self.dw1.iter_mut().chain(self.dw2.iter_mut()) {
            m.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dw1.iter().chain(&self.dw2).all(Mat::is_finite)
    }
}

/// Frozen synthetic-branch noise for one sample: one grid per stage, drawn in
/// stage order. Anomalous samples draw nothing.
pub fn draw_sample_noise(
    sample: &FeatureSample,
    beta: f64,
    rng: &mut RandomStream,
) -> Result<[Option<Mat>; NUM_STAGES]> {
    let mut out: [Option<Mat>; NUM_STAGES] = Default::default();
    if sample.label == Label::Normal {
        for (s, slot) in out.iter_mut().enumerate() {
            *slot = draw_noise(&sample.stages[s].features, rng, beta)?;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum Objective {
    /// CE + dice + focal
    Normal,
    /// dice + focal
    Anomalous,
    /// CE only
    Synthetic,
}

struct BranchResult {
    terms: LossTerms,
    dw1: Mat,
    dw2: Mat,
}

/// Forward and backward through one branch of one stage.
#[allow(clippy::too_many_arguments)]
fn branch(
    adapter: &Adapter,
    raw: &Mat,
    input: &Mat,
    grid: (usize, usize),
    target: &Mat,
    objective: Objective,
    text: &TextBank,
    cfg: &TrainConfig,
    tau: f64,
) -> Result<BranchResult> {
    let alpha = cfg.alpha;
    let (hidden, adapted) = adapter.forward_with_hidden(input)?;
    let blended = raw.zip_with(&adapted, |f, a| alpha * f + (1.0 - alpha) * a)?;
    let cells = blended.rows();

    let mut probs = Mat::zeros(grid.0, grid.1);
    for g in 0..cells {
        let b = blended.row(g);
        let z = (cos(b, &text.anomaly) - cos(b, &text.normal)) / tau;
        probs.data_mut()[g] = sigmoid(z);
    }

    let mut terms = LossTerms::default();
    let mut d_prob = Mat::zeros(grid.0, grid.1);
    let mut take = |(value, grad): (f64, Mat), slot: &mut Option<f64>| -> Result<()> {
        *slot = Some(value);
        d_prob.add_assign(&grad)
    };
    if matches!(objective, Objective::Normal | Objective::Synthetic) {
        take(ce_loss(&probs, target)?, &mut terms.ce)?;
    }
    if matches!(objective, Objective::Normal | Objective::Anomalous) {
        take(dice_loss(&probs, target, cfg.dice_eps)?, &mut terms.dice)?;
        take(
            focal_loss(&probs, target, cfg.focal_gamma, cfg.focal_alpha)?,
            &mut terms.focal,
        )?;
    }

    // dL/dB through the sigmoid and both cosines.
    let d = blended.cols();
    let mut d_blended = Mat::zeros(cells, d);
    for g in 0..cells {
        let p = probs.data()[g];
        let dz = d_prob.data()[g] * p * (1.0 - p);
        if dz == 0.0 {
            continue;
        }
        let b = blended.row(g);
        let nb = norm(b);
        if nb == 0.0 {
            continue;
        }
        let out = d_blended.row_mut(g);
        accumulate_cos_grad(out, b, nb, &text.anomaly, dz / tau);
        accumulate_cos_grad(out, b, nb, &text.normal, -dz / tau);
    }

    let d_adapted = d_blended.scale(1.0 - alpha);
    let dw2 = matmul_at(&d_adapted, &hidden)?;
    let d_hidden = matmul(&d_adapted, &adapter.w2)?;
    let dw1 = matmul_at(&d_hidden, input)?;
    Ok(BranchResult { terms, dw1, dw2 })
}

fn cos(b: &[f64], t: &[f64]) -> f64 {
    let nb = norm(b);
    let nt = norm(t);
    if nb == 0.0 || nt == 0.0 {
        0.0
    } else {
        dot(b, t) / (nb * nt)
    }
}

/// `out += k · ∂cos(b, t)/∂b = k · (t/(‖b‖‖t‖) − cos·b/‖b‖²)`.
fn accumulate_cos_grad(out: &mut [f64], b: &[f64], nb: f64, t: &[f64], k: f64) {
    let nt = norm(t);
    let c = dot(b, t) / (nb * nt);
    for ((o, &bi), &ti) in out.iter_mut().zip(b).zip(t) {
        *o += k * (ti / (nb * nt) - c * bi / (nb * nb));
    }
}

/// Losses and gradients for one sample with pre-drawn synthetic noise.
pub fn sample_loss_and_grad(
    sample: &FeatureSample,
    set: &AdapterSet,
    text: &TextBank,
    cfg: &TrainConfig,
    tau: f64,
    noise: &[Option<Mat>; NUM_STAGES],
) -> Result<(LossBreakdown, GradSet)> {
    let mask = match sample.label {
        Label::Anomalous => Some(sample.mask.as_ref().ok_or_else(|| {
            Error::data(format!(
                "anomalous training sample {} has no mask",
                sample.sample_id
            ))
        })?),
        Label::Normal => None,
    };
    let mut breakdown = LossBreakdown::default();
    let mut grads = GradSet::zeros_like(set);
    for s in 0..NUM_STAGES {
        let grid = &sample.stages[s];
        let shape = (grid.height, grid.width);
        let adapter = &set.adapters[s];
        let f = &grid.features;
        let mut stage = StageLoss::default();
        match mask {
            None => {
                let zeros = Mat::zeros(shape.0, shape.1);
                let real = branch(
                    adapter,
                    f,
                    f,
                    shape,
                    &zeros,
                    Objective::Normal,
                    text,
                    cfg,
                    tau,
                )?;
                breakdown.l_no += real.terms.total();
                stage.normal = Some(real.terms);
                grads.dw1[s].add_assign(&real.dw1)?;
                grads.dw2[s].add_assign(&real.dw2)?;

                let noisy = match &noise[s] {
                    Some(gamma) => f.add(gamma)?,
                    None => f.clone(),
                };
                let ones = Mat::filled(shape.0, shape.1, 1.0);
                let syn = branch(
                    adapter,
                    f,
                    &noisy,
                    shape,
                    &ones,
                    Objective::Synthetic,
                    text,
                    cfg,
                    tau,
                )?;
                breakdown.l_syn += syn.terms.total();
                stage.synthetic = Some(syn.terms);
                grads.dw1[s].add_assign(&syn.dw1)?;
                grads.dw2[s].add_assign(&syn.dw2)?;
            }
            Some(mask) => {
                let target = pool_mask_to_grid(mask, shape.0, shape.1)?;
                let real = branch(
                    adapter,
                    f,
                    f,
                    shape,
                    &target,
                    Objective::Anomalous,
                    text,
                    cfg,
                    tau,
                )?;
                breakdown.l_an += real.terms.total();
                stage.anomalous = Some(real.terms);
                grads.dw1[s].add_assign(&real.dw1)?;
                grads.dw2[s].add_assign(&real.dw2)?;
            }
        }
        breakdown.stages.push(stage);
    }
    breakdown.l_total = breakdown.l_no + breakdown.l_an + breakdown.l_syn;
    Ok((breakdown, grads))
}

/// Loss breakdown for one sample, drawing synthetic noise from `rng`.
pub fn sample_losses(
    sample: &FeatureSample,
    set: &AdapterSet,
    text: &TextBank,
    cfg: &TrainConfig,
    tau: f64,
    rng: &mut RandomStream,
) -> Result<LossBreakdown> {
    let noise = draw_sample_noise(sample, cfg.beta, rng)?;
    Ok(sample_loss_and_grad(sample, set, text, cfg, tau, &noise)?.0)
}
