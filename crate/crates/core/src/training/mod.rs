//! Losses, hand-derived gradients and the per-task Adam training loop.

mod losses;
mod objective;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapters::{AdapterSet, SetTag};
use crate::error::{Error, Result};
use crate::featio::{FeatureSample, TextBank};
use crate::numcore::{Mat, RandomStream};
use crate::NUM_STAGES;

pub use losses::{ce_loss, dice_loss, focal_loss, PROB_CLAMP};
pub use objective::{
    draw_sample_noise, sample_loss_and_grad, sample_losses, GradSet, LossBreakdown, LossTerms,
    StageLoss,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs_base: usize,
    pub epochs_task: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    pub dice_eps: f64,
    /// Residual ratio between raw and adapted features.
    pub alpha: f64,
    /// Synthetic noise std relative to the feature std.
    pub beta: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs_base: 50,
            epochs_task: 20,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            dice_eps: 1.0,
            alpha: 0.9,
            beta: 1.0,
            batch_size: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        if !(self.lr > 0.0) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(self.beta >= 0.0) {
            return bad(format!("beta {} must be nonnegative", self.beta));
        }
        if !(self.focal_gamma >= 0.0) || !(0.0..=1.0).contains(&self.focal_alpha) {
            return bad("focal gamma must be >= 0 and alpha in [0, 1]".into());
        }
        if !(self.dice_eps > 0.0) {
            return bad(format!("dice_eps {} must be positive", self.dice_eps));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Mean per-sample losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub l_no: f64,
    pub l_an: f64,
    pub l_syn: f64,
    pub l_total: f64,
}

struct Adam {
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

impl Adam {
    fn new(set: &AdapterSet) -> Self {
        let zeros: Vec<Mat> = set
            .adapters
            .iter()
            .flat_map(|a| {
                [
                    Mat::zeros(a.w1.rows(), a.w1.cols()),
                    Mat::zeros(a.w2.rows(), a.w2.cols()),
                ]
            })
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, set: &mut AdapterSet, grads: &GradSet, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.adam_beta1.powi(self.t);
        let bc2 = 1.0 - cfg.adam_beta2.powi(self.t);
        for s in 0..NUM_STAGES {
            let adapter = &mut set.adapters[s];
            for (k, (w, g)) in [
                (&mut adapter.w1, &grads.dw1[s]),
                (&mut adapter.w2, &grads.dw2[s]),
            ]
            .into_iter()
            .enumerate()
            {
                let slot = 2 * s + k;
                let m = self.m[slot].data_mut();
                let v = self.v[slot].data_mut();
                for (((wi, &gi), mi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                    *mi = cfg.adam_beta1 * *mi + (1.0 - cfg.adam_beta1) * gi;
                    *vi = cfg.adam_beta2 * *vi + (1.0 - cfg.adam_beta2) * gi * gi;
                    let m_hat = *mi / bc1;
                    let v_hat = *vi / bc2;
                    *wi -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub set: AdapterSet,
    pub log: Vec<EpochLoss>,
}

/// Trains a fresh adapter set on `samples` for `epochs` epochs.
///
/// Streams derived from `cfg.seed`: `init` for weights, `shuffle` for the
/// per-epoch sample order, `noise` for the synthetic branch.
pub fn train_adapter_set(
    samples: &[FeatureSample],
    text: &TextBank,
    cfg: &TrainConfig,
    tau: f64,
    epochs: usize,
    tag: SetTag,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = samples
        .first()
        .ok_or_else(|| Error::data("empty training set"))?;
    let dims: [usize; NUM_STAGES] = std::array::from_fn(|s| first.stages[s].dim());
    for s in samples {
        let d: [usize; NUM_STAGES] = std::array::from_fn(|i| s.stages[i].dim());
        if d != dims {
            return Err(Error::data(format!(
                "sample {} has stage dims {d:?}, expected {dims:?}",
                s.sample_id
            )));
        }
    }
    if dims.iter().any(|&d| d != text.dim()) {
        return Err(Error::data(format!(
            "stage dims {dims:?} do not match text bank dim {}",
            text.dim()
        )));
    }

    let root = RandomStream::new(cfg.seed);
    let mut set = AdapterSet::init(tag, dims, &mut root.substream("init"))?;
    let mut shuffle = root.substream("shuffle");
    let mut noise_rng = root.substream("noise");
    let mut adam = Adam::new(&set);
    let mut log = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for epoch in 1..=epochs {
        shuffle.shuffle(&mut order);
        let mut sums = [0.0; 4];
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = GradSet::zeros_like(&set);
            for &i in batch {
                let noise = draw_sample_noise(&samples[i], cfg.beta, &mut noise_rng)?;
                let (loss, g) = sample_loss_and_grad(&samples[i], &set, text, cfg, tau, &noise)?;
                grads.add_assign(&g)?;
                sums[0] += loss.l_no;
                sums[1] += loss.l_an;
                sums[2] += loss.l_syn;
                sums[3] += loss.l_total;
            }
            if batch.len() > 1 {
                grads.scale(1.0 / batch.len() as f64);
            }
            if !grads.is_finite() {
                return Err(Error::data(format!("non-finite gradient in epoch {epoch}")));
            }
            adam.step(&mut set, &grads, cfg);
        }
        let n = samples.len() as f64;
        log.push(EpochLoss {
            epoch,
            l_no: sums[0] / n,
            l_an: sums[1] / n,
            l_syn: sums[2] / n,
            l_total: sums[3] / n,
        });
    }
    Ok(TrainOutcome { set, log })
}

/// CSV with header `epoch,l_no,l_an,l_syn,l_total`.
pub fn loss_log_csv(log: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,l_no,l_an,l_syn,l_total\n");
    for e in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.epoch, e.l_no, e.l_an, e.l_syn, e.l_total
        );
    }
    out
}

pub fn write_loss_log(log: &[EpochLoss], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, loss_log_csv(log)).map_err(|e| Error::io(path, e))
}
