//! Cosine/temperature scoring of adapted features against the text bank,
//! multi-stage fusion into pixel maps, and image-level scores.

use serde::{Deserialize, Serialize};

use crate::adapters::{residual_blend, AdapterSet};
use crate::error::{Error, Result};
use crate::featio::{FeatureSample, TextBank};
use crate::numcore::{bilinear_upsample, dot, gaussian_blur, norm, Mat};
use crate::NUM_STAGES;

/// Generic normal-state prompts.
pub const NORMAL_PROMPTS: [&str; 10] = [
    "This is an example of a normal object",
    "This is a typical appearance of the object",
    "This is what a normal object looks like",
    "A photo of a normal object",
    "This is not an anomaly",
    "This is an example of a standard object",
    "This is the standard appearance of the object",
    "This is what a standard object looks like",
    "A photo of a standard object",
    "This object meets standard characteristics",
];

/// Generic anomaly prompts. Entries 5 and 6 are identical in the source table.
pub const ANOMALY_PROMPTS: [&str; 10] = [
    "This is an example of an anomalous object",
    "This is not the typical appearance of the object",
    "This is what an anomaly looks like",
    "A photo of an anomalous object",
    "This is an example of an abnormal object",
    "This is an example of an abnormal object",
    "This is not the usual appearance of the object",
    "This is what an abnormal object looks like",
    "A photo of an abnormal object",
    "An abnormality detected in this object",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    /// Softmax temperature over the two cosine similarities.
    pub tau: f64,
    /// Gaussian smoothing (pixels) applied before the image-level statistic.
    pub smooth_sigma_px: f64,
    /// Image score is the mean of the `top_k` largest smoothed pixels.
    pub top_k: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            tau: 0.07,
            smooth_sigma_px: 4.0,
            top_k: 1,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        if !(self.smooth_sigma_px >= 0.0) || !self.smooth_sigma_px.is_finite() {
            return Err(Error::config(format!(
                "smooth_sigma_px {} must be finite and nonnegative",
                self.smooth_sigma_px
            )));
        }
        if self.top_k == 0 {
            return Err(Error::config("top_k must be at least 1"));
        }
        Ok(())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::contract(format!(
            "temperature {tau} must be positive"
        )));
    }
    Ok(())
}

/// Per-cell anomaly probabilities for one stage, `height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub stage: usize,
    pub probs: Mat,
}

/// Fused anomaly probabilities at mask resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMap {
    pub probs: Mat,
}

/// Averages L2-normalized prompt embeddings per state and renormalizes.
pub fn build_text_bank<S: AsRef<str>>(
    normal_prompts: &[S],
    anomaly_prompts: &[S],
    embed: impl Fn(&str) -> Vec<f64>,
) -> Result<TextBank> {
    let mean_direction = |prompts: &[S], which: &str| -> Result<Vec<f64>> {
        if prompts.is_empty() {
            return Err(Error::contract(format!("no {which} prompts")));
        }
        let mut acc: Option<Vec<f64>> = None;
        for p in prompts {
            let v = embed(p.as_ref());
            let n = norm(&v);
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::contract(format!(
                    "embedding of {:?} has zero or non-finite norm",
                    p.as_ref()
                )));
            }
            match acc.as_mut() {
                None => acc = Some(v.iter().map(|x| x / n).collect()),
                Some(a) if a.len() == v.len() => {
                    for (s, x) in a.iter_mut().zip(&v) {
                        *s += x / n;
                    }
                }
                Some(a) => {
                    return Err(Error::contract(format!(
                        "prompt embeddings disagree on dimension ({} vs {})",
                        a.len(),
                        v.len()
                    )))
                }
            }
        }
        let count = prompts.len() as f64;
        let mean: Vec<f64> = acc
            .expect("nonempty")
            .into_iter()
            .map(|x| x / count)
            .collect();
        let n = norm(&mean);
        if n <= 1e-12 {
            return Err(Error::contract(format!(
                "{which} prompt embeddings cancel out; mean cannot be normalized"
            )));
        }
        Ok(mean.into_iter().map(|x| x / n).collect())
    };
    let normal = mean_direction(normal_prompts, "normal")?;
    let anomaly = mean_direction(anomaly_prompts, "anomaly")?;
    let prompts = normal_prompts
        .iter()
        .chain(anomaly_prompts)
        .map(|p| p.as_ref().to_owned())
        .collect();
    TextBank::new(normal, anomaly, prompts)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(x: &[f64], t: &[f64]) -> f64 {
    let nx = norm(x);
    let nt = norm(t);
    if nx == 0.0 || nt == 0.0 {
        0.0
    } else {
        dot(x, t) / (nx * nt)
    }
}

/// `(P(anomaly), P(normal))` for one cell: a two-way softmax over cosine
/// similarities divided by `tau`.
pub fn cell_probabilities(cell: &[f64], text: &TextBank, tau: f64) -> (f64, f64) {
    let z = (cosine(cell, &text.anomaly) - cosine(cell, &text.normal)) / tau;
    (sigmoid(z), sigmoid(-z))
}

pub fn layer_score_map(
    stage: usize,
    features: &Mat,
    height: usize,
    width: usize,
    text: &TextBank,
    tau: f64,
) -> Result<ScoreMap> {
    check_tau(tau)?;
    if features.cols() != text.dim() {
        return Err(Error::contract(format!(
            "stage {stage} features have d={}, text bank has d={}",
            features.cols(),
            text.dim()
        )));
    }
    if features.rows() != height * width {
        return Err(Error::contract(format!(
            "stage {stage}: {} cells do not form a {height}x{width} grid",
            features.rows()
        )));
    }
    let probs = (0..features.rows())
        .map(|g| cell_probabilities(features.row(g), text, tau).0)
        .collect();
    Ok(ScoreMap {
        stage,
        probs: Mat::from_vec(height, width, probs)?,
    })
}

/// Upsamples each stage map to `out_h × out_w` and averages across stages.
pub fn fuse_layers(maps: &[ScoreMap], out_h: usize, out_w: usize) -> Result<PixelMap> {
    for stage in 1..=NUM_STAGES {
        if !maps.iter().any(|m| m.stage == stage) {
            return Err(Error::contract(format!(
                "missing score map for stage {stage}"
            )));
        }
    }
    if maps.len() != NUM_STAGES {
        return Err(Error::contract(format!(
            "expected 4 score maps, got {}",
            maps.len()
        )));
    }
    let mut acc = Mat::zeros(out_h, out_w);
    for stage in 1..=NUM_STAGES {
        let m = maps.iter().find(|m| m.stage == stage).expect("checked");
        acc.add_assign(&bilinear_upsample(&m.probs, out_h, out_w)?)?;
    }
    Ok(PixelMap {
        probs: acc.scale(1.0 / NUM_STAGES as f64),
    })
}

/// Smooths the map and returns the mean of its `top_k` largest entries.
pub fn image_score(map: &PixelMap, smooth_sigma_px: f64, top_k: usize) -> Result<f64> {
    if map.probs.is_empty() {
        return Err(Error::contract("empty pixel map"));
    }
    let smooth = gaussian_blur(&map.probs, smooth_sigma_px)?;
    if top_k <= 1 {
        return Ok(smooth.max());
    }
    let mut v = smooth.into_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let k = top_k.min(v.len());
    Ok(v[..k].iter().sum::<f64>() / k as f64)
}

/// Scoring result for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleScore {
    pub pixel: PixelMap,
    pub image: f64,
}

/// Features that get scored for one stage: `alpha·F + (1 − alpha)·A(F)`, or the
/// raw features when no adapter set is supplied.
pub fn adapted_features(
    sample: &FeatureSample,
    stage: usize,
    set: Option<&AdapterSet>,
    alpha: f64,
) -> Result<Mat> {
    let f = &sample.stages[stage - 1].features;
    match set {
        Some(set) => residual_blend(f, &set.stage(stage).forward(f)?, alpha),
        None => Ok(f.clone()),
    }
}

pub fn stage_score_maps(
    sample: &FeatureSample,
    set: Option<&AdapterSet>,
    text: &TextBank,
    alpha: f64,
    tau: f64,
) -> Result<Vec<ScoreMap>> {
    (1..=NUM_STAGES)
        .map(|stage| {
            let grid = &sample.stages[stage - 1];
            let feats = adapted_features(sample, stage, set, alpha)?;
            layer_score_map(stage, &feats, grid.height, grid.width, text, tau)
        })
        .collect()
}

/// Full inference path for one sample at `out_h × out_w` pixel resolution.
pub fn score_sample(
    sample: &FeatureSample,
    set: Option<&AdapterSet>,
    text: &TextBank,
    alpha: f64,
    cfg: &ScoreConfig,
    out_h: usize,
    out_w: usize,
) -> Result<SampleScore> {
    let maps = stage_score_maps(sample, set, text, alpha, cfg.tau)?;
    let pixel = fuse_layers(&maps, out_h, out_w)?;
    let image = image_score(&pixel, cfg.smooth_sigma_px, cfg.top_k)?;
    Ok(SampleScore { pixel, image })
}
