//! Desk-scale stand-in for encoder features with a known answer.
//!
//! The text bank is the pair of unit axes `e0` (normal) and `e1` (anomaly).
//! Each class and stage has a mean `e0 + class_offset·u`, with `u` a random
//! unit direction orthogonal to both axes. Normal cells are that mean plus
//! isotropic noise whose total RMS radius is `spread`; cells inside a planted
//! rectangle are additionally shifted by `margin·spread` along `e1`. The
//! nearest-text-vector rule therefore separates them without any training.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featio::{
    write_feature_file, write_manifest, write_mask_file, write_text_bank, ClassEntry,
    FeatureRecord, FeatureSample, Label, Manifest, Mask, SampleEntry, StageGrid, TextBank,
};
use crate::numcore::{norm, Mat, RandomStream};
use crate::NUM_STAGES;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TEXT_BANK_FILE: &str = "text_bank.cmtx";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub dataset_name: String,
    pub class_prefix: String,
    pub n_classes: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub dim: usize,
    /// Mask / pixel-map resolution; must be a multiple of the grid.
    pub mask_h: usize,
    pub mask_w: usize,
    pub train_normals: usize,
    pub train_anomalies: usize,
    pub test_normals: usize,
    pub test_anomalies: usize,
    pub area_min: f64,
    pub area_max: f64,
    /// Shift of anomalous cells toward the anomaly vector, in units of `spread`.
    pub margin: f64,
    /// Total RMS radius of the within-cluster noise.
    pub spread: f64,
    pub class_offset: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            dataset_name: "synthetic".into(),
            class_prefix: "class_".into(),
            n_classes: 10,
            grid_h: 8,
            grid_w: 8,
            dim: 16,
            mask_h: 32,
            mask_w: 32,
            train_normals: 10,
            train_anomalies: 10,
            test_normals: 20,
            test_anomalies: 20,
            area_min: 0.05,
            area_max: 0.3,
            margin: 2.0,
            spread: 0.5,
            class_offset: 0.5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.n_classes == 0 || self.grid_h == 0 || self.grid_w == 0 {
            return bad("n_classes and grid dims must be positive".into());
        }
        if self.dim < 3 {
            return bad(format!("dim {} must be at least 3", self.dim));
        }
        if self.mask_h == 0
            || self.mask_w == 0
            || !self.mask_h.is_multiple_of(self.grid_h)
            || !self.mask_w.is_multiple_of(self.grid_w)
        {
            return bad(format!(
                "mask {}x{} must be a positive multiple of grid {}x{}",
                self.mask_h, self.mask_w, self.grid_h, self.grid_w
            ));
        }
        if !(0.0 < self.area_min && self.area_min <= self.area_max && self.area_max <= 1.0) {
            return bad(format!(
                "area fractions [{}, {}] must satisfy 0 < min <= max <= 1",
                self.area_min, self.area_max
            ));
        }
        let cells = (self.grid_h * self.grid_w) as f64;
        let fits = (1..=self.grid_h).any(|h| {
            (1..=self.grid_w).any(|w| {
                let f = (h * w) as f64 / cells;
                f >= self.area_min && f <= self.area_max
            })
        });
        if !fits {
            return bad("no cell-aligned rectangle fits the area range".into());
        }
        if !(self.margin >= 0.0) || !(self.spread >= 0.0) || !self.class_offset.is_finite() {
            return bad("margin and spread must be nonnegative".into());
        }
        if self.train_normals + self.train_anomalies == 0 {
            return bad("no training samples requested".into());
        }
        Ok(())
    }

    pub fn class_id(&self, c: usize) -> String {
        format!("{}{c:02}", self.class_prefix)
    }
}

/// The fixed text vectors: `e0` for normal, `e1` for anomaly.
pub fn synth_text_bank(dim: usize) -> Result<TextBank> {
    let mut normal = vec![0.0; dim];
    let mut anomaly = vec![0.0; dim];
    normal[0] = 1.0;
    anomaly[1] = 1.0;
    TextBank::new(
        normal,
        anomaly,
        vec![
            "synthetic normal axis".into(),
            "synthetic anomaly axis".into(),
        ],
    )
}

/// A cell-aligned rectangle `(top, left, height, width)` in grid cells.
type Rect = (usize, usize, usize, usize);

fn draw_rect(spec: &SynthSpec, rng: &mut RandomStream) -> Rect {
    let cells = (spec.grid_h * spec.grid_w) as f64;
    loop {
        let h = 1 + rng.below(spec.grid_h);
        let w = 1 + rng.below(spec.grid_w);
        let frac = (h * w) as f64 / cells;
        if frac >= spec.area_min && frac <= spec.area_max {
            let top = rng.below(spec.grid_h - h + 1);
            let left = rng.below(spec.grid_w - w + 1);
            return (top, left, h, w);
        }
    }
}

fn class_means(spec: &SynthSpec, rng: &mut RandomStream) -> Result<Vec<Vec<f64>>> {
    (0..NUM_STAGES)
        .map(|_| {
            let mut u = rng.gaussian_of(spec.dim, 1.0)?;
            u[0] = 0.0;
            u[1] = 0.0;
            let n = norm(&u);
            let mut mean: Vec<f64> = u.iter().map(|x| spec.class_offset * x / n).collect();
            mean[0] += 1.0;
            Ok(mean)
        })
        .collect()
}

fn draw_sample(
    spec: &SynthSpec,
    means: &[Vec<f64>],
    rect: Option<Rect>,
    rng: &mut RandomStream,
) -> Result<[StageGrid; NUM_STAGES]> {
    let per_dim = spec.spread / (spec.dim as f64).sqrt();
    let shift = spec.margin * spec.spread;
    let cells = spec.grid_h * spec.grid_w;
    let mut stages = Vec::with_capacity(NUM_STAGES);
    for mean in means {
        let noise = rng.gaussian_of(cells * spec.dim, 1.0)?;
        let mut data = Vec::with_capacity(cells * spec.dim);
        for g in 0..cells {
            let (r, c) = (g / spec.grid_w, g % spec.grid_w);
            let inside =
                rect.is_some_and(|(t, l, h, w)| r >= t && r < t + h && c >= l && c < l + w);
            for k in 0..spec.dim {
                let mut v = mean[k] + per_dim * noise[g * spec.dim + k];
                if inside && k == 1 {
                    v += shift;
                }
                data.push(v);
            }
        }
        let features = Mat::from_vec(cells, spec.dim, data)?;
        stages.push(StageGrid::new(spec.grid_h, spec.grid_w, features)?);
    }
    Ok(stages.try_into().expect("four stages"))
}

fn rect_mask(spec: &SynthSpec, (t, l, h, w): Rect) -> Mask {
    let sy = spec.mask_h / spec.grid_h;
    let sx = spec.mask_w / spec.grid_w;
    let mut mask = Mask::zeros(spec.mask_h, spec.mask_w);
    for r in t * sy..(t + h) * sy {
        for c in l * sx..(l + w) * sx {
            mask.set(r, c, true);
        }
    }
    mask
}

/// Generated samples for one class, in manifest order.
pub struct SynthClass {
    pub class_id: String,
    pub train_normals: Vec<FeatureSample>,
    pub train_anomalies: Vec<FeatureSample>,
    pub test_samples: Vec<FeatureSample>,
}

/// Generates every class in memory. Each class draws from its own stream, so
/// class `c` is unchanged when `n_classes` grows.
pub fn synth_classes(spec: &SynthSpec) -> Result<Vec<SynthClass>> {
    spec.validate()?;
    let root = RandomStream::new(spec.seed);
    let mut out = Vec::with_capacity(spec.n_classes);
    for c in 0..spec.n_classes {
        let class_id = spec.class_id(c);
        let mut rng = root.substream(&class_id);
        let means = class_means(spec, &mut rng)?;
        let mut make = |label: Label, split: &str, i: usize| -> Result<FeatureSample> {
            let rect = (label == Label::Anomalous).then(|| draw_rect(spec, &mut rng));
            let stages = draw_sample(spec, &means, rect, &mut rng)?;
            let mask = rect.map(|r| rect_mask(spec, r));
            let tag = if label == Label::Normal { "n" } else { "a" };
            let id = format!("{class_id}/{split}_{tag}{i:03}");
            FeatureSample::new(&id, &class_id, FeatureRecord { label, stages }, mask)
        };
        let train_normals = (0..spec.train_normals)
            .map(|i| make(Label::Normal, "train", i))
            .collect::<Result<Vec<_>>>()?;
        let train_anomalies = (0..spec.train_anomalies)
            .map(|i| make(Label::Anomalous, "train", i))
            .collect::<Result<Vec<_>>>()?;
        let mut test_samples = Vec::with_capacity(spec.test_normals + spec.test_anomalies);
        for i in 0..spec.test_normals {
            test_samples.push(make(Label::Normal, "test", i)?);
        }
        for i in 0..spec.test_anomalies {
            test_samples.push(make(Label::Anomalous, "test", i)?);
        }
        out.push(SynthClass {
            class_id,
            train_normals,
            train_anomalies,
            test_samples,
        });
    }
    Ok(out)
}

fn write_entries(out_dir: &Path, samples: &[FeatureSample]) -> Result<Vec<SampleEntry>> {
    samples
        .iter()
        .map(|s| {
            let feature_path = format!("{}.cmfg", s.sample_id);
            write_feature_file(s, out_dir.join(&feature_path))?;
            let mask_path = match &s.mask {
                Some(m) => {
                    let p = format!("{}.cmsk", s.sample_id);
                    write_mask_file(m, out_dir.join(&p))?;
                    Some(p)
                }
                None => None,
            };
            Ok(SampleEntry {
                sample_id: s.sample_id.clone(),
                feature_path,
                mask_path,
                label: s.label,
            })
        })
        .collect()
}

/// Writes features, masks, the text bank and `manifest.json` under `out_dir`.
pub fn synth_generate(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    let classes = synth_classes(spec)?;
    write_text_bank(&synth_text_bank(spec.dim)?, out_dir.join(TEXT_BANK_FILE))?;
    let mut entries = Vec::with_capacity(classes.len());
    for class in &classes {
        entries.push(ClassEntry {
            class_id: class.class_id.clone(),
            train_normals: write_entries(out_dir, &class.train_normals)?,
            train_anomalies: write_entries(out_dir, &class.train_anomalies)?,
            test_samples: write_entries(out_dir, &class.test_samples)?,
        });
    }
    let manifest = Manifest {
        dataset_name: spec.dataset_name.clone(),
        text_bank: Some(TEXT_BANK_FILE.into()),
        classes: entries,
        base_dir: out_dir.to_owned(),
    };
    write_manifest(&manifest, out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
