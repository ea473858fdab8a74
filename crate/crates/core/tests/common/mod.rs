//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use continual_ad::adapters::{Adapter, AdapterSet, SetTag};
use continual_ad::featio::{FeatureRecord, FeatureSample, Label, Mask, StageGrid, TextBank};
use continual_ad::harness::{synth_generate, ScenarioSpec, SynthSpec, MANIFEST_FILE};
use continual_ad::metrics::FmBaseline;
use continual_ad::numcore::{Mat, RandomStream};
use continual_ad::training::{sample_loss_and_grad, GradSet, TrainConfig};
use continual_ad::NUM_STAGES;

/// Pair-counting AUROC: `Σ [s_p > s_n] + ½[s_p = s_n]` over all pairs.
pub fn brute_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &sp) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sn) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// PR-point enumeration: for each distinct threshold `t` (descending),
/// classify `score >= t` as positive and accumulate `ΔR · P`.
pub fn brute_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let total_pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let mut tp = 0.0;
        let mut predicted = 0.0;
        for (s, &l) in scores.iter().zip(labels) {
            if *s >= t {
                predicted += 1.0;
                if l {
                    tp += 1.0;
                }
            }
        }
        let recall = tp / total_pos;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

/// Random instance with heavy ties: scores on a coarse lattice.
pub fn random_ranking(rng: &mut RandomStream, max_len: usize) -> (Vec<f64>, Vec<bool>) {
    loop {
        let n = 2 + rng.below(max_len - 1);
        let levels = 1 + rng.below(6);
        let all_tied = rng.uniform() < 0.1;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if all_tied {
                    0.5
                } else {
                    rng.below(levels) as f64 / levels as f64
                }
            })
            .collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.4).collect();
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
            return (scores, labels);
        }
    }
}

pub fn random_mat(rng: &mut RandomStream, rows: usize, cols: usize, scale: f64) -> Mat {
    Mat::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.uniform_in(-scale, scale))
            .collect(),
    )
    .unwrap()
}

pub fn unit_vector(rng: &mut RandomStream, d: usize) -> Vec<f64> {
    let v = rng.gaussian_of(d, 1.0).unwrap();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn random_text(rng: &mut RandomStream, d: usize) -> TextBank {
    TextBank::new(unit_vector(rng, d), unit_vector(rng, d), vec![]).unwrap()
}

/// Adapter set with explicit bottleneck width `h` and weights in `±scale`.
pub fn random_set(
    rng: &mut RandomStream,
    d: usize,
    h: usize,
    scale: f64,
    tag: SetTag,
) -> AdapterSet {
    let adapters: Vec<Adapter> = (1..=NUM_STAGES)
        .map(|s| {
            Adapter::new(
                s,
                random_mat(rng, h, d, scale),
                random_mat(rng, d, h, scale),
            )
            .unwrap()
        })
        .collect();
    AdapterSet::new(tag, adapters.try_into().unwrap()).unwrap()
}

/// Sample with `gh × gw` stages of dimension `d`, gaussian features, and for
/// anomalous samples a random mask at twice the grid resolution.
pub fn random_sample(
    rng: &mut RandomStream,
    gh: usize,
    gw: usize,
    d: usize,
    label: Label,
) -> FeatureSample {
    let stages: Vec<StageGrid> = (0..NUM_STAGES)
        .map(|_| {
            let f = Mat::from_vec(gh * gw, d, rng.gaussian_of(gh * gw * d, 1.0).unwrap()).unwrap();
            StageGrid::new(gh, gw, f).unwrap()
        })
        .collect();
    let mask = (label == Label::Anomalous).then(|| {
        let data: Vec<u8> = (0..4 * gh * gw)
            .map(|_| u8::from(rng.uniform() < 0.3))
            .collect();
        Mask::from_vec(2 * gh, 2 * gw, data).unwrap()
    });
    let record = FeatureRecord {
        label,
        stages: stages.try_into().unwrap(),
    };
    FeatureSample::new("s", "c", record, mask).unwrap()
}

/// Largest per-matrix relative error `‖a − n‖ / max(‖a‖, ‖n‖)` between the
/// analytic gradient and central differences of `L_total`.
pub fn gradient_check(
    sample: &FeatureSample,
    set: &AdapterSet,
    text: &TextBank,
    cfg: &TrainConfig,
    tau: f64,
    noise: &[Option<Mat>; NUM_STAGES],
    step: f64,
) -> f64 {
    let (_, analytic) = sample_loss_and_grad(sample, set, text, cfg, tau, noise).unwrap();
    let loss = |s: &AdapterSet| {
        sample_loss_and_grad(sample, s, text, cfg, tau, noise)
            .unwrap()
            .0
            .l_total
    };
    let mut numeric = GradSet::zeros_like(set);
    for st in 0..NUM_STAGES {
        for which in 0..2 {
            let len = if which == 0 {
                set.adapters[st].w1.len()
            } else {
                set.adapters[st].w2.len()
            };
            for i in 0..len {
                let mut up = set.clone();
                let mut down = set.clone();
                let (u, dn) = if which == 0 {
                    (&mut up.adapters[st].w1, &mut down.adapters[st].w1)
                } else {
                    (&mut up.adapters[st].w2, &mut down.adapters[st].w2)
                };
                u.data_mut()[i] += step;
                dn.data_mut()[i] -= step;
                let g = (loss(&up) - loss(&down)) / (2.0 * step);
                let target = if which == 0 {
                    &mut numeric.dw1[st]
                } else {
                    &mut numeric.dw2[st]
                };
                target.data_mut()[i] = g;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for st in 0..NUM_STAGES {
        for (a, n) in [
            (&analytic.dw1[st], &numeric.dw1[st]),
            (&analytic.dw2[st], &numeric.dw2[st]),
        ] {
            let diff = a.sub(n).unwrap().frobenius_norm();
            let scale = a.frobenius_norm().max(n.frobenius_norm());
            if scale > 0.0 {
                worst = worst.max(diff / scale);
            }
        }
    }
    worst
}

/// The desk-scale continual scenario: 10 synthetic classes, 6 base, two
/// tasks of two classes each.
pub fn synthetic_scenario(dir: &Path, margin: f64, holdout: Vec<Vec<String>>) -> ScenarioSpec {
    let synth = SynthSpec {
        margin,
        ..SynthSpec::default()
    };
    synth_generate(&synth, dir).unwrap();
    let c = |i: usize| synth.class_id(i);
    ScenarioSpec {
        name: format!("synthetic-m{margin}"),
        manifests: vec![MANIFEST_FILE.into()],
        text_bank: None,
        base_classes: (0..6).map(c).collect(),
        tasks: vec![vec![c(6), c(7)], vec![c(8), c(9)]],
        shots_normal: 10,
        shots_anomalous: 10,
        zero_shot_holdout: holdout,
        seed: 7,
        fm_baseline: FmBaseline::AfterTask,
        base_dir: dir.to_owned(),
    }
}

/// Every file under `dir` with its bytes, sorted by relative path.
pub fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().to_owned(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}
