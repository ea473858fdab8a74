#![allow(clippy::needless_range_loop)]

mod common;

use common::{gradient_check, random_sample, random_set, random_text};
use continual_ad::adapters::{AdapterSet, SetTag};
use continual_ad::featio::{pool_mask_to_grid, FeatureSample, Label, TextBank};
use continual_ad::harness::{synth_classes, synth_text_bank, SynthSpec};
use continual_ad::numcore::{Mat, RandomStream};
use continual_ad::training::{
    draw_sample_noise, sample_loss_and_grad, train_adapter_set, TrainConfig,
};
use continual_ad::NUM_STAGES;

const TAU: f64 = 0.07;

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = RandomStream::new(300);
    let cfg = TrainConfig::default();
    for i in 0..20 {
        let label = if i % 2 == 0 {
            Label::Normal
        } else {
            Label::Anomalous
        };
        let sample = random_sample(&mut rng, 4, 4, 8, label);
        let set = random_set(&mut rng, 8, 4, 0.5, SetTag::Base);
        let text = random_text(&mut rng, 8);
        let noise = draw_sample_noise(&sample, cfg.beta, &mut rng).unwrap();
        let err = gradient_check(&sample, &set, &text, &cfg, TAU, &noise, 1e-5);
        assert!(
            err <= 1e-4,
            "instance {i} ({label:?}): relative error {err:e}"
        );
    }
}

// ---- independent straight-line oracle ------------------------------------

#[derive(Clone, Copy)]
struct Terms {
    ce: bool,
    dice: bool,
    focal: bool,
}

fn cos(x: &[f64], t: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(t).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nt: f64 = t.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nx * nt)
}

/// Loss of one stage branch, written cell by cell from the definitions.
#[allow(clippy::too_many_arguments)]
fn oracle_branch(
    f: &Mat,
    input: &Mat,
    w1: &Mat,
    w2: &Mat,
    text: &TextBank,
    alpha: f64,
    target: &[f64],
    terms: Terms,
) -> f64 {
    let (g, d) = f.shape();
    let h = w1.rows();
    let mut probs = Vec::with_capacity(g);
    for cell in 0..g {
        let x = input.row(cell);
        let hidden: Vec<f64> = (0..h)
            .map(|j| (0..d).map(|k| w1.get(j, k) * x[k]).sum())
            .collect();
        let out: Vec<f64> = (0..d)
            .map(|k| (0..h).map(|j| w2.get(k, j) * hidden[j]).sum())
            .collect();
        let b: Vec<f64> = (0..d)
            .map(|k| alpha * f.get(cell, k) + (1.0 - alpha) * out[k])
            .collect();
        let z = (cos(&b, &text.anomaly) - cos(&b, &text.normal)) / TAU;
        probs.push(1.0 / (1.0 + (-z).exp()));
    }
    let n = g as f64;
    let clamp = |p: f64| p.clamp(1e-7, 1.0 - 1e-7);
    let mut total = 0.0;
    if terms.ce {
        total += probs
            .iter()
            .zip(target)
            .map(|(&p, &m)| -(m * clamp(p).ln() + (1.0 - m) * (1.0 - clamp(p)).ln()))
            .sum::<f64>()
            / n;
    }
    if terms.dice {
        let inter: f64 = probs.iter().zip(target).map(|(p, m)| p * m).sum();
        let sp: f64 = probs.iter().sum();
        let sm: f64 = target.iter().sum();
        total += 1.0 - (2.0 * inter + 1.0) / (sp + sm + 1.0);
    }
    if terms.focal {
        total += probs
            .iter()
            .zip(target)
            .map(|(&p, &m)| {
                let p = clamp(p);
                if m >= 0.5 {
                    -0.25 * (1.0 - p).powi(2) * p.ln()
                } else {
                    -0.75 * p.powi(2) * (1.0 - p).ln()
                }
            })
            .sum::<f64>()
            / n;
    }
    total
}

/// `(l_no, l_an, l_syn)` for a sample from the oracle.
fn oracle_losses(
    sample: &FeatureSample,
    set: &AdapterSet,
    text: &TextBank,
    noise: &[Option<Mat>; NUM_STAGES],
) -> (f64, f64, f64) {
    let alpha = 0.9;
    let mut out = (0.0, 0.0, 0.0);
    for s in 0..NUM_STAGES {
        let grid = &sample.stages[s];
        let f = &grid.features;
        let a = &set.adapters[s];
        let g = grid.height * grid.width;
        match &sample.mask {
            None => {
                let all = Terms {
                    ce: true,
                    dice: true,
                    focal: true,
                };
                out.0 += oracle_branch(f, f, &a.w1, &a.w2, text, alpha, &vec![0.0; g], all);
                let noisy = match &noise[s] {
                    Some(n) => f.add(n).unwrap(),
                    None => f.clone(),
                };
                let ce = Terms {
                    ce: true,
                    dice: false,
                    focal: false,
                };
                out.2 += oracle_branch(f, &noisy, &a.w1, &a.w2, text, alpha, &vec![1.0; g], ce);
            }
            Some(mask) => {
                let m = pool_mask_to_grid(mask, grid.height, grid.width).unwrap();
                let df = Terms {
                    ce: false,
                    dice: true,
                    focal: true,
                };
                out.1 += oracle_branch(f, f, &a.w1, &a.w2, text, alpha, m.data(), df);
            }
        }
    }
    out
}

#[test]
fn loss_values_match_straight_line_oracle() {
    let mut rng = RandomStream::new(301);
    let cfg = TrainConfig::default();
    for label in [Label::Normal, Label::Anomalous] {
        for _ in 0..5 {
            let sample = random_sample(&mut rng, 1, 2, 3, label);
            let set = random_set(&mut rng, 3, 1, 0.8, SetTag::Base);
            let text = random_text(&mut rng, 3);
            let noise = draw_sample_noise(&sample, 1.0, &mut rng).unwrap();
            let (b, _) = sample_loss_and_grad(&sample, &set, &text, &cfg, TAU, &noise).unwrap();
            let (no, an, syn) = oracle_losses(&sample, &set, &text, &noise);
            assert!((b.l_no - no).abs() <= 1e-12, "{} vs {no}", b.l_no);
            assert!((b.l_an - an).abs() <= 1e-12, "{} vs {an}", b.l_an);
            assert!((b.l_syn - syn).abs() <= 1e-12, "{} vs {syn}", b.l_syn);
            assert!((b.l_total - (no + an + syn)).abs() <= 1e-12);
        }
    }
}

#[test]
fn branch_terms_follow_the_label() {
    let mut rng = RandomStream::new(302);
    let cfg = TrainConfig::default();
    let set = random_set(&mut rng, 8, 2, 0.5, SetTag::Base);
    let text = random_text(&mut rng, 8);

    let anomalous = random_sample(&mut rng, 4, 4, 8, Label::Anomalous);
    let noise = draw_sample_noise(&anomalous, 1.0, &mut rng).unwrap();
    assert!(noise.iter().all(Option::is_none));
    let (b, _) = sample_loss_and_grad(&anomalous, &set, &text, &cfg, TAU, &noise).unwrap();
    assert_eq!((b.l_no, b.l_syn), (0.0, 0.0));
    for st in &b.stages {
        let an = st.anomalous.expect("anomalous branch");
        assert!(an.ce.is_none() && an.dice.is_some() && an.focal.is_some());
        assert!(st.normal.is_none() && st.synthetic.is_none());
    }

    let normal = random_sample(&mut rng, 4, 4, 8, Label::Normal);
    let noise = draw_sample_noise(&normal, 1.0, &mut rng).unwrap();
    let (b, _) = sample_loss_and_grad(&normal, &set, &text, &cfg, TAU, &noise).unwrap();
    assert_eq!(b.l_an, 0.0);
    for st in &b.stages {
        let no = st.normal.expect("normal branch");
        assert!(no.ce.is_some() && no.dice.is_some() && no.focal.is_some());
        let syn = st.synthetic.expect("synthetic branch");
        assert!(syn.ce.is_some() && syn.dice.is_none() && syn.focal.is_none());
        assert!(st.anomalous.is_none());
    }
}

#[test]
fn zero_noise_synthetic_gradient_is_ones_target_ce_on_real_features() {
    let mut rng = RandomStream::new(303);
    let cfg = TrainConfig {
        beta: 0.0,
        ..TrainConfig::default()
    };
    let sample = random_sample(&mut rng, 2, 3, 5, Label::Normal);
    let set = random_set(&mut rng, 5, 2, 0.7, SetTag::Base);
    let text = random_text(&mut rng, 5);
    let noise = draw_sample_noise(&sample, cfg.beta, &mut rng).unwrap();
    assert!(noise.iter().all(Option::is_none));
    let (_, grads) = sample_loss_and_grad(&sample, &set, &text, &cfg, TAU, &noise).unwrap();

    // Real-branch loss plus all-ones CE on the same real adapted features,
    // differentiated numerically stage by stage.
    let g = 6;
    let real_plus_ones = |s: usize, a: &continual_ad::adapters::Adapter| {
        let f = &sample.stages[s].features;
        let all = Terms {
            ce: true,
            dice: true,
            focal: true,
        };
        let ce = Terms {
            ce: true,
            dice: false,
            focal: false,
        };
        oracle_branch(f, f, &a.w1, &a.w2, &text, 0.9, &vec![0.0; g], all)
            + oracle_branch(f, f, &a.w1, &a.w2, &text, 0.9, &vec![1.0; g], ce)
    };
    let step = 1e-5;
    for s in 0..NUM_STAGES {
        for which in 0..2 {
            let analytic = if which == 0 {
                &grads.dw1[s]
            } else {
                &grads.dw2[s]
            };
            let mut numeric = Mat::zeros(analytic.rows(), analytic.cols());
            for i in 0..analytic.len() {
                let mut up = set.adapters[s].clone();
                let mut down = set.adapters[s].clone();
                if which == 0 {
                    up.w1.data_mut()[i] += step;
                    down.w1.data_mut()[i] -= step;
                } else {
                    up.w2.data_mut()[i] += step;
                    down.w2.data_mut()[i] -= step;
                }
                numeric.data_mut()[i] =
                    (real_plus_ones(s, &up) - real_plus_ones(s, &down)) / (2.0 * step);
            }
            let rel = analytic.sub(&numeric).unwrap().frobenius_norm()
                / analytic.frobenius_norm().max(numeric.frobenius_norm());
            assert!(rel <= 1e-4, "stage {s} w{}: {rel:e}", which + 1);
        }
    }
}

fn synth_training_set(n_classes: usize) -> (Vec<FeatureSample>, TextBank) {
    let spec = SynthSpec {
        n_classes,
        test_normals: 1,
        test_anomalies: 1,
        ..SynthSpec::default()
    };
    let classes = synth_classes(&spec).unwrap();
    let samples = classes
        .into_iter()
        .flat_map(|c| c.train_normals.into_iter().chain(c.train_anomalies))
        .collect();
    (samples, synth_text_bank(spec.dim).unwrap())
}

#[test]
fn training_is_deterministic_per_seed() {
    let (samples, text) = synth_training_set(2);
    let cfg = TrainConfig {
        seed: 11,
        ..TrainConfig::default()
    };
    let a = train_adapter_set(&samples, &text, &cfg, 0.07, 3, SetTag::Base).unwrap();
    let b = train_adapter_set(&samples, &text, &cfg, 0.07, 3, SetTag::Base).unwrap();
    assert_eq!(a.set, b.set);
    assert_eq!(a.log, b.log);
    let c = train_adapter_set(
        &samples,
        &text,
        &TrainConfig { seed: 12, ..cfg },
        0.07,
        3,
        SetTag::Base,
    )
    .unwrap();
    assert_ne!(a.set, c.set);
}

#[test]
fn zero_epochs_returns_the_initial_set() {
    let (samples, text) = synth_training_set(1);
    let cfg = TrainConfig {
        seed: 5,
        ..TrainConfig::default()
    };
    let out = train_adapter_set(&samples, &text, &cfg, 0.07, 0, SetTag::Task(1)).unwrap();
    assert!(out.log.is_empty());
    let init = AdapterSet::init(
        SetTag::Task(1),
        [16; 4],
        &mut RandomStream::new(5).substream("init"),
    )
    .unwrap();
    assert_eq!(out.set, init);
}

#[test]
fn loss_curve_settles_over_fifty_epochs() {
    let (samples, text) = synth_training_set(3);
    let cfg = TrainConfig {
        seed: 3,
        ..TrainConfig::default()
    };
    let out = train_adapter_set(&samples, &text, &cfg, 0.07, 50, SetTag::Base).unwrap();
    let totals: Vec<f64> = out.log.iter().map(|e| e.l_total).collect();
    assert!(
        totals[49] < 0.5 * totals[0],
        "{} -> {}",
        totals[0],
        totals[49]
    );
    for w in totals[40..].windows(2) {
        assert!(w[1] <= 1.05 * w[0], "epoch loss rose {} -> {}", w[0], w[1]);
    }
}

#[test]
fn empty_or_mismatched_training_sets_are_rejected() {
    let (samples, _) = synth_training_set(1);
    let text = synth_text_bank(8).unwrap();
    let cfg = TrainConfig::default();
    assert!(train_adapter_set(&[], &text, &cfg, 0.07, 1, SetTag::Base).is_err());
    assert!(train_adapter_set(&samples, &text, &cfg, 0.07, 1, SetTag::Base).is_err());
}
