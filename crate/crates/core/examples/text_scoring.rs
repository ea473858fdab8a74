//! Building a two-vector text bank from prompt embeddings and turning a
//! sample's feature grids into a pixel anomaly map and an image score.

use continual_ad::featio::{read_text_bank, write_text_bank};
use continual_ad::harness::{synth_classes, SynthSpec};
use continual_ad::scoring::{build_text_bank, score_sample, ScoreConfig};

/// Stand-in embedder: prompts that mention damage point along axis 1, the
/// rest along axis 0, with a little per-prompt variation.
fn embed(prompt: &str) -> Vec<f64> {
    let mut v = vec![0.0; 16];
    let damaged = ["damaged", "defect", "flaw"]
        .iter()
        .any(|w| prompt.contains(w));
    v[usize::from(damaged)] = 1.0;
    v[2 + prompt.len() % 14] = 0.05;
    v
}

fn main() -> continual_ad::Result<()> {
    let normal = [
        "a photo of a flawless object",
        "a photo of a perfect object",
    ];
    let anomaly = [
        "a photo of a damaged object",
        "a photo of an object with a defect",
    ];
    let text = build_text_bank(&normal, &anomaly, embed)?;
    let path = std::env::temp_dir().join("continual-ad-text.cmtx");
    write_text_bank(&text, &path)?;
    let text = read_text_bank(&path)?;

    let spec = SynthSpec {
        n_classes: 1,
        test_normals: 1,
        test_anomalies: 1,
        ..SynthSpec::default()
    };
    let class = synth_classes(&spec)?.remove(0);
    let cfg = ScoreConfig::default();
    for s in &class.test_samples {
        let score = score_sample(s, None, &text, 0.9, &cfg, spec.mask_h, spec.mask_w)?;
        let peak = score
            .pixel
            .probs
            .data()
            .iter()
            .cloned()
            .fold(f64::MIN, f64::max);
        println!(
            "{:<22} {:?}: image score {:.3}, peak pixel {:.3}",
            s.sample_id, s.label, score.image, peak
        );
    }
    Ok(())
}
