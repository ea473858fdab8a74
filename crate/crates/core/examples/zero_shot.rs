//! Scoring classes that were never trained on with the final averaged bank,
//! next to the raw-feature baseline.

use continual_ad::harness::{
    evaluate_classes, evaluate_zero_shot, run_loaded, synth_generate, EvalContext, ScenarioData,
    ScenarioSpec, SynthSpec,
};
use continual_ad::metrics::ReportKind;
use continual_ad::scoring::ScoreConfig;
use continual_ad::training::TrainConfig;

fn main() -> continual_ad::Result<()> {
    let dir = std::env::temp_dir().join("continual-ad-zero-shot");
    let synth = SynthSpec {
        n_classes: 6,
        ..SynthSpec::default()
    };
    synth_generate(&synth, &dir)?;
    let id = |c| synth.class_id(c);
    let spec = ScenarioSpec {
        name: "zero-shot".into(),
        manifests: vec![dir.join("manifest.json").to_string_lossy().into_owned()],
        base_classes: vec![id(0), id(1), id(2)],
        tasks: vec![vec![id(3)]],
        zero_shot_holdout: vec![vec![id(4), id(5)]],
        seed: 2,
        ..ScenarioSpec::default()
    };
    let data = ScenarioData::load(&spec, spec.seed)?;
    let score = ScoreConfig::default();
    let train = TrainConfig {
        epochs_base: 20,
        epochs_task: 10,
        ..TrainConfig::default()
    };
    let run = run_loaded(&spec, &data, &train, &score, spec.seed)?;

    let ctx = EvalContext {
        text: &data.text,
        alpha: 0.9,
        score: &score,
    };
    let holdout = data.select(&spec.zero_shot_holdout[0]);
    let trained: Vec<String> = spec.trained_classes().cloned().collect();
    let zs = evaluate_zero_shot(&run.bank, &holdout, &trained, ctx, "zero_shot")?;
    let raw = evaluate_classes(&holdout, None, ctx, 0, "raw", ReportKind::Eval)?;
    for (a, b) in zs.classes.iter().zip(&raw.classes) {
        println!(
            "{}: adapted {:.3}/{:.3}  raw {:.3}/{:.3}",
            a.class_id, a.image_auroc, a.pixel_ap, b.image_auroc, b.pixel_ap
        );
    }

    // Holdout classes may not appear in any training phase.
    let err = evaluate_zero_shot(&run.bank, &holdout, &[id(4)], ctx, "zero_shot").unwrap_err();
    println!("overlap rejected: {err}");
    Ok(())
}
