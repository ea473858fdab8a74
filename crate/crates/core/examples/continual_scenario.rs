//! End-to-end continual run on generated features: base training, two tasks,
//! a zero-shot holdout, and the per-checkpoint summary table.
//!
//! ```text
//! cargo run --release --example continual_scenario
//! ```

use continual_ad::harness::{run_scenario, synth_generate, write_run, ScenarioSpec, SynthSpec};
use continual_ad::metrics::summary_csv;
use continual_ad::scoring::ScoreConfig;
use continual_ad::training::TrainConfig;

fn main() -> continual_ad::Result<()> {
    let root = std::env::temp_dir().join("continual-ad-scenario");
    let data = root.join("data");
    let synth = SynthSpec::default();
    synth_generate(&synth, &data)?;

    let ids = |r: std::ops::Range<usize>| r.map(|c| synth.class_id(c)).collect::<Vec<_>>();
    let spec = ScenarioSpec {
        name: "six-plus-two-by-one".into(),
        manifests: vec![data.join("manifest.json").to_string_lossy().into_owned()],
        base_classes: ids(0..6),
        tasks: vec![ids(6..7), ids(7..8)],
        zero_shot_holdout: vec![ids(8..10)],
        seed: 11,
        ..ScenarioSpec::default()
    };
    let run = run_scenario(
        &spec,
        &TrainConfig::default(),
        &ScoreConfig::default(),
        None,
    )?;
    write_run(&run, root.join("run"))?;

    print!("{}", summary_csv(&run.all_reports())?);
    let last = run.final_report();
    println!(
        "final: image AUROC {:.3}, pixel AP {:.3}, forgetting {:.4}",
        last.acc_image, last.acc_pixel, last.fm_avg
    );
    println!("run files in {}", root.join("run").display());
    Ok(())
}
