//! The command-line workflow driven in-process: generate data, run a
//! scenario, re-emit reports, and evaluate a saved bank on chosen classes.
//! The same arguments work with the `continual-ad` binary.

use continual_ad::harness::cli::run_cli;

fn cli(args: &[&str]) -> i32 {
    println!("$ continual-ad {}", args.join(" "));
    let code = run_cli(std::iter::once("continual-ad").chain(args.iter().copied()));
    println!("exit {code}\n");
    code
}

fn main() -> std::io::Result<()> {
    let root = std::env::temp_dir().join("continual-ad-cli");
    std::fs::create_dir_all(&root)?;
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();

    std::fs::write(root.join("synth.json"), r#"{"n_classes": 5, "seed": 4}"#)?;
    std::fs::write(
        root.join("train.json"),
        r#"{"epochs_base": 20, "epochs_task": 10}"#,
    )?;
    std::fs::write(
        root.join("scenario.json"),
        r#"{
  "name": "cli",
  "manifests": ["data/manifest.json"],
  "base_classes": ["class_00", "class_01", "class_02"],
  "tasks": [["class_03"]],
  "zero_shot_holdout": [["class_04"]],
  "seed": 1
}"#,
    )?;

    cli(&["synth-gen", "--spec", &p("synth.json"), "--out", &p("data")]);
    cli(&[
        "run",
        "--scenario",
        &p("scenario.json"),
        "--train",
        &p("train.json"),
        "--out",
        &p("run"),
    ]);
    cli(&["report", "--run", &p("run"), "--fmt", "json"]);
    cli(&[
        "eval",
        "--bank",
        &p("run/bank.cmab"),
        "--manifest",
        &p("data/manifest.json"),
        "--classes",
        "class_00,class_04",
        "--out",
        &p("eval"),
    ]);

    // Configuration problems exit with 2, missing data with 3.
    std::fs::write(
        root.join("bad.json"),
        r#"{"name": "bad", "manifests": ["data/manifest.json"], "base_classes": ["class_00"], "zero_shot_holdout": [["class_00"]]}"#,
    )?;
    cli(&["run", "--scenario", &p("bad.json"), "--out", &p("bad")]);
    Ok(())
}
