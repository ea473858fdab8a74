//! Base training, sequential task adaptation, per-checkpoint evaluation and
//! the zero-shot holdout.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapters::{AdapterBank, AdapterSet, SetTag};
use crate::error::{Error, Result};
use crate::featio::{load_manifest, read_text_bank, FeatureSample, Manifest, TextBank};
use crate::metrics::{
    class_eval, forgetting_measure, EvalItem, FmBaseline, Forgetting, MetricReport, ReportKind,
};
use crate::numcore::RandomStream;
use crate::scoring::{score_sample, ScoreConfig};
use crate::training::{train_adapter_set, EpochLoss, TrainConfig};

fn ten() -> usize {
    10
}

/// Declarative description of one continual run. Paths are relative to the
/// spec file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub manifests: Vec<String>,
    /// Overrides the text bank named by the first manifest that has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_bank: Option<String>,
    pub base_classes: Vec<String>,
    #[serde(default)]
    pub tasks: Vec<Vec<String>>,
    #[serde(default = "ten")]
    pub shots_normal: usize,
    #[serde(default = "ten")]
    pub shots_anomalous: usize,
    /// Groups of classes that are never trained and are evaluated once, with
    /// the final averaged adapters.
    #[serde(default)]
    pub zero_shot_holdout: Vec<Vec<String>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fm_baseline: FmBaseline,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            name: String::new(),
            manifests: Vec::new(),
            text_bank: None,
            base_classes: Vec::new(),
            tasks: Vec::new(),
            shots_normal: ten(),
            shots_anomalous: ten(),
            zero_shot_holdout: Vec::new(),
            seed: 0,
            fm_baseline: FmBaseline::default(),
            base_dir: PathBuf::new(),
        }
    }
}

impl ScenarioSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut spec: ScenarioSpec = super::load_json(path)?;
        spec.base_dir = path.parent().map(Path::to_owned).unwrap_or_default();
        spec.validate()?;
        Ok(spec)
    }

    /// Structural checks that need no data: disjoint class sets, uniform task
    /// sizes, a usable budget.
    pub fn validate(&self) -> Result<()> {
        if self.manifests.is_empty() {
            return Err(Error::config("scenario lists no manifests"));
        }
        if self.base_classes.is_empty() {
            return Err(Error::config("scenario has no base classes"));
        }
        if self.shots_normal + self.shots_anomalous == 0 {
            return Err(Error::config("shot budget is zero"));
        }
        if let Some(first) = self.tasks.first() {
            if first.is_empty() {
                return Err(Error::config("task 1 has no classes"));
            }
            if let Some(i) = self.tasks.iter().position(|t| t.len() != first.len()) {
                return Err(Error::config(format!(
                    "task sizes must be uniform: task 1 has {} classes, task {} has {}",
                    first.len(),
                    i + 1,
                    self.tasks[i].len()
                )));
            }
        }
        let mut owner: HashMap<&str, String> = HashMap::new();
        let groups = std::iter::once(("base".to_owned(), &self.base_classes))
            .chain(
                self.tasks
                    .iter()
                    .enumerate()
                    .map(|(i, t)| (format!("task {}", i + 1), t)),
            )
            .chain(
                self.zero_shot_holdout
                    .iter()
                    .enumerate()
                    .map(|(i, h)| (format!("zero-shot holdout {}", i + 1), h)),
            );
        for (group, classes) in groups {
            for c in classes {
                if let Some(prev) = owner.insert(c, group.clone()) {
                    return Err(Error::config(format!(
                        "class {c:?} appears in both {prev} and {group}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn trained_classes(&self) -> impl Iterator<Item = &String> {
        self.base_classes.iter().chain(self.tasks.iter().flatten())
    }
}

/// One class's budgeted training samples and full test set, in memory.
#[derive(Debug, Clone)]
pub struct ClassData {
    pub class_id: String,
    pub train: Vec<FeatureSample>,
    pub test: Vec<FeatureSample>,
    /// Pixel-map resolution for test images without a mask.
    pub pixel_shape: (usize, usize),
}

impl ClassData {
    fn pixel_shape_for(&self, sample: &FeatureSample) -> (usize, usize) {
        sample
            .mask
            .as_ref()
            .map(|m| (m.height(), m.width()))
            .unwrap_or(self.pixel_shape)
    }
}

fn pick<'a, T>(items: &'a [T], k: usize, rng: &mut RandomStream) -> Vec<&'a T> {
    if items.len() <= k {
        return items.iter().collect();
    }
    let mut idx: Vec<usize> = (0..items.len()).collect();
    rng.shuffle(&mut idx);
    let mut chosen = idx[..k].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| &items[i]).collect()
}

/// Training budget: `(normals, anomalies, seed)`. More samples than the
/// budget are subsampled by a seeded shuffle; fewer is an error.
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    pub normals: usize,
    pub anomalies: usize,
    pub seed: u64,
}

/// Loads one class from whichever manifest lists it.
pub fn load_class(
    manifests: &[Manifest],
    class_id: &str,
    budget: Option<Budget>,
) -> Result<ClassData> {
    let mut found = manifests
        .iter()
        .filter_map(|m| m.class(class_id).map(|c| (m, c)));
    let (manifest, entry) = found
        .next()
        .ok_or_else(|| Error::data(format!("class {class_id:?} is not in any manifest")))?;
    if found.next().is_some() {
        return Err(Error::data(format!(
            "class {class_id:?} is listed by several manifests"
        )));
    }
    let load = |e| manifest.load_sample(class_id, e);
    let mut train = Vec::new();
    if let Some(b) = budget {
        for (entries, k, what) in [
            (&entry.train_normals, b.normals, "normal"),
            (&entry.train_anomalies, b.anomalies, "anomalous"),
        ] {
            if entries.len() < k {
                return Err(Error::data(format!(
                    "class {class_id:?}: budget needs {k} {what} training samples, manifest has {}",
                    entries.len()
                )));
            }
            let mut rng = RandomStream::derive(b.seed, &format!("budget/{class_id}/{what}"));
            for e in pick(entries, k, &mut rng) {
                train.push(load(e)?);
            }
        }
    }
    let test = entry
        .test_samples
        .iter()
        .map(load)
        .collect::<Result<Vec<_>>>()?;
    let pixel_shape = test
        .iter()
        .chain(&train)
        .find_map(|s| s.mask.as_ref().map(|m| (m.height(), m.width())))
        .or_else(|| {
            test.first()
                .map(|s| (s.stages[0].height, s.stages[0].width))
        })
        .ok_or_else(|| Error::data(format!("class {class_id:?} has no test samples")))?;
    Ok(ClassData {
        class_id: class_id.to_owned(),
        train,
        test,
        pixel_shape,
    })
}

/// Shared inputs of every evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub text: &'a TextBank,
    pub alpha: f64,
    pub score: &'a ScoreConfig,
}

/// Scores one class's test set. `set == None` scores raw features, the
/// nearest-text-vector oracle.
pub fn evaluate_class(
    class: &ClassData,
    set: Option<&AdapterSet>,
    ctx: EvalContext<'_>,
) -> Result<crate::metrics::ClassEval> {
    let mut scored = Vec::with_capacity(class.test.len());
    for s in &class.test {
        let (h, w) = class.pixel_shape_for(s);
        let r = score_sample(s, set, ctx.text, ctx.alpha, ctx.score, h, w)
            .map_err(|e| e.with_context(&s.sample_id))?;
        scored.push(r);
    }
    let items: Vec<EvalItem<'_>> = class
        .test
        .iter()
        .zip(&scored)
        .map(|(s, r)| EvalItem {
            label: s.label,
            image_score: r.image,
            pixel_map: &r.pixel.probs,
            mask: s.mask.as_ref(),
        })
        .collect();
    class_eval(&class.class_id, &items)
}

pub fn evaluate_classes(
    classes: &[&ClassData],
    set: Option<&AdapterSet>,
    ctx: EvalContext<'_>,
    checkpoint: usize,
    checkpoint_id: &str,
    kind: ReportKind,
) -> Result<MetricReport> {
    let evals = classes
        .iter()
        .map(|c| evaluate_class(c, set, ctx))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::new(checkpoint, checkpoint_id, kind, evals))
}

/// Evaluates never-trained classes with the bank's averaged adapters.
pub fn evaluate_zero_shot(
    bank: &AdapterBank,
    holdout: &[&ClassData],
    trained: &[String],
    ctx: EvalContext<'_>,
    checkpoint_id: &str,
) -> Result<MetricReport> {
    if let Some(c) = holdout.iter().find(|c| trained.contains(&c.class_id)) {
        return Err(Error::config(format!(
            "zero-shot class {:?} was trained in this run",
            c.class_id
        )));
    }
    let avg = bank.average()?;
    evaluate_classes(
        holdout,
        Some(&avg),
        ctx,
        bank.tasks.len(),
        checkpoint_id,
        ReportKind::ZeroShot,
    )
}

/// Data for a scenario: text bank and every named class.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub text: TextBank,
    pub classes: BTreeMap<String, ClassData>,
}

impl ScenarioData {
    pub fn load(spec: &ScenarioSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let manifests = spec
            .manifests
            .iter()
            .map(|p| load_manifest(spec.base_dir.join(p)))
            .collect::<Result<Vec<_>>>()?;
        let text_path = match &spec.text_bank {
            Some(p) => spec.base_dir.join(p),
            None => manifests
                .iter()
                .find_map(Manifest::text_bank_path)
                .ok_or_else(|| {
                    Error::config("no text bank: set `text_bank` in the scenario or a manifest")
                })?,
        };
        let text = read_text_bank(text_path)?;
        let budget = Budget {
            normals: spec.shots_normal,
            anomalies: spec.shots_anomalous,
            seed,
        };
        let mut classes = BTreeMap::new();
        for c in spec.trained_classes() {
            classes.insert(c.clone(), load_class(&manifests, c, Some(budget))?);
        }
        for c in spec.zero_shot_holdout.iter().flatten() {
            classes.insert(c.clone(), load_class(&manifests, c, None)?);
        }
        Ok(ScenarioData { text, classes })
    }

    pub fn select(&self, ids: &[String]) -> Vec<&ClassData> {
        ids.iter().map(|c| &self.classes[c]).collect()
    }

    fn training_set(&self, ids: &[String]) -> Vec<FeatureSample> {
        ids.iter()
            .flat_map(|c| self.classes[c].train.iter().cloned())
            .collect()
    }
}

/// Progress of a run. `reports` holds one checkpoint per bank set.
#[derive(Debug, Clone)]
pub struct RunState {
    pub scenario: String,
    pub seed: u64,
    pub bank: AdapterBank,
    pub completed_tasks: usize,
    pub reports: Vec<MetricReport>,
    pub zero_shot: Vec<MetricReport>,
    /// `(phase, per-epoch losses)`, phase `base` then `task_01`, ...
    pub loss_logs: Vec<(String, Vec<EpochLoss>)>,
    pub forgetting: Option<Forgetting>,
}

impl RunState {
    /// Checkpoints followed by zero-shot reports.
    pub fn all_reports(&self) -> Vec<MetricReport> {
        self.reports
            .iter()
            .chain(&self.zero_shot)
            .cloned()
            .collect()
    }

    pub fn final_report(&self) -> &MetricReport {
        self.reports.last().expect("base checkpoint always present")
    }
}

/// Seed of one phase (`base`, `task_1`, ...), derived from the run seed.
pub fn phase_seed(run_seed: u64, phase: &str) -> u64 {
    RandomStream::derive(run_seed, phase).next_u64()
}

pub fn checkpoint_id(task: usize) -> String {
    if task == 0 {
        "base".into()
    } else {
        format!("task_{task:02}")
    }
}

/// Runs a scenario on pre-loaded data. `seed` replaces the spec's seed.
pub fn run_loaded(
    spec: &ScenarioSpec,
    data: &ScenarioData,
    train_cfg: &TrainConfig,
    score_cfg: &ScoreConfig,
    seed: u64,
) -> Result<RunState> {
    train_cfg.validate()?;
    score_cfg.validate()?;
    let ctx = EvalContext {
        text: &data.text,
        alpha: train_cfg.alpha,
        score: score_cfg,
    };
    let phase_cfg = |phase: &str| TrainConfig {
        seed: phase_seed(seed, phase),
        ..train_cfg.clone()
    };

    let base = train_adapter_set(
        &data.training_set(&spec.base_classes),
        &data.text,
        &phase_cfg("base"),
        score_cfg.tau,
        train_cfg.epochs_base,
        SetTag::Base,
    )?;
    let mut seen: Vec<String> = spec.base_classes.clone();
    let mut bank = AdapterBank::new(base.set);
    let first = evaluate_classes(
        &data.select(&seen),
        Some(&bank.average()?),
        ctx,
        0,
        &checkpoint_id(0),
        ReportKind::Checkpoint,
    )?;
    let mut run = RunState {
        scenario: spec.name.clone(),
        seed,
        bank: bank.clone(),
        completed_tasks: 0,
        reports: vec![first],
        zero_shot: Vec::new(),
        loss_logs: vec![("base".into(), base.log)],
        forgetting: None,
    };

    for (i, task) in spec.tasks.iter().enumerate() {
        let n = i + 1;
        let phase = format!("task_{n}");
        let out = train_adapter_set(
            &data.training_set(task),
            &data.text,
            &phase_cfg(&phase),
            score_cfg.tau,
            train_cfg.epochs_task,
            SetTag::Task(n as u32),
        )?;
        bank.push_task(out.set)?;
        seen.extend(task.iter().cloned());
        let mut report = evaluate_classes(
            &data.select(&seen),
            Some(&bank.average()?),
            ctx,
            n,
            &checkpoint_id(n),
            ReportKind::Checkpoint,
        )?;
        let fm = forgetting_measure(
            &[run.reports.as_slice(), &[report.clone()]].concat(),
            spec.fm_baseline,
        )?;
        report.set_forgetting(fm);
        run.reports.push(report);
        run.loss_logs.push((checkpoint_id(n), out.log));
        run.completed_tasks = n;
        run.forgetting = Some(fm);
    }
    run.bank = bank;

    for (i, group) in spec.zero_shot_holdout.iter().enumerate() {
        let id = if spec.zero_shot_holdout.len() == 1 {
            "zero_shot".to_owned()
        } else {
            format!("zero_shot_{:02}", i + 1)
        };
        run.zero_shot.push(evaluate_zero_shot(
            &run.bank,
            &data.select(group),
            &seen,
            ctx,
            &id,
        )?);
    }
    debug_assert_eq!(run.reports.len(), run.completed_tasks + 1);
    Ok(run)
}

/// Loads the scenario's data and runs it with `seed` (default: the spec's).
pub fn run_scenario(
    spec: &ScenarioSpec,
    train_cfg: &TrainConfig,
    score_cfg: &ScoreConfig,
    seed: Option<u64>,
) -> Result<RunState> {
    let seed = seed.unwrap_or(spec.seed);
    let data = ScenarioData::load(spec, seed)?;
    run_loaded(spec, &data, train_cfg, score_cfg, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ScenarioSpec {
        ScenarioSpec {
            name: "t".into(),
            manifests: vec!["m.json".into()],
            text_bank: None,
            base_classes: vec!["a".into(), "b".into()],
            tasks: vec![vec!["c".into()], vec!["d".into()]],
            shots_normal: 10,
            shots_anomalous: 10,
            zero_shot_holdout: vec![vec!["e".into()]],
            seed: 0,
            fm_baseline: FmBaseline::AfterTask,
            base_dir: PathBuf::new(),
        }
    }

    #[test]
    fn disjoint_spec_validates() {
        spec().validate().unwrap();
    }

    #[test]
    fn overlapping_holdout_is_config_error_naming_class() {
        let mut s = spec();
        s.zero_shot_holdout = vec![vec!["c".into()]];
        match s.validate() {
            Err(e @ Error::Config(_)) => {
                assert!(e.to_string().contains("\"c\""));
                assert_eq!(e.exit_code(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uneven_tasks_rejected() {
        let mut s = spec();
        s.tasks = vec![vec!["c".into()], vec!["d".into(), "f".into()]];
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn pick_is_sorted_subset() {
        let items: Vec<usize> = (0..20).collect();
        let mut rng = RandomStream::new(3);
        let chosen: Vec<usize> = pick(&items, 10, &mut rng).into_iter().copied().collect();
        assert_eq!(chosen.len(), 10);
        assert!(chosen.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(pick(&items[..5], 10, &mut rng).len(), 5);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{"name":"x","manifests":["m"],"base_classes":["a"],"bogus":1}"#;
        assert!(serde_json::from_str::<ScenarioSpec>(text).is_err());
    }
}
