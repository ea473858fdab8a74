//! Scenario orchestration, the synthetic feature generator, run files and
//! the command-line front end.

pub mod cli;
mod output;
mod scenario;
mod synth;

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

pub use output::{
    read_reports, write_reports, write_run, ReportFormat, RunMeta, BANK_FILE, REPORTS_CSV,
    REPORTS_JSON, RUN_META, SUMMARY_CSV,
};
pub use scenario::{
    checkpoint_id, evaluate_class, evaluate_classes, evaluate_zero_shot, load_class, phase_seed,
    run_loaded, run_scenario, Budget, ClassData, EvalContext, RunState, ScenarioData, ScenarioSpec,
};
pub use synth::{
    synth_classes, synth_generate, synth_text_bank, SynthClass, SynthSpec, MANIFEST_FILE,
    TEXT_BANK_FILE,
};

/// Reads a UTF-8 JSON config. Syntax and schema problems are config errors.
pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })
}
