//! Command-line front end. Exit codes: 0 ok, 2 config error, 3 data error,
//! 4 undefined metric.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::adapters::read_bank;
use crate::error::{Error, Result};
use crate::featio::{load_manifest, read_text_bank, write_pixel_map};
use crate::metrics::{summary_csv, MetricReport, ReportKind};
use crate::scoring::{score_sample, ScoreConfig};
use crate::training::TrainConfig;

use super::{
    evaluate_classes, load_class, load_json, read_reports, run_scenario, synth_generate,
    write_reports, write_run, EvalContext, ReportFormat, ScenarioSpec, SynthSpec,
};

#[derive(Debug, Parser)]
#[command(
    name = "continual-ad",
    version,
    about = "Continual anomaly detection on encoder feature grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Fmt {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic feature dataset with a manifest and text bank.
    SynthGen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train base and task adapters and evaluate every checkpoint.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Training config JSON; defaults apply when omitted.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Scoring config JSON; defaults apply when omitted.
        #[arg(long)]
        score: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate classes with the averaged adapters of a saved bank.
    Eval {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated class ids.
        #[arg(long, value_delimiter = ',', required = true)]
        classes: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        score: Option<PathBuf>,
        /// Residual ratio between raw and adapted features.
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
        /// Text bank; defaults to the manifest's.
        #[arg(long)]
        text_bank: Option<PathBuf>,
        /// Also write each test image's pixel map under `maps/`.
        #[arg(long)]
        maps: bool,
    },
    /// Re-emit a run's reports in one format and print the summary table.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        fmt: Fmt,
    },
}

fn optional_config<T: Default + serde::de::DeserializeOwned>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => load_json(p),
        None => Ok(T::default()),
    }
}

fn print_summary(reports: &[MetricReport]) -> Result<()> {
    print!("{}", summary_csv(reports)?);
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthGen { spec, out } => {
            let spec: SynthSpec = load_json(&spec)?;
            let manifest = synth_generate(&spec, &out)?;
            println!(
                "wrote {} classes to {}",
                manifest.classes.len(),
                out.display()
            );
        }
        Command::Run {
            scenario,
            train,
            score,
            out,
            seed,
        } => {
            let spec = ScenarioSpec::load(&scenario)?;
            let train_cfg: TrainConfig = optional_config(&train)?;
            let score_cfg: ScoreConfig = optional_config(&score)?;
            let run = run_scenario(&spec, &train_cfg, &score_cfg, seed)?;
            write_run(&run, &out)?;
            print_summary(&run.all_reports())?;
        }
        Command::Eval {
            bank,
            manifest,
            classes,
            out,
            score,
            alpha,
            text_bank,
            maps,
        } => {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::config(format!("alpha {alpha} outside [0, 1]")));
            }
            let score_cfg: ScoreConfig = optional_config(&score)?;
            score_cfg.validate()?;
            let bank = read_bank(&bank)?;
            let manifest = load_manifest(&manifest)?;
            let text_path = text_bank
                .or_else(|| manifest.text_bank_path())
                .ok_or_else(|| {
                    Error::config("no text bank: pass --text-bank or set it in the manifest")
                })?;
            let text = read_text_bank(text_path)?;
            let data = classes
                .iter()
                .map(|c| load_class(std::slice::from_ref(&manifest), c, None))
                .collect::<Result<Vec<_>>>()?;
            let avg = bank.average()?;
            let ctx = EvalContext {
                text: &text,
                alpha,
                score: &score_cfg,
            };
            let refs: Vec<_> = data.iter().collect();
            let report = evaluate_classes(
                &refs,
                Some(&avg),
                ctx,
                bank.tasks.len(),
                "eval",
                ReportKind::Eval,
            )?;
            if maps {
                for class in &data {
                    for s in &class.test {
                        let (h, w) = s
                            .mask
                            .as_ref()
                            .map(|m| (m.height(), m.width()))
                            .unwrap_or(class.pixel_shape);
                        let r = score_sample(s, Some(&avg), &text, alpha, &score_cfg, h, w)?;
                        write_pixel_map(
                            &r.pixel.probs,
                            out.join("maps").join(format!("{}.cmpm", s.sample_id)),
                        )?;
                    }
                }
            }
            let reports = [report];
            write_reports(&reports, &out, ReportFormat::Json)?;
            write_reports(&reports, &out, ReportFormat::Csv)?;
            print_summary(&reports)?;
        }
        Command::Report { run, fmt } => {
            let reports = read_reports(&run)?;
            let fmt = match fmt {
                Fmt::Csv => ReportFormat::Csv,
                Fmt::Json => ReportFormat::Json,
            };
            write_reports(&reports, &run, fmt)?;
            print_summary(&reports)?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run_cli(std::env::args_os())
}
