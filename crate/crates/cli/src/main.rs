use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use labelset::checks::{self, Suite};
use labelset::experiment::{
    self, evaluate_model, generate_cases, read_cases, summarize, training_volumes, write_cases,
    Case, ExperimentConfig, MANIFEST_FILE, SUMMARY_FILE,
};
use labelset::trainer::{train, EpochLog, Model};
use labelset::volio::{write_file_with, write_metrics_csv, write_training_log};
use labelset::{Error, LabelSpace, LossKind, LossSpec};

const THREADS_ENV: &str = "LABELSET_THREADS";
const DEFAULT_OUT: &str = "labelset-out";

#[derive(Parser)]
#[command(name = "labelset", version, about = "Label-set loss experiments on synthetic phantoms")]
struct Cli {
    /// Experiment config (JSON). Defaults to the built-in four-way scenario.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; also where `train`, `evaluate` and `compare` look for phantoms.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed, or the fixed seed of `check`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write feature, truth and partial volumes plus a manifest.
    Generate,
    /// Train one model on the generated training cases.
    Train {
        #[arg(long)]
        loss: LossKind,
    },
    /// Score a trained model on the generated test cases.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Run a property suite; exits 1 if any property fails.
    Check { suite: Suite },
    /// Train and evaluate one model per configured loss.
    Compare,
}

/// A trained model together with what it was trained for.
#[derive(Serialize, Deserialize)]
struct SavedModel {
    label: String,
    loss: LossSpec,
    label_names: LabelSpace,
    best_epoch: usize,
    best_val_loss: f64,
    model: Model,
}

/// Errors caused by how the tool was invoked rather than by what it computed.
fn is_usage_error(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<Error>(),
            Some(
                Error::ConfigInvalid(_)
                    | Error::InvalidLossSpec(_)
                    | Error::InvalidLabelSpace(_)
                    | Error::LPrimeIsFullSpace
                    | Error::Json(_)
            )
        ) || cause.downcast_ref::<UsageError>().is_some()
    })
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_usage_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    configure_threads()?;
    match &cli.command {
        Command::Check { suite } => check(*suite, cli.seed.unwrap_or(checks::DEFAULT_SEED), cli.out.as_deref()),
        Command::Generate => {
            let (cfg, out) = load(&cli)?;
            let cases = generate_cases(&cfg)?;
            let manifest = write_cases(&out, &cfg.label_names, &cases)?;
            for case in &manifest.cases {
                let missing = if case.unannotated.is_empty() {
                    "fully annotated".to_string()
                } else {
                    format!("unannotated {{{}}}", case.unannotated.join(", "))
                };
                println!("{:<10} {:<5} {missing}", case.id, format!("{:?}", case.split).to_lowercase());
            }
            println!("wrote {} cases to {}", manifest.cases.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { loss } => {
            let (cfg, out) = load(&cli)?;
            let (space, cases) = read_phantoms(&out)?;
            let spec = cfg.losses.iter().find(|s| s.kind == *loss).copied().unwrap_or(LossSpec::new(*loss));
            let volumes = training_volumes(&cases, &spec);
            if volumes.len() < 2 {
                return Err(Error::MissingData(format!("{loss}: only {} usable training volumes", volumes.len())).into());
            }
            let outcome = train(&volumes, &spec, &cfg.train)?;
            let label = loss.to_string();
            save_model(&out, &label, &spec, &space, &outcome.model, outcome.best_epoch, outcome.best_val_loss)?;
            save_log(&out, &label, &outcome.log)?;
            println!(
                "{label}: {} volumes, best epoch {} of {}, validation loss {:.6}",
                volumes.len(),
                outcome.best_epoch,
                outcome.log.len() - 1,
                outcome.best_val_loss
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { model } => {
            let (cfg, out) = load(&cli)?;
            let (space, cases) = read_phantoms(&out)?;
            let text = fs::read_to_string(model).with_context(|| format!("reading {}", model.display()))?;
            let saved: SavedModel = serde_json::from_str(&text)
                .map_err(|e| UsageError(format!("{} is not a saved model: {e}", model.display())))?;
            if saved.label_names != space {
                bail!(UsageError("model and phantoms use different label spaces".into()));
            }
            let rows = evaluate_model(&saved.model, &space, &cases, cfg.spacing)?;
            let path = out.join(format!("{}.metrics.csv", saved.label));
            write_file_with(&path, |w| write_metrics_csv(w, &rows))?;
            print_class_table(&space, &[(saved.label.clone(), summarize(&space, &rows))]);
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare => {
            let (cfg, out) = load(&cli)?;
            if !out.join(MANIFEST_FILE).exists() {
                let cases = generate_cases(&cfg)?;
                write_cases(&out, &cfg.label_names, &cases)?;
                println!("generated {} cases in {}", cases.len(), out.display());
            }
            let (space, cases) = read_phantoms(&out)?;
            let runs = experiment::compare(&cfg, &space, &cases)?;
            for r in &runs {
                let o = &r.outcome;
                save_model(&out, &r.label, &r.spec, &space, &o.model, o.best_epoch, o.best_val_loss)?;
                save_log(&out, &r.label, &o.log)?;
                write_file_with(out.join(format!("{}.metrics.csv", r.label)), |w| write_metrics_csv(w, &r.rows))?;
                println!(
                    "{:<22} {:>2} volumes, best epoch {:>4}, validation loss {:.6}",
                    r.label, r.num_train_volumes, o.best_epoch, o.best_val_loss
                );
            }
            let summary = experiment::summary(&space, &runs);
            let path = out.join(SUMMARY_FILE);
            fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
            let table: Vec<_> = summary.into_iter().collect();
            print_class_table(&space, &table);
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn load(cli: &Cli) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::four_way_scenario(0),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok((cfg, out))
}

fn read_phantoms(dir: &Path) -> Result<(LabelSpace, Vec<Case>)> {
    if !dir.join(MANIFEST_FILE).exists() {
        return Err(Error::MissingData(format!(
            "no {MANIFEST_FILE} in {}; run `labelset generate` first",
            dir.display()
        ))
        .into());
    }
    Ok(read_cases(dir)?)
}

fn save_model(
    dir: &Path,
    label: &str,
    spec: &LossSpec,
    space: &LabelSpace,
    model: &Model,
    best_epoch: usize,
    best_val_loss: f64,
) -> Result<()> {
    let saved = SavedModel {
        label: label.to_string(),
        loss: *spec,
        label_names: space.clone(),
        best_epoch,
        best_val_loss,
        model: model.clone(),
    };
    let path = dir.join(format!("{label}.model.json"));
    fs::write(&path, serde_json::to_string_pretty(&saved)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn save_log(dir: &Path, label: &str, log: &[EpochLog]) -> Result<()> {
    Ok(write_file_with(dir.join(format!("{label}.log.csv")), |w| write_training_log(w, log))?)
}

fn print_class_table(
    space: &LabelSpace,
    rows: &[(String, std::collections::BTreeMap<String, experiment::ClassSummary>)],
) {
    print!("{:<22}", "mean DSC");
    for name in space.names() {
        print!(" {name:>11}");
    }
    println!();
    for (label, classes) in rows {
        print!("{label:<22}");
        for name in space.names() {
            print!(" {:>11.4}", classes[name].dsc_mean);
        }
        println!();
    }
}

fn check(suite: Suite, seed: u64, out: Option<&Path>) -> Result<ExitCode> {
    let report = checks::run(suite, seed)?;
    println!("check {suite} (seed {seed})");
    for row in &report.rows {
        println!("{row}");
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("check-{suite}.json"));
        fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    match report.rows.iter().find(|r| !r.passed) {
        None => Ok(ExitCode::SUCCESS),
        Some(row) => {
            eprintln!("failed: {}", row.name);
            Ok(ExitCode::from(1))
        }
    }
}
