//! `qfi`: generate data, tier features, run experiments and tabulate diversity.
//!
//! Exit status is 0 on success, 1 for bad input (arguments, files, configuration)
//! and 2 when a run fails after its inputs were accepted.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use qfi_core::config::ExperimentConfig;
use qfi_core::dataset::{load_dataset, synth_dataset};
use qfi_core::diversity::{diversity_report, align_sme_ranks, DiversityReport, SmeRanks};
use qfi_core::pipeline::{compute_tiers, run_experiment, RunOptions, RunReport};
use qfi_core::report::emit_report;
use qfi_core::tiers::TierAssignment;
use qfi_core::QfiError;

#[derive(Parser)]
#[command(name = "qfi", version, about = "Tiered feature importance for quantum and classical classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a balanced synthetic dataset as CSV.
    Synth(SynthArgs),
    /// Rank features by label correlation and write the tier partition.
    Tier(TierArgs),
    /// Run a full experiment and write its report directory.
    Run(RunArgs),
    /// Tabulate diversity triples from one or more report.json files.
    Diversity(DiversityArgs),
    /// Re-emit the output files of an existing report.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    features: usize,
    #[arg(long, default_value_t = 0)]
    informative: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Flags mirroring the configuration keys; each overrides the config file.
/// Multi-word keys are accepted with either `-` or `_`.
#[derive(Args, Default)]
struct ConfigFlags {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    explainer: Option<String>,
    #[arg(long, alias = "tier_size")]
    tier_size: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long, alias = "ansatz_reps")]
    ansatz_reps: Option<String>,
    #[arg(long, alias = "n_repeats_pi")]
    n_repeats_pi: Option<String>,
    #[arg(long, alias = "ale_intervals")]
    ale_intervals: Option<String>,
    #[arg(long, alias = "train_fraction")]
    train_fraction: Option<String>,
    #[arg(long = "C", alias = "c")]
    c: Option<String>,
    #[arg(long, alias = "spsa_iterations")]
    spsa_iterations: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    parallel: Option<String>,
    #[arg(long, alias = "max_rows")]
    max_rows: Option<String>,
    #[arg(long, alias = "angle_range")]
    angle_range: Option<String>,
    #[arg(long, alias = "classical_importance")]
    classical_importance: Option<String>,
    #[arg(long, alias = "classical_tiered")]
    classical_tiered: Option<String>,
}

impl ConfigFlags {
    fn resolve(&self) -> qfi_core::Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let overrides = [
            ("model", &self.model),
            ("explainer", &self.explainer),
            ("tier_size", &self.tier_size),
            ("reps", &self.reps),
            ("ansatz_reps", &self.ansatz_reps),
            ("n_repeats_pi", &self.n_repeats_pi),
            ("ale_intervals", &self.ale_intervals),
            ("train_fraction", &self.train_fraction),
            ("C", &self.c),
            ("spsa_iterations", &self.spsa_iterations),
            ("seed", &self.seed),
            ("parallel", &self.parallel),
            ("max_rows", &self.max_rows),
            ("angle_range", &self.angle_range),
            ("classical_importance", &self.classical_importance),
            ("classical_tiered", &self.classical_tiered),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct TierArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigFlags,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Expert ranks, CSV with columns `feature_name,rank`.
    #[arg(long)]
    sme: Option<PathBuf>,
    /// Tier partition written by `qfi tier`, used instead of recomputing it.
    #[arg(long)]
    tiers: Option<PathBuf>,
    /// Save each tier's QSVC training kernel here.
    #[arg(long)]
    kernel_dir: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigFlags,
}

#[derive(Args)]
struct DiversityArgs {
    /// report.json files to tabulate.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Expert ranks; used for runs whose report carries no diversity row.
    #[arg(long)]
    sme: Option<PathBuf>,
    /// Write the table as JSON here as well as printing it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Which exit status a failure maps to.
enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<QfiError> for Failure {
    fn from(e: QfiError) -> Self {
        if e.is_input_error() {
            Failure::Input(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

/// Errors while reading inputs are input errors whatever their kind.
fn input<T>(r: qfi_core::Result<T>, what: &str) -> Result<T, Failure> {
    r.with_context(|| format!("reading {what}")).map_err(Failure::Input)
}

fn read_report(path: &Path) -> Result<RunReport, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Input)?;
    input(RunReport::from_json(&text), &path.display().to_string())
}

fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let data = synth_dataset(args.rows, args.features, args.informative, args.seed)?;
    data.save(&args.out)?;
    log::info!("wrote {} rows x {} features to {}", data.n_rows(), data.n_features(), args.out.display());
    Ok(())
}

fn tier(args: &TierArgs) -> Result<(), Failure> {
    let config = input(args.config.resolve(), "configuration")?;
    let data = input(load_dataset(&args.data), "dataset")?;
    let tiers = compute_tiers(&config, &data)?;
    let mut buf = Vec::new();
    tiers.write_csv(&data.feature_names, &mut buf)?;
    std::fs::write(&args.out, buf)
        .with_context(|| format!("writing {}", args.out.display()))
        .map_err(Failure::Runtime)?;
    println!("{} features in {} tiers -> {}", data.n_features(), tiers.n_tiers(), args.out.display());
    Ok(())
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let config = input(args.config.resolve(), "configuration")?;
    let data = input(load_dataset(&args.data), "dataset")?;
    let sme = match &args.sme {
        Some(p) => Some(input(SmeRanks::load(p), "expert ranks")?),
        None => None,
    };
    let tiers = match &args.tiers {
        Some(p) => {
            let file = std::fs::File::open(p)
                .with_context(|| format!("reading {}", p.display()))
                .map_err(Failure::Input)?;
            Some(input(TierAssignment::read_csv(&data.feature_names, file), "tier file")?)
        }
        None => None,
    };
    let options = RunOptions {
        sme: sme.as_ref(),
        tiers: tiers.as_ref(),
        kernel_dir: args.kernel_dir.as_deref(),
    };
    let report = run_experiment(&config, &data, &options)?;
    emit_report(&report, &args.out)?;
    for run in report.runs() {
        println!("{:<10} accuracy {:.4} over {} tier(s)", run.model_id, run.accuracy, run.tiers.len());
    }
    for row in &report.diversity {
        println!("{:<10} {}", row.model, row.triple_string);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn diversity(args: &DiversityArgs) -> Result<(), Failure> {
    let sme = match &args.sme {
        Some(p) => Some(input(SmeRanks::load(p), "expert ranks")?),
        None => None,
    };
    let mut rows: Vec<DiversityReport> = Vec::new();
    for path in &args.reports {
        let report = read_report(path)?;
        for run in report.runs() {
            if let Some(row) = report.diversity.iter().find(|r| r.model == run.model_id) {
                rows.push(row.clone());
            } else if let Some(sme) = &sme {
                let aligned = input(align_sme_ranks(sme, &report.feature_names), "expert ranks")?;
                rows.push(diversity_report(
                    run.model_id.clone(),
                    run.accuracy,
                    &run.global_importance.scores,
                    &run.ranks,
                    None,
                    Some(&aligned.ranks),
                )?);
            } else {
                log::warn!("{}: no diversity row for {}", path.display(), run.model_id);
            }
        }
    }
    println!("{:<12} {:>9} {:>10} {:>10}  triple", "model", "accuracy", "rank_diff", "variance");
    for r in &rows {
        println!(
            "{:<12} {:>9.4} {:>10.4} {:>10.3e}  {}",
            r.model, r.accuracy, r.rank_diff_avg, r.variance, r.triple_string
        );
    }
    if let Some(out) = &args.out {
        let json = serde_json::to_string_pretty(&rows).map_err(|e| Failure::Runtime(e.into()))?;
        std::fs::write(out, json)
            .with_context(|| format!("writing {}", out.display()))
            .map_err(Failure::Runtime)?;
    }
    Ok(())
}

fn report(args: &ReportArgs) -> Result<(), Failure> {
    let report = read_report(&args.report)?;
    for path in emit_report(&report, &args.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Tier(a) => tier(a),
        Command::Run(a) => run(a),
        Command::Diversity(a) => diversity(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
