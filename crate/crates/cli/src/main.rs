use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use tractshape::io::{ClusterLayout, DEFAULT_CLUSTER_COUNT};
use tractshape::measures::MeasureKind;
use tractshape::pipeline::{
    compare_experiments, extract_cohort, render_comparison, render_report, run_experiment_detailed,
    write_feature_tables, CategorySpec, Cohort, ComparisonTable, EvalReport, ExperimentConfig, ExperimentRun,
    ModelKind,
};
use tractshape::synth::{write_cohort, CohortSpec, COHORT_FILE};
use tractshape::task::TaskSpec;

#[derive(Parser)]
#[command(name = "tractshape", version, about = "Fiber cluster measures and cross-validated phenotype prediction")]
struct Cli {
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with planted phenotype effects.
    Synth {
        /// Cohort config (`key = value` lines); defaults are used when omitted.
        #[arg(long, value_name = "F")]
        config: Option<PathBuf>,
        /// Output directory: one directory per subject plus phenotypes.csv,
        /// truth.json and cohort.conf.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Generator seed; overrides any seed in the config.
        #[arg(long, value_name = "N")]
        seed: u64,
    },
    /// Compute per-cluster measures for every subject directory.
    Extract {
        /// Directory whose subdirectories each hold a `clusters/` directory.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Output directory for `<measure>.csv` tables.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Also write the brain-size normalized `-N` variants.
        #[arg(long)]
        normalize: bool,
        /// Clusters per subject. Defaults to the count in DIR/cohort.conf, or
        /// 1516 when there is none.
        #[arg(long, value_name = "N")]
        clusters: Option<usize>,
    },
    /// Cross-validate one model per measure and fuse their predictions.
    Train {
        /// Directory of `<measure>.csv` tables.
        #[arg(long, value_name = "DIR")]
        features: PathBuf,
        /// Phenotype CSV.
        #[arg(long, value_name = "F")]
        phenotypes: PathBuf,
        /// Prediction target: sex, age, tpvt, torrt or tfat.
        #[arg(long, value_name = "T")]
        task: TaskSpec,
        /// cnn or enet.
        #[arg(long, value_name = "M")]
        model: ModelKind,
        /// Comma-separated measures, e.g. `Length,Diameter,FA`.
        #[arg(long, value_name = "LIST", value_delimiter = ',', required = true)]
        measures: Vec<MeasureKind>,
        #[arg(long, value_name = "K", default_value_t = 5)]
        folds: usize,
        /// Seed for folds, initialization and shuffling.
        #[arg(long, value_name = "N")]
        seed: u64,
        /// Output directory (same files as `experiment`).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Run a full experiment (per-measure models, category fusion, overall
    /// fusion) described by a config file.
    Experiment {
        /// Experiment config; relative `features`/`phenotypes` paths are
        /// resolved against its directory.
        #[arg(long, value_name = "F")]
        config: PathBuf,
        /// Output directory for report.json, report.txt, predictions.json,
        /// folds.json and config.conf.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Compare experiments run on the same features and folds
    /// (repeated-measures ANOVA and paired t-tests).
    Compare {
        /// Two or more report.json files.
        #[arg(long, value_name = "F", num_args = 2.., required = true)]
        reports: Vec<PathBuf>,
        /// Output JSON file for the comparison table.
        #[arg(long, value_name = "F")]
        out: PathBuf,
    },
    /// Print a report or comparison JSON file as a text table.
    Report {
        #[arg(long = "in", value_name = "F")]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Synth { config, out, seed } => synth(config.as_deref(), &out, seed),
        Command::Extract { data, out, normalize, clusters } => extract(&data, &out, normalize, clusters),
        Command::Train { features, phenotypes, task, model, measures, folds, seed, out } => {
            let categories = measures.iter().map(|&m| CategorySpec::new(m.name(), &[m])).collect();
            let mut config = ExperimentConfig::new("train", task, model, categories, seed);
            config.folds = folds;
            config.features = Some(features.clone());
            config.phenotypes = Some(phenotypes.clone());
            log::info!("effective config (seed {seed}):\n{}", config.to_text());
            let run = execute(&config, &features, &phenotypes)?;
            write_run(&out, &run, &config)?;
            print!("{}", render_report(&run.report));
            Ok(())
        }
        Command::Experiment { config, out } => experiment(&config, &out),
        Command::Compare { reports, out } => {
            let reports: Vec<EvalReport> = reports
                .iter()
                .map(|p| EvalReport::from_json(&read(p)?).with_context(|| format!("{}", p.display())))
                .collect::<Result<_>>()?;
            let table = compare_experiments(&reports)?;
            write(&out, (serde_json::to_string_pretty(&table)? + "\n").as_bytes())?;
            print!("{}", render_comparison(&table));
            Ok(())
        }
        Command::Report { input } => {
            let text = read(&input)?;
            if let Ok(report) = EvalReport::from_json(&text) {
                print!("{}", render_report(&report));
            } else if let Ok(table) = serde_json::from_str::<ComparisonTable>(&text) {
                print!("{}", render_comparison(&table));
            } else {
                bail!("{}: neither an experiment report nor a comparison table", input.display());
            }
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn synth(config: Option<&Path>, out: &Path, seed: u64) -> Result<()> {
    let mut spec = match config {
        Some(p) => CohortSpec::from_text(&read(p)?).with_context(|| format!("{}", p.display()))?,
        None => CohortSpec::default(),
    };
    spec.seed = seed;
    log::info!("effective cohort config (seed {seed}):\n{}", spec.to_text());
    let truth = write_cohort(&spec, out)?;
    for t in &truth.targets {
        if let Some(r) = t.realized_r {
            log::info!("{}: realized r = {r:.4}", t.target);
        }
    }
    log::info!("wrote {} subjects to {}", spec.subjects, out.display());
    Ok(())
}

fn extract(data: &Path, out: &Path, normalize: bool, clusters: Option<usize>) -> Result<()> {
    let cluster_count = match clusters {
        Some(n) => n,
        None => {
            let conf = data.join(COHORT_FILE);
            if conf.exists() {
                CohortSpec::from_text(&read(&conf)?).with_context(|| format!("{}", conf.display()))?.cluster_count()
            } else {
                DEFAULT_CLUSTER_COUNT
            }
        }
    };
    log::info!("extracting {} ({} clusters per subject, normalize {})", data.display(), cluster_count, normalize);
    let features = extract_cohort(data, &ClusterLayout { cluster_count }, normalize)?;
    let written = write_feature_tables(out, &features)?;
    let subjects = features.values().next().map_or(0, |m| m.subject_ids.len());
    log::info!("wrote {} tables for {} subjects to {}", written.len(), subjects, out.display());
    Ok(())
}

fn experiment(config_path: &Path, out: &Path) -> Result<()> {
    let text = read(config_path)?;
    let config = ExperimentConfig::from_text(&text).with_context(|| format!("{}", config_path.display()))?;
    let base = config_path.parent().unwrap_or(Path::new(""));
    let resolve = |p: &Option<PathBuf>, key: &str| -> Result<PathBuf> {
        match p {
            Some(p) => Ok(base.join(p)),
            None => bail!("{}: `{key}` is not set", config_path.display()),
        }
    };
    let features = resolve(&config.features, "features")?;
    let phenotypes = resolve(&config.phenotypes, "phenotypes")?;
    log::info!("effective config (seed {}):\n{}", config.seed, config.to_text());
    let run = execute(&config, &features, &phenotypes)?;
    write_run(out, &run, &config)?;
    print!("{}", render_report(&run.report));
    Ok(())
}

fn execute(config: &ExperimentConfig, features: &Path, phenotypes: &Path) -> Result<ExperimentRun> {
    let cohort = Cohort::load(features, phenotypes)?;
    Ok(run_experiment_detailed(&cohort, config)?)
}

fn write_run(out: &Path, run: &ExperimentRun, config: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write(&out.join("report.json"), run.report.to_json()?.as_bytes())?;
    let predictions = json!({
        "subject_ids": run.folds.subject_ids,
        "targets": run.targets,
        "measures": run.measures,
        "categories": run.categories,
        "fused": run.fused,
    });
    write(&out.join("predictions.json"), (serde_json::to_string_pretty(&predictions)? + "\n").as_bytes())?;
    write(&out.join("folds.json"), (serde_json::to_string_pretty(&run.folds)? + "\n").as_bytes())?;
    write(&out.join("report.txt"), render_report(&run.report).as_bytes())?;
    write(&out.join("config.conf"), config.to_text().as_bytes())?;
    log::info!("fused {} = {:.4} ± {:.4}; outputs in {}", run.report.task.metric, run.report.mean, run.report.std, out.display());
    Ok(())
}
