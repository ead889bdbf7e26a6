//! `scrpp`: simulate, fit, check and classify trial-locked event trains.
//!
//! Exit status: 0 on success, 1 on invalid input or configuration, 2 when a
//! numerical step (fit, SVM training) fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use scrpp::gof::{compare_models, comparison_table, ModelComparison};
use scrpp::io::{self, FitArchive, InputPaths, RunConfig};
use scrpp::ml::{self, FeatureSet, FeatureTable, LabeledSubject};
use scrpp::optim::fit_subjects;
use scrpp::simulate::{gen_cohort, CohortSpec};
use scrpp::stats::{group_comparison_report, group_kruskal_wallis};
use scrpp::{SubjectRecord, Variant};

#[derive(Parser, Debug)]
#[command(name = "scrpp", version, about = "Point-process models of trial-locked event onsets")]
struct Cli {
    /// Master seed (fit restarts, simulation).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bin width in seconds.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Never changes output bytes.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labeled cohort as input CSVs.
    Simulate(SimulateArgs),
    /// Fit all model variants per subject and write a fit archive.
    Fit(FitArgs),
    /// Model comparison (NLL, AIC, KS) from a fit archive.
    Gof(GofArgs),
    /// Leave-one-subject-out SVM evaluation.
    Classify(ClassifyArgs),
    /// Leave-one-feature-out ablation.
    Ablate(ClassifyArgs),
    /// Permutation importance of each feature (not SHAP).
    Importance(ClassifyArgs),
    /// Group comparisons of subject-level features.
    Stats(StatsArgs),
    /// Fitted intensity trace of one subject.
    ExportIntensity(IntensityArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// JSON cohort spec; overrides the two-group defaults below.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    n_per_group: usize,
    /// Mean of w_neg in the clinical group (controls: 0).
    #[arg(long, default_value_t = 1.0)]
    shift: f64,
    /// Also write amplitude/rise-time columns and a tonic file.
    #[arg(long)]
    annotations: bool,
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    trials: Option<PathBuf>,
    #[arg(long)]
    tonic: Option<PathBuf>,
    /// Session length in seconds; otherwise the trials file's session_end_s.
    #[arg(long)]
    duration: Option<f64>,
    /// Comma-separated allowlist of subject ids.
    #[arg(long, value_delimiter = ',')]
    subjects: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GofArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    fits: PathBuf,
    /// Per-variant summary table.
    #[arg(long)]
    out: PathBuf,
    /// Per-subject rows.
    #[arg(long)]
    per_subject: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    fits: PathBuf,
    /// pp | scr | combined
    #[arg(long)]
    featureset: Option<FeatureSet>,
    #[arg(long)]
    out: PathBuf,
    /// Per-subject held-out decisions (classify only).
    #[arg(long)]
    folds: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    fits: PathBuf,
    #[arg(long)]
    featureset: Option<FeatureSet>,
    #[arg(long)]
    out: PathBuf,
    /// Kruskal-Wallis of fit quality across groups.
    #[arg(long)]
    kw: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IntensityArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    fits: PathBuf,
    #[arg(long)]
    subject: String,
    #[arg(long, default_value = "FULL")]
    variant: Variant,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e.chain().any(|c| c.downcast_ref::<scrpp::Error>().is_some_and(|s| s.is_numerical()));
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            bail!("--jobs must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(dt) = cli.dt {
        cfg.dt = dt;
    }
    cfg.validate()?;
    match cli.command {
        Command::Simulate(a) => simulate(&cfg, a, cli.seed),
        Command::Fit(a) => fit(cfg, a),
        Command::Gof(a) => gof(cfg, a),
        Command::Classify(a) => classify(cfg, a, Task::Classify),
        Command::Ablate(a) => classify(cfg, a, Task::Ablate),
        Command::Importance(a) => classify(cfg, a, Task::Importance),
        Command::Stats(a) => stats(cfg, a),
        Command::ExportIntensity(a) => export_intensity(cfg, a),
    }
}

fn echo(cfg: &RunConfig) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(cfg)?)
}

/// A spec file keeps its own seed unless `--seed` is given.
fn simulate(cfg: &RunConfig, a: SimulateArgs, seed_flag: Option<u64>) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<CohortSpec>(&text)
                .map_err(|e| scrpp::Error::Config(format!("{}: {e}", p.display())))?
        }
        None => CohortSpec::wneg_shift(a.n_per_group, a.shift, cfg.seed),
    };
    if let Some(s) = seed_flag {
        spec.seed = s;
    }
    spec.with_annotations |= a.annotations;
    let cohort = gen_cohort(&spec)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let echo = serde_json::to_value(&spec)?;
    let records = cohort.records();
    let labels: Vec<(String, String)> = cohort
        .subjects
        .iter()
        .map(|s| (s.record.subject_id.clone(), s.group.clone()))
        .collect();
    io::write_events_csv(&a.out_dir.join("events.csv"), &records, &echo)?;
    io::write_trials_csv(&a.out_dir.join("trials.csv"), &records, &echo)?;
    io::write_labels_csv(&a.out_dir.join("labels.csv"), &labels, &echo)?;
    io::write_table(&a.out_dir.join("truth.csv"), &echo, &io::truth_rows(&cohort))?;
    if spec.with_annotations {
        io::write_tonic_csv(&a.out_dir.join("tonic.csv"), &records, &echo)?;
    }
    log::info!("simulated {} subjects into {}", records.len(), a.out_dir.display());
    Ok(())
}

fn resolve(cfg: &mut RunConfig, input: &InputArgs) -> Result<InputPaths> {
    if input.events.is_some() {
        cfg.paths.events.clone_from(&input.events);
    }
    if input.trials.is_some() {
        cfg.paths.trials.clone_from(&input.trials);
    }
    if input.tonic.is_some() {
        cfg.paths.tonic.clone_from(&input.tonic);
    }
    if input.duration.is_some() {
        cfg.duration = input.duration;
    }
    if input.subjects.is_some() {
        cfg.subjects.clone_from(&input.subjects);
    }
    cfg.validate()?;
    let events = cfg
        .paths
        .events
        .clone()
        .ok_or_else(|| scrpp::Error::Config("no events file (--events or [paths] events)".into()))?;
    let trials = cfg
        .paths
        .trials
        .clone()
        .ok_or_else(|| scrpp::Error::Config("no trials file (--trials or [paths] trials)".into()))?;
    Ok(InputPaths {
        events,
        trials,
        tonic: cfg.paths.tonic.clone(),
    })
}

fn load(cfg: &mut RunConfig, input: &InputArgs) -> Result<Vec<SubjectRecord>> {
    let paths = resolve(cfg, input)?;
    let records = io::load_subjects(&paths, cfg.duration, cfg.subjects.as_deref())?;
    if records.is_empty() {
        bail!(scrpp::Error::InvalidInput("no subjects to process".into()));
    }
    Ok(records)
}

fn fit(mut cfg: RunConfig, a: FitArgs) -> Result<()> {
    let records = load(&mut cfg, &a.input)?;
    let mut inputs = BTreeMap::new();
    for p in [&cfg.paths.events, &cfg.paths.trials, &cfg.paths.tonic].into_iter().flatten() {
        let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
        inputs.insert(name, io::sha256_file(p)?);
    }
    let fits = fit_subjects(&records, &cfg.fit_options())?;
    let archive = FitArchive::new(echo(&cfg)?, inputs, fits);
    archive.write(&a.out)?;
    log::info!("wrote {} fit sets to {}", archive.fits.len(), a.out.display());
    Ok(())
}

fn fits_for<'a>(archive: &'a FitArchive, records: &[SubjectRecord]) -> Result<Vec<&'a scrpp::FitSet>> {
    records
        .iter()
        .map(|r| {
            archive
                .get(&r.subject_id)
                .ok_or_else(|| anyhow!(scrpp::Error::InvalidInput(format!("no fit for subject {} in the archive", r.subject_id))))
        })
        .collect()
}

fn gof(mut cfg: RunConfig, a: GofArgs) -> Result<()> {
    let records = load(&mut cfg, &a.input)?;
    let archive = FitArchive::read(&a.fits)?;
    let fits = fits_for(&archive, &records)?;
    let rows: Vec<ModelComparison> = records
        .iter()
        .zip(&fits)
        .filter(|(r, _)| {
            if r.events.is_empty() {
                log::warn!("subject {}: no events, excluded from the KS comparison", r.subject_id);
            }
            !r.events.is_empty()
        })
        .map(|(r, f)| compare_models(r, f))
        .collect::<scrpp::Result<_>>()?;
    let echo = echo(&cfg)?;
    io::write_table(&a.out, &echo, &comparison_table(&rows))?;
    if let Some(p) = &a.per_subject {
        io::write_table(p, &echo, &io::gof_rows(&rows))?;
    }
    Ok(())
}

fn labels(cfg: &mut RunConfig, path: &Option<PathBuf>) -> Result<BTreeMap<String, String>> {
    if path.is_some() {
        cfg.paths.labels.clone_from(path);
    }
    let p = cfg
        .paths
        .labels
        .clone()
        .ok_or_else(|| scrpp::Error::Config("no labels file (--labels or [paths] labels)".into()))?;
    Ok(io::parse_labels_csv(&p)?)
}

fn feature_table(
    cfg: &RunConfig,
    records: &[SubjectRecord],
    archive: &FitArchive,
    labels: &BTreeMap<String, String>,
) -> Result<FeatureTable> {
    let fs = cfg.featureset;
    if fs != FeatureSet::PointProcess && records.iter().all(|r| r.annotations.is_none()) {
        let why = if cfg.paths.tonic.is_none() {
            "no tonic file was given (--tonic, columns subject_id,time_s,conductance)".to_string()
        } else {
            format!(
                "{} lacks amplitude and rise_time_s columns",
                cfg.paths.events.as_deref().unwrap_or(Path::new("events file")).display()
            )
        };
        bail!(scrpp::Error::FeatureUnavailable(format!("feature set '{fs}' needs summary annotations, but {why}")));
    }
    let fits = fits_for(archive, records)?;
    let mut subjects = Vec::new();
    for (r, f) in records.iter().zip(fits) {
        let group = labels
            .get(&r.subject_id)
            .ok_or_else(|| scrpp::Error::InvalidInput(format!("subject {} has no group label", r.subject_id)))?;
        subjects.push(LabeledSubject {
            record: r,
            fits: f,
            group,
        });
    }
    Ok(ml::build_feature_table(&subjects, fs)?)
}

#[derive(Clone, Copy)]
enum Task {
    Classify,
    Ablate,
    Importance,
}

fn classify(mut cfg: RunConfig, a: ClassifyArgs, task: Task) -> Result<()> {
    if let Some(fs) = a.featureset {
        cfg.featureset = fs;
    }
    let records = load(&mut cfg, &a.input)?;
    let labels = labels(&mut cfg, &a.labels)?;
    let archive = FitArchive::read(&a.fits)?;
    let table = feature_table(&cfg, &records, &archive, &labels)?;
    let loso = cfg.loso();
    let echo = echo(&cfg)?;
    match task {
        Task::Classify => {
            let report = ml::loso_evaluate(&table, &loso, &cfg.seeds)?;
            io::write_table(&a.out, &echo, &io::eval_rows(cfg.featureset, &report))?;
            if let Some(p) = &a.folds {
                io::write_table(p, &echo, &io::fold_rows(cfg.featureset, &report))?;
            }
        }
        Task::Ablate => {
            let rows = ml::ablate(&table, &loso, &cfg.seeds, cfg.n_boot)?;
            io::write_table(&a.out, &echo, &rows)?;
        }
        Task::Importance => {
            let rows = ml::permutation_importance(&table, &loso, &cfg.seeds, cfg.n_shuffles)?;
            io::write_table(&a.out, &echo, &rows)?;
        }
    }
    Ok(())
}

fn stats(mut cfg: RunConfig, a: StatsArgs) -> Result<()> {
    if let Some(fs) = a.featureset {
        cfg.featureset = fs;
    }
    let records = load(&mut cfg, &a.input)?;
    let labels = labels(&mut cfg, &a.labels)?;
    let archive = FitArchive::read(&a.fits)?;
    let table = feature_table(&cfg, &records, &archive, &labels)?;
    let echo = echo(&cfg)?;
    let rows = group_comparison_report(&table.schema, &table.rows, &table.groups, &cfg.control, cfg.fdr_q)?;
    io::write_table(&a.out, &echo, &rows)?;
    if let Some(p) = &a.kw {
        let fits = fits_for(&archive, &records)?;
        let mut ks = Vec::new();
        let mut groups = Vec::new();
        for (r, f) in records.iter().zip(fits) {
            if r.events.is_empty() || !table.subject_ids.contains(&r.subject_id) {
                continue;
            }
            ks.push(scrpp::gof::ks_statistic(&r.events, &f.full.params, &r.trials)?);
            groups.push(labels[&r.subject_id].clone());
        }
        let kw = vec![group_kruskal_wallis("ks_full", &ks, &groups)?];
        io::write_table(p, &echo, &kw)?;
    }
    Ok(())
}

fn export_intensity(mut cfg: RunConfig, a: IntensityArgs) -> Result<()> {
    let mut input = a.input.clone();
    input.subjects = Some(vec![a.subject.clone()]);
    let records = load(&mut cfg, &input)?;
    let archive = FitArchive::read(&a.fits)?;
    let set = fits_for(&archive, &records)?[0];
    let rows = io::intensity_rows(&records[0], &set.get(a.variant).params, cfg.dt)?;
    io::write_table(&a.out, &echo(&cfg)?, &rows)?;
    Ok(())
}
