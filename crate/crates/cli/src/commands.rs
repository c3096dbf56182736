//! Subcommand implementations. Each writes its files under an output
//! directory and prints a short summary on stdout.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context as _, Result};
use clap::Args;

use confopt::harness::{
    collect_exhaustive, compare, report, run_optimization, run_screening, screening_vs_standalone, CollectOptions,
    Dataset, HarnessError, LiveEvaluator, RunTrace, StudyOptions,
};
use confopt::optim::{OptimizerKind, OptimizerSession, StrategyOptions};
use confopt::screening::{report_rows, write_report};

use crate::config::{ConfigError, RunConfig, OUTPUT_ENV};

#[derive(Debug, Args)]
pub struct ScreenArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured optimizer.
    #[arg(long)]
    pub optimizer: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExhaustiveArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Largest space collected without screening first.
    #[arg(long, default_value_t = CollectOptions::default().cap)]
    pub cap: u64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "bayesian-ei,bestconfig,random,randominc,exhaustive")]
    pub optimizers: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    pub runs: usize,
    #[arg(long, default_value_t = 100)]
    pub budget: usize,
    #[arg(long, default_value_t = 6)]
    pub batch: usize,
    /// Run `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to $CONFOPT_OUT, then the current directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A dataset CSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScreenVsBoArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Samples per arm: standalone BO gets all of them, the screened arm
    /// pays for screening and spends the rest inside the reduced space.
    #[arg(long, default_value_t = 150)]
    pub budget: usize,
    #[arg(long, default_value_t = 20)]
    pub repetitions: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn load(path: &Path) -> Result<RunConfig> {
    Ok(RunConfig::load(path)?)
}

fn out_dir(dir: PathBuf) -> Result<PathBuf> {
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn print_written(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

pub fn screen(args: ScreenArgs) -> Result<()> {
    let cfg = load(&args.config)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let backend = cfg.load_backend()?;
    let scorer = cfg.scorer();
    let evaluator = LiveEvaluator::new(&cfg.space, backend.experiment.as_ref(), &scorer, &cfg.workload);
    let outcome = run_screening(&evaluator, &cfg.screening, seed)?;
    for (i, o) in outcome.observations.iter().enumerate() {
        log::info!("screening evaluation {}: {} utility {}", i + 1, cfg.space.config_key(&o.config), o.utility);
    }

    let dir = out_dir(cfg.output_dir.join("screen"))?;
    let report_path = dir.join("screening.csv");
    let file = File::create(&report_path).with_context(|| report_path.display().to_string())?;
    write_report(&report_rows(&outcome.stats, &outcome.reduction), BufWriter::new(file))?;

    let samples_path = dir.join("screening_samples.csv");
    let trace = RunTrace::from_observations("moat-screening", seed, outcome.observations.iter().cloned(), None);
    report::write_trace(&trace, &cfg.space, &samples_path)?;

    let reduced_path = dir.join("reduced.yaml");
    fs::write(&reduced_path, cfg.reduced_document(&outcome.reduction.reduced_space)?)
        .with_context(|| reduced_path.display().to_string())?;

    let summary = report::screening_summary(&outcome);
    let summary_path = dir.join(report::SUMMARY_FILE);
    fs::write(&summary_path, &summary).with_context(|| summary_path.display().to_string())?;
    print!("{summary}");
    print_written(&[report_path, samples_path, reduced_path, summary_path]);
    Ok(())
}

pub fn optimize(args: OptimizeArgs) -> Result<()> {
    let cfg = load(&args.config)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let kind = match &args.optimizer {
        Some(name) => name.parse::<OptimizerKind>().map_err(|e| ConfigError(format!("--optimizer: {e}")))?,
        None => cfg.optimizer,
    };
    let backend = cfg.load_backend()?;
    let scorer = cfg.scorer();
    let evaluator = LiveEvaluator::new(&cfg.space, backend.experiment.as_ref(), &scorer, &cfg.workload);
    let optimum = backend.dataset.as_ref().map(|d| d.optimum().config.clone());
    let mut session = OptimizerSession::new(
        cfg.space.clone(),
        kind,
        cfg.budget(),
        cfg.samples_per_iteration,
        seed,
        &StrategyOptions::default(),
    )
    .map_err(|e| ConfigError(e.to_string()))?;

    let dir = out_dir(cfg.output_dir.join("optimize"))?;
    let trace = match run_optimization(&mut session, &evaluator, optimum.as_ref()) {
        Ok(trace) => trace,
        Err(HarnessError::Aborted { trace, source }) => {
            let files = report::emit_trace(&trace, &cfg.space, &dir)?;
            print_written(&files);
            return Err(anyhow::Error::new(*source)
                .context(format!("run aborted after {} evaluations; partial trace kept", trace.observations.len())));
        }
        Err(e) => return Err(e.into()),
    };
    let files = report::emit_trace(&trace, &cfg.space, &dir)?;
    print!("{}", report::trace_summary(&trace, &cfg.space));
    print_written(&files);
    Ok(())
}

pub fn exhaustive(args: ExhaustiveArgs) -> Result<()> {
    let cfg = load(&args.config)?;
    let backend = cfg.load_backend()?;
    let scorer = cfg.scorer();
    let evaluator = LiveEvaluator::new(&cfg.space, backend.experiment.as_ref(), &scorer, &cfg.workload);
    let dir = out_dir(cfg.output_dir.join("exhaustive"))?;
    let csv_path = dir.join("dataset.csv");
    let options = CollectOptions { cap: args.cap, ..CollectOptions::default() };
    let dataset = match collect_exhaustive(&evaluator, &csv_path, options) {
        Err(e @ HarnessError::TooLarge { .. }) => return Err(ConfigError(e.to_string()).into()),
        other => other?,
    };
    let mut files = vec![csv_path.clone()];
    files.extend(report::emit_dataset(&dataset, Some(&csv_path), &dir)?);
    print!("{}", report::dataset_summary(&dataset));
    print_written(&files);
    Ok(())
}

pub fn compare_cmd(args: CompareArgs) -> Result<()> {
    let kinds = args
        .optimizers
        .iter()
        .map(|n| n.trim().parse::<OptimizerKind>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ConfigError(format!("--optimizers: {e}")))?;
    if args.runs == 0 || args.budget == 0 || args.batch == 0 {
        return Err(ConfigError("--runs, --budget and --batch must be positive".into()).into());
    }
    let dataset = Dataset::read(&args.dataset).map_err(|e| ConfigError(format!("{}: {e}", args.dataset.display())))?;
    let dir = match args.out {
        Some(dir) => dir,
        None => {
            std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()).map_or_else(|| PathBuf::from("."), PathBuf::from)
        }
    };
    let dir = out_dir(dir)?;
    let started = Instant::now();
    let report = compare(&dataset, &kinds, args.runs, args.budget, args.batch, args.seed, &StrategyOptions::default())?;
    log::info!("{} optimizers x {} runs in {:.1?}", kinds.len(), args.runs, started.elapsed());
    let files = report::emit_comparison(&report, &dir)?;
    print!("{}", report::comparison_summary(&report));
    print_written(&files);
    Ok(())
}

pub fn report_cmd(args: ReportArgs) -> Result<()> {
    let dataset = Dataset::read(&args.input).map_err(|e| ConfigError(format!("{}: {e}", args.input.display())))?;
    let dir = out_dir(args.out)?;
    let files = report::emit_dataset(&dataset, Some(&args.input), &dir)?;
    print!("{}", report::dataset_summary(&dataset));
    print_written(&files);
    Ok(())
}

pub fn screen_vs_bo(args: ScreenVsBoArgs) -> Result<()> {
    let cfg = load(&args.config)?;
    let backend = cfg.load_backend()?;
    let scorer = cfg.scorer();
    let evaluator = LiveEvaluator::new(&cfg.space, backend.experiment.as_ref(), &scorer, &cfg.workload);
    let options = StudyOptions {
        screening: cfg.screening.clone(),
        budget: args.budget,
        batch_size: cfg.samples_per_iteration,
        repetitions: args.repetitions,
        base_seed: args.seed.unwrap_or(cfg.seed),
        ..StudyOptions::default()
    };
    let study = screening_vs_standalone(&evaluator, &options)?;
    let dir = out_dir(cfg.output_dir.join("screen-vs-bo"))?;
    let csv_path = dir.join("study.csv");
    report::write_study(&study, &csv_path)?;
    let summary = report::study_summary(&study);
    let summary_path = dir.join(report::SUMMARY_FILE);
    fs::write(&summary_path, &summary).with_context(|| summary_path.display().to_string())?;
    print!("{summary}");
    print_written(&[csv_path, summary_path]);
    Ok(())
}
