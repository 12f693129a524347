//! Command-line front end. Every subcommand validates its full flag set
//! first, computes, and only then writes output, atomically when a path
//! is given. Exit codes: 0 completed (no stop), 10 stopped for harm,
//! 2 input or configuration error, 3 numerical failure.

mod grid;
mod pivot;

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use earlystop::cate::{CateError, EstimatorKind};
use earlystop::clash::{monitor, ClashConfig, ClashError, Mode};
use earlystop::data::{
    ingest_csv, Checkpoint, DataError, ExperimentDataset, OutcomeKind, RecruitmentModel,
};
use earlystop::seqtests::{
    compute_boundary, BoundaryError, BoundaryFamily, Sigma2, StoppingTestConfig, TestError,
    TestKind,
};
use earlystop::simkit::{run_replications, MethodSpec, Scenario, SimError};
use earlystop::survival::SurvivalError;

const EXIT_STOPPED: u8 = 10;
const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "earlystop", version, about = "Sequential harm monitoring for randomized experiments")]
struct Cli {
    /// Cap on worker threads for replication fan-out.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute group-sequential z boundaries.
    Boundary(BoundaryArgs),
    /// Simulate monitored trials and tabulate stopping probabilities.
    Simulate(SimulateArgs),
    /// Monitor a recorded dataset checkpoint by checkpoint.
    Monitor(MonitorArgs),
    /// Emit per-participant weights (or effect estimates) at one checkpoint.
    Weights(WeightsArgs),
    /// Pivot a long-format simulation CSV into a per-method table.
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Of,
    Pocock,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutcomeArg {
    Gaussian,
    Tte,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TestArg {
    #[value(name = "of_z")]
    OfZ,
    #[value(name = "pocock_z")]
    PocockZ,
    Sprt,
    Msprt,
    Maxsprt,
    Bayes,
}

impl TestArg {
    fn kind(self) -> TestKind {
        match self {
            TestArg::OfZ => TestKind::OfZ,
            TestArg::PocockZ => TestKind::PocockZ,
            TestArg::Sprt => TestKind::GaussianSprt,
            TestArg::Msprt => TestKind::Msprt,
            TestArg::Maxsprt => TestKind::MaxSprt,
            TestArg::Bayes => TestKind::BayesEstimation,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Clash,
    Homogeneous,
    Oracle,
}

impl ModeArg {
    fn mode(self) -> Mode {
        match self {
            ModeArg::Clash => Mode::Clash,
            ModeArg::Homogeneous => Mode::Homogeneous,
            ModeArg::Oracle => Mode::Oracle,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    #[value(name = "cell_mean")]
    CellMean,
    Forest,
    Linear,
    #[value(name = "tte_hazard")]
    TteHazard,
}

impl EstimatorArg {
    fn kind(self) -> EstimatorKind {
        match self {
            EstimatorArg::CellMean => EstimatorKind::CellMean,
            EstimatorArg::Forest => EstimatorKind::CausalForest,
            EstimatorArg::Linear => EstimatorKind::LinearTLearner,
            EstimatorArg::TteHazard => EstimatorKind::TteCellHazard,
        }
    }
}

#[derive(Args)]
struct BoundaryArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Information fractions of the monitored looks, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    fractions: Vec<f64>,
    #[arg(long, value_enum, default_value = "of")]
    family: FamilyArg,
    /// The listed fractions already include the final analysis.
    #[arg(long = "final", overrides_with = "no_final")]
    includes_final: bool,
    /// The listed fractions are interim-only; a final look is reserved.
    #[arg(long = "no-final")]
    no_final: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    outcome: OutcomeArg,
    /// Grid file of `key = v1,v2,...` lines; scenarios are the cartesian
    /// product. Without it the scenario flags below define a single cell.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Weighting modes to run, comma separated: clash, homog, oracle.
    #[arg(long, value_delimiter = ',', default_value = "clash,homog")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Base seed; all randomness in the run derives from it.
    #[arg(long, required = true)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    minority_k: Option<usize>,
    #[arg(long)]
    minority_prob: Option<f64>,
    #[arg(long)]
    theta0: Option<f64>,
    #[arg(long)]
    theta1: Option<f64>,
    /// Gaussian: participant counts. TTE: months. Comma separated.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "of_z")]
    test: TestArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Minimum effect size treated as harm; defaults to 0.1 for gaussian
    /// outcomes and 0.05 for time-to-event outcomes.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 5)]
    k_folds: usize,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// Known per-outcome variance; omits the plug-in estimate.
    #[arg(long)]
    sigma2: Option<f64>,
}

#[derive(Args)]
struct MonitorArgs {
    #[arg(long, required = true)]
    data: PathBuf,
    #[arg(long, value_enum, required = true)]
    outcome: OutcomeArg,
    /// Gaussian: participant counts. TTE: months. Comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    checkpoints: Vec<f64>,
    #[arg(long, value_enum, default_value = "of_z")]
    test: TestArg,
    #[arg(long, value_enum, default_value = "clash")]
    mode: ModeArg,
    #[arg(long)]
    delta: Option<f64>,
    /// Cross-fitting folds.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Required in clash mode: fold assignment must be reproducible.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// Known per-outcome variance; omits the plug-in estimate.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Total study duration in months; required for month checkpoints.
    #[arg(long)]
    study_months: Option<f64>,
    /// The listed checkpoints already include the final analysis.
    #[arg(long = "final", overrides_with = "no_final")]
    includes_final: bool,
    #[arg(long = "no-final")]
    no_final: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsArgs {
    #[arg(long, required = true)]
    data: PathBuf,
    #[arg(long, value_enum, required = true)]
    outcome: OutcomeArg,
    /// Gaussian: participant count. TTE: month.
    #[arg(long, required = true)]
    checkpoint: f64,
    #[arg(long, value_enum, default_value = "clash")]
    mode: ModeArg,
    #[arg(long)]
    delta: Option<f64>,
    /// Cross-fitting folds.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Required in clash mode: fold assignment must be reproducible.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// Emit cross-fitted effect estimates instead of weights.
    #[arg(long)]
    emit_cate: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Long-format CSV produced by `simulate`.
    #[arg(long, required = true)]
    data: PathBuf,
    /// Keep only rows at this checkpoint label (a count, a month, or `any`).
    #[arg(long)]
    checkpoint: Option<String>,
    /// Difference column: pivot `p_a - p_b` for two methods `a,b`.
    #[arg(long, value_delimiter = ',')]
    diff: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Clash(#[from] ClashError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error(transparent)]
    Test(#[from] TestError),
    #[error(transparent)]
    Survival(#[from] SurvivalError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Data(_) | CliError::Boundary(_) | CliError::Io { .. } => {
                EXIT_INPUT
            }
            CliError::Clash(e) => clash_code(e),
            CliError::Sim(e) => sim_code(e),
            CliError::Test(e) => test_code(e),
            CliError::Survival(e) => survival_code(e),
        }
    }
}

fn clash_code(e: &ClashError) -> u8 {
    match e {
        ClashError::InvalidConfig(_) | ClashError::Data(_) | ClashError::MissingTrueCate(_) => {
            EXIT_INPUT
        }
        ClashError::EmptyView => EXIT_INPUT,
        ClashError::Cate(c) => cate_code(c),
        ClashError::Test(t) => test_code(t),
        ClashError::WeightCoverage { .. } => EXIT_NUMERICAL,
    }
}

fn cate_code(e: &CateError) -> u8 {
    match e {
        CateError::KTooSmall(_) | CateError::KAboveN { .. } | CateError::WrongOutcome { .. } => {
            EXIT_INPUT
        }
        CateError::FoldFit { source, .. } => cate_code(source),
        _ => EXIT_NUMERICAL,
    }
}

fn test_code(e: &TestError) -> u8 {
    match e {
        TestError::InvalidConfig(_) | TestError::Boundary(_) => EXIT_INPUT,
        _ => EXIT_NUMERICAL,
    }
}

fn survival_code(e: &SurvivalError) -> u8 {
    match e {
        SurvivalError::InvalidScenario(_) | SurvivalError::BadHorizon(_) | SurvivalError::NotTte => {
            EXIT_INPUT
        }
        SurvivalError::Data(_) => EXIT_INPUT,
        _ => EXIT_NUMERICAL,
    }
}

fn sim_code(e: &SimError) -> u8 {
    match e {
        SimError::InvalidScenario(_) | SimError::GridMismatch(_) | SimError::UnknownMethod(_) => {
            EXIT_INPUT
        }
        SimError::Replication { source, .. } => clash_code(source),
        SimError::Survival(s) => survival_code(s),
        SimError::Data(_) | SimError::Io(_) => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_INPUT);
        }
        // ignore failure: the pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let outcome = match cli.command {
        Command::Boundary(args) => run_boundary(&args),
        Command::Simulate(args) => run_simulate(&args),
        Command::Monitor(args) => run_monitor(&args),
        Command::Weights(args) => run_weights(&args),
        Command::Report(args) => run_report(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprint!("error: {e}");
            let mut cause = std::error::Error::source(&e);
            while let Some(c) = cause {
                eprint!(": {c}");
                cause = c.source();
            }
            eprintln!();
            ExitCode::from(e.exit_code())
        }
    }
}

/// Writes the finished output: stdout by default, or atomically to a path
/// via a temp file in the same directory so failures leave nothing behind.
fn write_output(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    let io_err = |context: &str| {
        let context = context.to_string();
        move |source: io::Error| CliError::Io { context, source }
    };
    match out {
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(content.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(io_err("writing standard output"))
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir)
                .map_err(io_err(&format!("creating temp file near {}", path.display())))?;
            tmp.write_all(content.as_bytes())
                .map_err(io_err(&format!("writing {}", path.display())))?;
            tmp.persist(path)
                .map_err(|e| e.error)
                .map_err(io_err(&format!("renaming into {}", path.display())))?;
            Ok(())
        }
    }
}

fn read_dataset(path: &Path, outcome: OutcomeArg) -> Result<ExperimentDataset, CliError> {
    let kind = match outcome {
        OutcomeArg::Gaussian => OutcomeKind::Gaussian,
        OutcomeArg::Tte => OutcomeKind::Tte,
    };
    let file = File::open(path).map_err(|source| CliError::Io {
        context: format!("opening {}", path.display()),
        source,
    })?;
    Ok(ingest_csv(file, kind)?)
}

fn run_boundary(args: &BoundaryArgs) -> Result<u8, CliError> {
    let schedule = compute_boundary(
        args.alpha,
        &args.fractions,
        match args.family {
            FamilyArg::Of => BoundaryFamily::ObrienFleming,
            FamilyArg::Pocock => BoundaryFamily::Pocock,
        },
        args.includes_final,
    )?;
    let mut out = String::from("k,fraction,bound\n");
    for (i, (f, b)) in schedule.info_fractions.iter().zip(&schedule.bounds).enumerate() {
        out.push_str(&format!("{},{:.6},{:.6}\n", i + 1, f, b));
    }
    write_output(args.out.as_deref(), &out)?;
    Ok(0)
}

fn default_delta(outcome: OutcomeArg) -> f64 {
    match outcome {
        OutcomeArg::Gaussian => 0.1,
        OutcomeArg::Tte => 0.05,
    }
}

fn default_estimator(outcome: OutcomeArg) -> EstimatorKind {
    match outcome {
        OutcomeArg::Gaussian => EstimatorKind::CellMean,
        OutcomeArg::Tte => EstimatorKind::TteCellHazard,
    }
}

fn build_test_config(
    kind: TestKind,
    alpha: f64,
    sigma2: Option<f64>,
) -> StoppingTestConfig {
    StoppingTestConfig {
        kind,
        alpha,
        sigma2: match sigma2 {
            Some(v) => Sigma2::Fixed(v),
            None => Sigma2::Estimate,
        },
        ..StoppingTestConfig::default()
    }
}

fn parse_checkpoints(values: &[f64], outcome: OutcomeArg) -> Result<Vec<Checkpoint>, CliError> {
    values
        .iter()
        .map(|&v| match outcome {
            OutcomeArg::Gaussian => {
                if v.fract() != 0.0 || !(v >= 1.0) {
                    return Err(CliError::Usage(format!(
                        "--checkpoints: gaussian checkpoints are participant counts, got {v}"
                    )));
                }
                Ok(Checkpoint::Count(v as usize))
            }
            OutcomeArg::Tte => {
                if !(v > 0.0) {
                    return Err(CliError::Usage(format!(
                        "--checkpoints: months must be positive, got {v}"
                    )));
                }
                Ok(Checkpoint::Month(v))
            }
        })
        .collect()
}

fn run_monitor(args: &MonitorArgs) -> Result<u8, CliError> {
    let mode = args.mode.mode();
    let seed = match (mode, args.seed) {
        (Mode::Clash, None) => {
            return Err(CliError::Usage(
                "--seed is required in clash mode; fold assignment must be reproducible".into(),
            ));
        }
        (_, s) => s.unwrap_or(0),
    };
    let checkpoints = parse_checkpoints(&args.checkpoints, args.outcome)?;
    let mut dataset = read_dataset(&args.data, args.outcome)?;
    if args.outcome == OutcomeArg::Tte {
        let total = args.study_months.ok_or_else(|| {
            CliError::Usage("--study-months is required for time-to-event monitoring".into())
        })?;
        if !(total > 0.0) {
            return Err(CliError::Usage("--study-months must be positive".into()));
        }
        let accrual = match dataset.recruitment() {
            RecruitmentModel::Accrual { accrual_months, .. } => accrual_months,
            RecruitmentModel::PairedSteps => 0.0,
        };
        dataset = ExperimentDataset::new(
            dataset.records().to_vec(),
            OutcomeKind::Tte,
            RecruitmentModel::Accrual { accrual_months: accrual, study_months: Some(total) },
        )?;
    }
    let config = ClashConfig {
        delta: args.delta.unwrap_or(default_delta(args.outcome)),
        estimator: args.estimator.map_or(default_estimator(args.outcome), EstimatorArg::kind),
        k_folds: args.k,
        test: build_test_config(args.test.kind(), args.alpha, args.sigma2),
        includes_final_analysis: args.includes_final,
        ..ClashConfig::default()
    };
    let trace = monitor(&dataset, &checkpoints, &config, mode, seed)?;

    let mut out = String::from("checkpoint,n_effective,statistic,bound,stop,degenerate\n");
    for report in &trace.reports {
        let label = match report.checkpoint {
            Checkpoint::Count(c) => format!("{c}"),
            Checkpoint::Month(m) => format!("{m}"),
        };
        let d = &report.decision;
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{},{}\n",
            label,
            d.statistic.n_effective,
            d.statistic.value,
            d.bound,
            u8::from(d.stop),
            u8::from(d.degenerate),
        ));
        if let Some(cate) = &report.cate {
            eprintln!(
                "checkpoint {label}: mean effect {:.4}, mean sd {:.4}, {} fallback of {}",
                cate.mean_tau, cate.mean_sigma, cate.fallback_count, cate.n
            );
        }
    }
    write_output(args.out.as_deref(), &out)?;
    if trace.stopped() {
        eprintln!("stopped for harm");
        Ok(EXIT_STOPPED)
    } else {
        Ok(0)
    }
}

fn run_weights(args: &WeightsArgs) -> Result<u8, CliError> {
    use earlystop::clash::{clash_weights, oracle_weights, unit_weights};
    use earlystop::cate::crossfit_cate;

    let mode = args.mode.mode();
    let seed = match (mode, args.seed) {
        (Mode::Clash, None) => {
            return Err(CliError::Usage(
                "--seed is required in clash mode; fold assignment must be reproducible".into(),
            ));
        }
        (_, s) => s.unwrap_or(0),
    };
    if args.emit_cate && mode != Mode::Clash {
        return Err(CliError::Usage("--emit-cate needs --mode clash".into()));
    }
    let checkpoint = parse_checkpoints(&[args.checkpoint], args.outcome)?[0];
    let dataset = read_dataset(&args.data, args.outcome)?;
    let view = dataset.snapshot_at(checkpoint)?;
    if view.records.is_empty() {
        return Err(CliError::Usage("the checkpoint admits no participants".into()));
    }
    let delta = args.delta.unwrap_or(default_delta(args.outcome));
    if !(delta > 0.0) {
        return Err(CliError::Usage("--delta must be positive".into()));
    }
    let estimator = args.estimator.map_or(default_estimator(args.outcome), EstimatorArg::kind);
    let config = ClashConfig::default();

    let mut out = String::new();
    match mode {
        Mode::Clash => {
            let params = earlystop::cate::CateParams::default();
            let estimates = crossfit_cate(&view, estimator, args.k, seed, &params)
                .map_err(ClashError::from)?;
            if args.emit_cate {
                out.push_str("id,fold,tau_hat,sigma_hat\n");
                for (id, e) in &estimates.by_id {
                    out.push_str(&format!(
                        "{},{},{:.6},{:.6}\n",
                        id, e.fold, e.tau_hat, e.sigma_hat
                    ));
                }
            } else {
                let weights = clash_weights(&estimates, delta, config.harm_direction);
                out.push_str("id,weight\n");
                for (id, w) in weights.iter() {
                    out.push_str(&format!("{id},{w:.6}\n"));
                }
            }
        }
        Mode::Oracle => {
            let weights = oracle_weights(&view, config.harm_direction)?;
            out.push_str("id,weight\n");
            for (id, w) in weights.iter() {
                out.push_str(&format!("{id},{w:.6}\n"));
            }
        }
        Mode::Homogeneous => {
            let weights = unit_weights(&view);
            out.push_str("id,weight\n");
            for (id, w) in weights.iter() {
                out.push_str(&format!("{id},{w:.6}\n"));
            }
        }
    }
    write_output(args.out.as_deref(), &out)?;
    Ok(0)
}

fn method_spec(name: &str, base: &ClashConfig) -> Result<MethodSpec, CliError> {
    let mode = match name {
        "clash" => Mode::Clash,
        "homog" | "homogeneous" => Mode::Homogeneous,
        "oracle" => Mode::Oracle,
        other => {
            return Err(CliError::Usage(format!(
                "--methods: unknown method `{other}` (expected clash, homog, or oracle)"
            )));
        }
    };
    Ok(MethodSpec { name: name.to_string(), mode, config: base.clone() })
}

fn run_simulate(args: &SimulateArgs) -> Result<u8, CliError> {
    let delta = args.delta.unwrap_or(default_delta(args.outcome));
    let base_config = ClashConfig {
        delta,
        estimator: args.estimator.map_or(default_estimator(args.outcome), EstimatorArg::kind),
        k_folds: args.k_folds,
        test: build_test_config(args.test.kind(), args.alpha, args.sigma2),
        ..ClashConfig::default()
    };
    let methods = args
        .methods
        .iter()
        .map(|m| method_spec(m, &base_config))
        .collect::<Result<Vec<_>, CliError>>()?;
    if methods.is_empty() {
        return Err(CliError::Usage("--methods must name at least one method".into()));
    }

    let scenarios: Vec<(String, Scenario)> = match &args.grid {
        Some(path) => {
            let mut text = String::new();
            File::open(path)
                .and_then(|mut f| f.read_to_string(&mut text))
                .map_err(|source| CliError::Io {
                    context: format!("reading {}", path.display()),
                    source,
                })?;
            grid::expand(&text, args)?
        }
        None => vec![("s000".to_string(), grid::single_scenario(args)?)],
    };

    // validate every cell before running anything
    for (_, scenario) in &scenarios {
        scenario.validate().map_err(CliError::Sim)?;
    }

    let mut out = String::new();
    for (i, (id, scenario)) in scenarios.iter().enumerate() {
        let scenario_seed =
            earlystop::seeds::derive_seed(args.seed, i as u64, earlystop::seeds::Stream::Data);
        let summary = run_replications(scenario, id, &methods, args.reps, scenario_seed)?;
        let mut block = Vec::new();
        summary.write_csv(&mut block).map_err(CliError::Sim)?;
        let block = String::from_utf8(block).expect("csv output is utf-8");
        if i == 0 {
            out.push_str(&block);
        } else {
            // one header for the whole file
            out.push_str(block.split_once('\n').map(|(_, rest)| rest).unwrap_or(""));
        }
        eprintln!("scenario {id}: {} replications done", args.reps);
    }
    write_output(args.out.as_deref(), &out)?;
    Ok(0)
}

fn run_report(args: &ReportArgs) -> Result<u8, CliError> {
    let file = File::open(&args.data).map_err(|source| CliError::Io {
        context: format!("opening {}", args.data.display()),
        source,
    })?;
    let table = pivot::pivot(file, args.checkpoint.as_deref(), args.diff.as_deref())?;
    write_output(args.out.as_deref(), &table)?;
    Ok(0)
}
