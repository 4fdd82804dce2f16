//! The `unprm` binary: pipeline verbs over JSONL files.
//!
//! Global flags pick the completion provider (deterministic simulator or
//! HTTP endpoint), the base seed, and an optional JSON config file; each
//! verb reads and writes files and prints a one-line JSON summary. Exit
//! codes: 0 success, 1 usage error, 2 provider error, 3 data error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::aggregate::{AggregateError, VoteInput, DEFAULT_ALPHA};
use crate::annotate::{AnnotateError, AnnotationConfig, Annotator};
use crate::backend::http::{EndpointConfig, HttpProvider};
use crate::backend::scorer::{HttpScorer, OracleScorer};
use crate::backend::sim::{SimProvider, SimulatedWorld};
use crate::backend::{BackendError, CompletionProvider, CostLedger, CostSnapshot, StepScorer};
use crate::datagen::{generate_pool, select_similar, select_uncertain, DatagenError};
use crate::evalkit::{
    bon_sweep, dataset_stats, export_training_data, frequency_analysis, processbench_f1,
    run_strategy, write_bucket_csv, write_histogram_csv, DecisionRecord, EvalError, Strategy,
    SweepConfig,
};
use crate::model::{
    answers_match, read_jsonl, read_questions, write_jsonl, AnnotationMethod, LabeledSolution,
    ModelError, Question, SolutionRecord,
};
use crate::rng::{fnv1a, mix_seed};
use crate::uncertainty::UncertaintyError;
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PROVIDER: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pipeline(#[from] Error),
}

macro_rules! pipeline_from {
    ($($t:ty),* $(,)?) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Pipeline(Error::from(e))
            }
        }
    )*};
}
pipeline_from!(
    ModelError,
    BackendError,
    AnnotateError,
    AggregateError,
    EvalError,
    DatagenError,
    UncertaintyError,
);

fn backend_is_provider_side(e: &BackendError) -> bool {
    // A broken world file or invalid solution data is the user's input;
    // everything else is the backend failing to serve.
    !matches!(e, BackendError::InvalidWorld(_) | BackendError::Model(_))
}

/// Maps an error to the documented exit code.
pub fn exit_code(error: &CliError) -> i32 {
    let CliError::Pipeline(inner) = error else {
        return EXIT_USAGE;
    };
    let provider_side = match inner {
        Error::Backend(e) => backend_is_provider_side(e),
        Error::Datagen(DatagenError::Backend(e)) => backend_is_provider_side(e),
        Error::Annotate(AnnotateError::Backend(e)) => backend_is_provider_side(e),
        Error::Annotate(AnnotateError::IncompleteBatch) => true,
        Error::Aggregate(AggregateError::Backend(e)) => backend_is_provider_side(e),
        Error::Eval(EvalError::Aggregate(AggregateError::Backend(e))) => {
            backend_is_provider_side(e)
        }
        _ => false,
    };
    if provider_side {
        EXIT_PROVIDER
    } else {
        EXIT_DATA
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Sim,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Oracle,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Simulated-world JSON file, for the sim provider.
    pub world: Option<PathBuf>,
    /// Endpoint settings, for the http provider.
    pub http: Option<EndpointConfig>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Sim,
            world: None,
            http: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    /// Oracle scorer: valid steps score `1 - epsilon`, invalid `epsilon`.
    pub epsilon: f64,
    /// Oracle scorer: per-step label corruption probability.
    pub flip_prob: f64,
    pub seed: u64,
    /// Scoring endpoint base URL, for the http scorer.
    pub base_url: Option<String>,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            kind: ScorerKind::Oracle,
            epsilon: 0.1,
            flip_prob: 0.0,
            seed: 0,
            base_url: None,
        }
    }
}

/// Everything configurable from the `--config` JSON file. Command-line
/// flags override individual fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub provider: ProviderConfig,
    pub annotate: AnnotationConfig,
    pub scorer: ScorerConfig,
    pub generate: crate::datagen::GenerateOptions,
    pub seed: u64,
    /// Reward weight for weighted-fusion aggregation.
    pub alpha: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            provider: ProviderConfig::default(),
            annotate: AnnotationConfig::default(),
            scorer: ScorerConfig::default(),
            generate: crate::datagen::GenerateOptions::default(),
            seed: 0,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "unprm",
    version,
    about = "Step-level reward training data and multi-sample answer aggregation"
)]
pub struct Cli {
    /// JSON config file; flags override individual fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed for sampling, annotation, and sweeps.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Completion provider.
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Simulated-world JSON file for the sim provider.
    #[arg(long, global = true)]
    pub world: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample k solutions per question into a pool file.
    Generate(GenerateArgs),
    /// Pick correct/incorrect candidate subsets from a pool.
    Select(SelectArgs),
    /// Label solutions step by step via error-step search.
    Annotate(AnnotateArgs),
    /// Aggregate pooled answers per question with one strategy.
    Aggregate(AggregateArgs),
    /// Accuracy sweep over candidate-set sizes and strategies.
    Sweep(SweepArgs),
    /// Error-location F1 between prediction and reference files.
    F1(F1Args),
    /// Dataset statistics per generator tag.
    Stats(StatsArgs),
    /// Gold-frequency buckets with per-bucket strategy accuracy.
    Freq(FreqArgs),
    /// Export labeled solutions as tagged training records.
    Export(ExportArgs),
    /// Merge cost snapshots from previous runs.
    CostReport(CostReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Questions JSONL; defaults to the simulated world's questions.
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Solutions to sample per question.
    #[arg(short, long, default_value_t = 8)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the run's cost snapshot to this JSON file.
    #[arg(long)]
    pub cost: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectStrategyArg {
    /// Highest sequence uncertainty per class.
    Uncertainty,
    /// Least similar to the rest of the pool per class.
    Similarity,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Pool JSONL from `generate`.
    #[arg(long)]
    pub solutions: PathBuf,
    /// Correct candidates to keep per question.
    #[arg(long, default_value_t = 4)]
    pub correct: usize,
    /// Incorrect candidates to keep per question.
    #[arg(long, default_value_t = 4)]
    pub incorrect: usize,
    #[arg(long, value_enum, default_value = "uncertainty")]
    pub strategy: SelectStrategyArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    #[value(name = "uncertainty")]
    Uncertainty,
    #[value(name = "binary_search")]
    BinarySearch,
    #[value(name = "random")]
    Random,
}

impl From<MethodArg> for AnnotationMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Uncertainty => AnnotationMethod::Uncertainty,
            MethodArg::BinarySearch => AnnotationMethod::BinarySearch,
            MethodArg::Random => AnnotationMethod::Random,
        }
    }
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Questions JSONL; defaults to the simulated world's questions.
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Candidate solutions JSONL.
    #[arg(long)]
    pub solutions: PathBuf,
    #[arg(long, value_enum, default_value = "uncertainty")]
    pub method: MethodArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the run's cost snapshot to this JSON file.
    #[arg(long)]
    pub cost: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    #[value(name = "majority")]
    Majority,
    #[value(name = "prm_bon")]
    PrmBon,
    #[value(name = "hmr")]
    Hmr,
    #[value(name = "wrf")]
    Wrf,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Majority => Strategy::Majority,
            StrategyArg::PrmBon => Strategy::PrmBon,
            StrategyArg::Hmr => Strategy::Hmr,
            StrategyArg::Wrf => Strategy::Wrf,
        }
    }
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Questions JSONL (gold answers); defaults to the world's questions.
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Candidate solutions JSONL, optionally labeled.
    #[arg(long)]
    pub solutions: PathBuf,
    #[arg(long, value_enum, default_value = "hmr")]
    pub strategy: StrategyArg,
    /// Per-question decision rows, JSONL.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Questions JSONL; defaults to the simulated world's questions.
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Candidate solutions JSONL, optionally labeled.
    #[arg(long)]
    pub solutions: PathBuf,
    /// Candidate-set sizes, comma separated and strictly increasing.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub sizes: Vec<usize>,
    /// Strategies to sweep; all four when omitted.
    #[arg(long, value_delimiter = ',', value_enum, num_args = 0..)]
    pub strategies: Vec<StrategyArg>,
    /// Full sweep result, JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-question decision rows, JSONL (for `freq`).
    #[arg(long)]
    pub decisions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct F1Args {
    /// JSONL rows with an `error_index` field (null = correct).
    #[arg(long)]
    pub predictions: PathBuf,
    /// JSONL rows with an `error_index` field (null = correct).
    #[arg(long)]
    pub references: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Labeled solutions JSONL.
    #[arg(long)]
    pub solutions: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FreqArgs {
    /// Questions JSONL; defaults to the simulated world's questions.
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Pool JSONL that gold frequencies are computed from.
    #[arg(long)]
    pub solutions: PathBuf,
    /// Decision rows JSONL from `sweep --decisions` or `aggregate --out`.
    #[arg(long)]
    pub decisions: PathBuf,
    /// Only use decisions at this candidate-set size (default: the largest
    /// size present).
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub buckets_out: PathBuf,
    #[arg(long)]
    pub histogram_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Questions JSONL; defaults to the simulated world's questions.
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Labeled solutions JSONL.
    #[arg(long)]
    pub solutions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CostReportArgs {
    /// Cost snapshot JSON files, comma separated.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments, executes, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests print to stdout and succeed.
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Generate(args) => cmd_generate(&config, args),
        Command::Select(args) => cmd_select(args),
        Command::Annotate(args) => cmd_annotate(&config, args),
        Command::Aggregate(args) => cmd_aggregate(&config, args),
        Command::Sweep(args) => cmd_sweep(&config, args),
        Command::F1(args) => cmd_f1(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Freq(args) => cmd_freq(&config, args),
        Command::Export(args) => cmd_export(&config, args),
        Command::CostReport(args) => cmd_cost_report(args),
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str(&text).map_err(|e| {
                CliError::Usage(format!("invalid config {}: {e}", path.display()))
            })?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(kind) = cli.provider {
        config.provider.kind = kind;
    }
    if let Some(world) = &cli.world {
        config.provider.world = Some(world.clone());
    }
    Ok(config)
}

fn build_provider(config: &PipelineConfig) -> Result<Box<dyn CompletionProvider>, CliError> {
    match config.provider.kind {
        ProviderKind::Sim => {
            let path = config.provider.world.as_ref().ok_or_else(|| {
                CliError::Usage(
                    "the sim provider needs --world or provider.world in the config".into(),
                )
            })?;
            let world = SimulatedWorld::load(path)?;
            Ok(Box::new(SimProvider::new(world)))
        }
        ProviderKind::Http => {
            let endpoint = config.provider.http.clone().ok_or_else(|| {
                CliError::Usage("the http provider needs provider.http in the config".into())
            })?;
            Ok(Box::new(HttpProvider::new(endpoint)?))
        }
    }
}

fn build_scorer(config: &PipelineConfig) -> Result<Box<dyn StepScorer>, CliError> {
    match config.scorer.kind {
        ScorerKind::Oracle => Ok(Box::new(
            OracleScorer::new(config.scorer.epsilon)
                .with_flip_prob(config.scorer.flip_prob)
                .with_seed(config.scorer.seed),
        )),
        ScorerKind::Http => {
            let base = config.scorer.base_url.as_ref().ok_or_else(|| {
                CliError::Usage("the http scorer needs scorer.base_url in the config".into())
            })?;
            Ok(Box::new(HttpScorer::new(base.clone())?))
        }
    }
}

/// Questions from the explicit file, or from the simulated world when the
/// sim provider is configured.
fn resolve_questions(
    flag: &Option<PathBuf>,
    config: &PipelineConfig,
) -> Result<Vec<Question>, CliError> {
    if let Some(path) = flag {
        return Ok(read_questions(path)?);
    }
    if config.provider.kind == ProviderKind::Sim {
        if let Some(world_path) = &config.provider.world {
            return Ok(SimulatedWorld::load(world_path)?.questions());
        }
    }
    Err(CliError::Usage(
        "pass --questions, or --world so questions can come from the simulated world".into(),
    ))
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Pipeline(Error::Model(ModelError::Io {
        path: path.display().to_string(),
        source,
    }))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string(value).map_err(|e| CliError::Pipeline(Error::Model(ModelError::Serialize(e))))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Pipeline(Error::Model(ModelError::Serialize(e))))?;
    fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}

fn write_cost(path: &Option<PathBuf>, ledger: &CostLedger) -> Result<(), CliError> {
    if let Some(path) = path {
        write_json_file(path, &ledger.snapshot())?;
    }
    Ok(())
}

/// Pools keyed by question id; rows keep file order within each pool.
fn pools_from_records(records: Vec<SolutionRecord>) -> BTreeMap<String, Vec<VoteInput>> {
    let mut pools: BTreeMap<String, Vec<VoteInput>> = BTreeMap::new();
    for record in records {
        pools
            .entry(record.solution.question_id.clone())
            .or_default()
            .push(VoteInput::from_record(record));
    }
    pools
}

#[derive(Serialize)]
struct GenerateSummary {
    command: &'static str,
    questions: usize,
    solutions: usize,
    cost: CostSnapshot,
}

fn cmd_generate(config: &PipelineConfig, args: &GenerateArgs) -> Result<(), CliError> {
    let questions = resolve_questions(&args.questions, config)?;
    let provider = build_provider(config)?;
    let ledger = CostLedger::new();
    let mut rows = Vec::new();
    for question in &questions {
        let mut options = config.generate.clone();
        options.seed = Some(mix_seed(&[config.seed, fnv1a(question.id.as_bytes())]));
        let pool = generate_pool(question, args.k, provider.as_ref(), &ledger, &options)?;
        rows.extend(pool.into_iter().map(SolutionRecord::bare));
    }
    write_jsonl(&args.out, rows.iter())?;
    write_cost(&args.cost, &ledger)?;
    println!(
        "{}",
        to_json(&GenerateSummary {
            command: "generate",
            questions: questions.len(),
            solutions: rows.len(),
            cost: ledger.snapshot(),
        })?
    );
    Ok(())
}

#[derive(Serialize)]
struct SelectSummary {
    command: &'static str,
    questions: usize,
    selected: usize,
}

fn cmd_select(args: &SelectArgs) -> Result<(), CliError> {
    let records: Vec<SolutionRecord> = read_jsonl(&args.solutions)?;
    // Group per question, keeping first-occurrence question order.
    let mut groups: Vec<(String, Vec<crate::model::SampledSolution>)> = Vec::new();
    for record in records {
        let qid = record.solution.question_id.clone();
        match groups.iter_mut().find(|(id, _)| *id == qid) {
            Some((_, pool)) => pool.push(record.solution),
            None => groups.push((qid, vec![record.solution])),
        }
    }
    let mut rows = Vec::new();
    let questions = groups.len();
    for (_, pool) in groups {
        let set = match args.strategy {
            SelectStrategyArg::Uncertainty => select_uncertain(&pool, args.correct, args.incorrect),
            SelectStrategyArg::Similarity => select_similar(&pool, args.correct, args.incorrect),
        };
        rows.extend(set.into_solutions().into_iter().map(SolutionRecord::bare));
    }
    write_jsonl(&args.out, rows.iter())?;
    println!(
        "{}",
        to_json(&SelectSummary {
            command: "select",
            questions,
            selected: rows.len(),
        })?
    );
    Ok(())
}

#[derive(Serialize)]
struct AnnotateSummary {
    command: &'static str,
    labeled: usize,
    discarded: usize,
    skipped: usize,
    cost: CostSnapshot,
}

fn cmd_annotate(config: &PipelineConfig, args: &AnnotateArgs) -> Result<(), CliError> {
    let questions = resolve_questions(&args.questions, config)?;
    let by_id: BTreeMap<&str, &Question> =
        questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let provider = build_provider(config)?;
    let ledger = CostLedger::new();
    let mut annotate_config = config.annotate.clone();
    annotate_config.base_seed = mix_seed(&[config.seed, annotate_config.base_seed]);
    let annotator = Annotator::new(annotate_config, provider.as_ref(), &ledger)?;
    let method: AnnotationMethod = args.method.into();

    let records: Vec<SolutionRecord> = read_jsonl(&args.solutions)?;
    let mut rows = Vec::new();
    let mut discarded = 0usize;
    let mut skipped = 0usize;
    for record in records {
        let mut solution = record.solution;
        let Some(question) = by_id.get(solution.question_id.as_str()) else {
            return Err(EvalError::UnknownQuestion(solution.question_id).into());
        };
        if solution.is_empty() {
            log::warn!(
                "skipping a solution for '{}' with no steps",
                solution.question_id
            );
            skipped += 1;
            continue;
        }
        if solution.is_correct.is_none() {
            solution.is_correct = Some(
                solution
                    .final_answer
                    .as_deref()
                    .map(|a| answers_match(a, &question.gold_answer))
                    .unwrap_or(false),
            );
        }
        match annotator.annotate(question, &solution, method)? {
            Some(labeled) => rows.push(SolutionRecord::from(labeled)),
            None => discarded += 1,
        }
    }
    write_jsonl(&args.out, rows.iter())?;
    write_cost(&args.cost, &ledger)?;
    println!(
        "{}",
        to_json(&AnnotateSummary {
            command: "annotate",
            labeled: rows.len(),
            discarded,
            skipped,
            cost: ledger.snapshot(),
        })?
    );
    Ok(())
}

#[derive(Serialize)]
struct AggregateSummary {
    command: &'static str,
    strategy: Strategy,
    questions: usize,
    correct: usize,
    accuracy: f64,
}

fn cmd_aggregate(config: &PipelineConfig, args: &AggregateArgs) -> Result<(), CliError> {
    let questions = resolve_questions(&args.questions, config)?;
    let records: Vec<SolutionRecord> = read_jsonl(&args.solutions)?;
    let pools = pools_from_records(records);
    let scorer = build_scorer(config)?;
    let strategy: Strategy = args.strategy.into();

    let mut rows = Vec::new();
    let mut correct_count = 0usize;
    for question in &questions {
        let Some(pool) = pools.get(&question.id) else {
            log::warn!("no solutions for question '{}'", question.id);
            continue;
        };
        let answer = run_strategy(question, pool, scorer.as_ref(), strategy, config.alpha)?;
        let correct = answer
            .as_deref()
            .map(|a| answers_match(a, &question.gold_answer))
            .unwrap_or(false);
        correct_count += correct as usize;
        rows.push(DecisionRecord {
            question_id: question.id.clone(),
            size: pool.len(),
            strategy,
            answer,
            correct,
        });
    }
    if let Some(out) = &args.out {
        write_jsonl(out, rows.iter())?;
    }
    println!(
        "{}",
        to_json(&AggregateSummary {
            command: "aggregate",
            strategy,
            questions: rows.len(),
            correct: correct_count,
            accuracy: if rows.is_empty() {
                0.0
            } else {
                correct_count as f64 / rows.len() as f64
            },
        })?
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepSummary {
    command: &'static str,
    sizes: Vec<usize>,
    points: usize,
}

fn cmd_sweep(config: &PipelineConfig, args: &SweepArgs) -> Result<(), CliError> {
    let questions = resolve_questions(&args.questions, config)?;
    let records: Vec<SolutionRecord> = read_jsonl(&args.solutions)?;
    let pools = pools_from_records(records);
    let scorer = build_scorer(config)?;
    let strategies: Vec<Strategy> = if args.strategies.is_empty() {
        Strategy::ALL.to_vec()
    } else {
        args.strategies.iter().map(|&s| s.into()).collect()
    };
    let sweep_config = SweepConfig {
        sizes: args.sizes.clone(),
        strategies,
        seed: config.seed,
        alpha: config.alpha,
    };
    let result = bon_sweep(&questions, &pools, scorer.as_ref(), &sweep_config)?;
    write_json_file(&args.out, &result)?;
    if let Some(decisions) = &args.decisions {
        write_jsonl(decisions, result.decisions.iter())?;
    }
    println!(
        "{}",
        to_json(&SweepSummary {
            command: "sweep",
            sizes: args.sizes.clone(),
            points: result.points.len(),
        })?
    );
    Ok(())
}

/// A prediction or reference row for `f1`: the first erroneous step, or
/// null for a correct solution.
#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorIndexRow {
    #[serde(default)]
    pub error_index: Option<usize>,
}

fn cmd_f1(args: &F1Args) -> Result<(), CliError> {
    let predictions: Vec<ErrorIndexRow> = read_jsonl(&args.predictions)?;
    let references: Vec<ErrorIndexRow> = read_jsonl(&args.references)?;
    let predictions: Vec<Option<usize>> = predictions.into_iter().map(|r| r.error_index).collect();
    let references: Vec<Option<usize>> = references.into_iter().map(|r| r.error_index).collect();
    let report = processbench_f1(&predictions, &references)?;
    if let Some(out) = &args.out {
        write_json_file(out, &report)?;
    }
    println!("{}", to_json(&report)?);
    Ok(())
}

fn cmd_stats(args: &StatsArgs) -> Result<(), CliError> {
    let records: Vec<SolutionRecord> = read_jsonl(&args.solutions)?;
    let labeled: Vec<LabeledSolution> = records
        .into_iter()
        .map(SolutionRecord::into_labeled)
        .collect::<Result<_, _>>()?;
    let stats = dataset_stats(&labeled);
    if let Some(out) = &args.out {
        write_json_file(out, &stats)?;
    }
    println!("{}", to_json(&stats)?);
    Ok(())
}

#[derive(Serialize)]
struct FreqSummary {
    command: &'static str,
    size: Option<usize>,
    decisions: usize,
    questions: usize,
}

fn cmd_freq(config: &PipelineConfig, args: &FreqArgs) -> Result<(), CliError> {
    let questions = resolve_questions(&args.questions, config)?;
    let records: Vec<SolutionRecord> = read_jsonl(&args.solutions)?;
    let pools = pools_from_records(records);
    let decisions: Vec<DecisionRecord> = read_jsonl(&args.decisions)?;
    let size = args.size.or_else(|| decisions.iter().map(|d| d.size).max());
    let filtered: Vec<DecisionRecord> = decisions
        .into_iter()
        .filter(|d| Some(d.size) == size)
        .collect();
    let report = frequency_analysis(&questions, &pools, &filtered)?;
    write_bucket_csv(&args.buckets_out, &report)?;
    write_histogram_csv(&args.histogram_out, &report)?;
    println!(
        "{}",
        to_json(&FreqSummary {
            command: "freq",
            size,
            decisions: filtered.len(),
            questions: questions.len(),
        })?
    );
    Ok(())
}

#[derive(Serialize)]
struct ExportSummary {
    command: &'static str,
    records: usize,
}

fn cmd_export(config: &PipelineConfig, args: &ExportArgs) -> Result<(), CliError> {
    let questions = resolve_questions(&args.questions, config)?;
    let records: Vec<SolutionRecord> = read_jsonl(&args.solutions)?;
    let labeled: Vec<LabeledSolution> = records
        .into_iter()
        .map(SolutionRecord::into_labeled)
        .collect::<Result<_, _>>()?;
    let training = export_training_data(&labeled, &questions)?;
    write_jsonl(&args.out, training.iter())?;
    println!(
        "{}",
        to_json(&ExportSummary {
            command: "export",
            records: training.len(),
        })?
    );
    Ok(())
}

fn cmd_cost_report(args: &CostReportArgs) -> Result<(), CliError> {
    let mut merged = CostSnapshot {
        verified_steps: 0,
        sampled_completions: 0,
        generated_tokens: 0,
    };
    for path in &args.inputs {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let snapshot: CostSnapshot = serde_json::from_str(&text).map_err(|e| {
            CliError::Pipeline(Error::Model(ModelError::Serialize(e)))
        })?;
        merged.verified_steps += snapshot.verified_steps;
        merged.sampled_completions += snapshot.sampled_completions;
        merged.generated_tokens += snapshot.generated_tokens;
    }
    if let Some(out) = &args.out {
        write_json_file(out, &merged)?;
    }
    println!("{}", to_json(&merged)?);
    Ok(())
}
