//! Command-line front end. `run` returns the process exit status so tests can
//! drive it in-process.
//!
//! Settings resolve in this order, later winning: built-in defaults, the TOML
//! file given with `--config`, environment variables, command-line flags.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::backend::{Backend, BackendError, CassetteBackend, OracleBackend, RemoteBackend, RemoteConfig, ENDPOINT_ENV};
use crate::corpus::{self, CorpusError, SentenceRecord};
use crate::metrics::{self, MetricsError, RunMetadata};
use crate::pipeline::{self, PipelineError, RunSettings};
use crate::prompts::{PromptError, PromptVersion, TemplateSet};
use crate::report::{self, ErrorSummary};
use crate::synthetic;
use crate::tuner::{self, Budget, DeltaMode, PipelineEvaluator, TuningError};
use crate::{EvaluationReport, TunerConfig, TuningAudit};

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const PARSE: i32 = 4;
    pub const BACKEND: i32 = 5;
    pub const EVALUATION: i32 = 6;
    pub const TUNING: i32 = 7;
    pub const CONFIG: i32 = 8;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Tuning(#[from] TuningError),
    #[error("tuning failed: {0}")]
    TuningFailed(String),
    #[error("error cases do not reconcile with the metrics: {}", .0.join("; "))]
    Reconciliation(Vec<String>),
}

fn corpus_code(e: &CorpusError) -> i32 {
    match e {
        CorpusError::Io { .. } => exit::IO,
        CorpusError::UndefinedRate => exit::EVALUATION,
        _ => exit::PARSE,
    }
}

fn backend_code(e: &BackendError) -> i32 {
    match e {
        BackendError::Config(_) => exit::CONFIG,
        _ => exit::BACKEND,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Parse { .. } => exit::PARSE,
            CliError::Corpus(e) => corpus_code(e),
            CliError::Backend(e) => backend_code(e),
            CliError::Pipeline(e) => match e {
                PipelineError::Corpus(c) => corpus_code(c),
                PipelineError::Batch(_) | PipelineError::InvalidParallelism => exit::USAGE,
                PipelineError::Prompt(PromptError::UnknownVersion(_)) => exit::USAGE,
                PipelineError::Prompt(_) => exit::CONFIG,
                PipelineError::Backend { source, .. } | PipelineError::Aborted { source, .. } => backend_code(source),
                PipelineError::Checkpoint { .. } => exit::IO,
            },
            CliError::Metrics(_) | CliError::Reconciliation(_) => exit::EVALUATION,
            CliError::Tuning(TuningError::Config(_)) => exit::CONFIG,
            CliError::Tuning(_) | CliError::TuningFailed(_) => exit::TUNING,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "clinact", version, about = "Extract and evaluate post-discharge follow-up actions")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Documents (JSON lines) to the labeled sentence CSV.
    Preprocess(PreprocessArgs),
    /// Run the extraction pipeline over a sentence CSV.
    Run(RunArgs),
    /// Score predictions against gold sentences.
    Evaluate(EvaluateArgs),
    /// Select a batch size by successive halving.
    Tune(TuneArgs),
    /// Error cases, annotation flags and the comparison table.
    Report(ReportArgs),
    /// Write a synthetic document corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long = "in", value_name = "DOCS")]
    pub input: PathBuf,
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Oracle,
    Remote,
}

#[derive(Debug, Default, Args)]
pub struct PipelineArgs {
    #[arg(long, value_name = "VERSION")]
    pub prompt_version: Option<PromptVersion>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Chat-completions URL for the remote backend.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Directory of prompt templates replacing the built-in ones.
    #[arg(long, value_name = "DIR")]
    pub templates: Option<PathBuf>,
    /// Replay responses from this cassette file.
    #[arg(long, value_name = "FILE")]
    pub cassette: Option<PathBuf>,
    /// Record backend responses into the cassette instead of replaying.
    #[arg(long, requires = "cassette")]
    pub record: bool,
    /// Disable the single repair retry on non-compliant output.
    #[arg(long)]
    pub no_repair: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long = "in", value_name = "CSV")]
    pub input: PathBuf,
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    /// Run description for `evaluate` and `report`.
    #[arg(long, value_name = "JSON")]
    pub meta: Option<PathBuf>,
    /// Resume file; completed batches are skipped on a rerun.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "CSV")]
    pub gold: PathBuf,
    /// Prediction CSV written by `run`.
    #[arg(long = "in", value_name = "CSV")]
    pub input: PathBuf,
    /// Report JSON.
    #[arg(long, value_name = "JSON")]
    pub out: PathBuf,
    #[arg(long, value_name = "MD")]
    pub markdown: Option<PathBuf>,
    #[arg(long, value_name = "JSON")]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long = "in", value_name = "CSV")]
    pub input: PathBuf,
    /// Audit JSON.
    #[arg(long, value_name = "JSON")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum)]
    pub delta_mode: Option<DeltaModeArg>,
    /// Candidate batch sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// Documents per stage, comma separated; `all` for the whole corpus.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<Budget>>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DeltaModeArg {
    Absolute,
    Relative,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_name = "CSV")]
    pub gold: PathBuf,
    #[arg(long = "in", value_name = "CSV")]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_name = "JSON")]
    pub meta: Option<PathBuf>,
    /// Further report JSON files to include in the comparison table.
    #[arg(long, value_name = "JSON")]
    pub compare: Vec<PathBuf>,
    /// Batch size used for the section-fragmentation check.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "DOCS")]
    pub out: PathBuf,
    #[arg(long, default_value_t = synthetic::BUNDLED_DOCUMENTS)]
    pub docs: usize,
    #[arg(long, default_value_t = synthetic::BUNDLED_SEED)]
    pub seed: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub run: RunSection,
    pub backend: BackendSection,
    pub remote: RemoteConfig,
    pub tuner: TunerSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub prompt_version: Option<PromptVersion>,
    pub k: Option<usize>,
    pub parallelism: Option<usize>,
    pub model: Option<String>,
    pub max_output_tokens: Option<u32>,
    pub templates: Option<PathBuf>,
    pub repair: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: Option<BackendKind>,
    pub cassette: Option<PathBuf>,
    pub record: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum BudgetSpec {
    Count(usize),
    Name(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerSection {
    pub candidate_ks: Option<Vec<usize>>,
    pub delta: Option<f64>,
    pub delta_mode: Option<DeltaMode>,
    pub stage_budgets: Option<Vec<BudgetSpec>>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = read_text(path)?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub const DEFAULT_K: usize = 15;
pub const DEFAULT_VERSION: PromptVersion = PromptVersion::V4;

/// Pipeline settings after defaults, file, environment and flags are merged.
pub struct ResolvedPipeline {
    pub settings: RunSettings,
    pub kind: BackendKind,
    pub remote: RemoteConfig,
    pub cassette: Option<PathBuf>,
    pub record: bool,
}

pub fn resolve_pipeline(cfg: &FileConfig, args: &PipelineArgs, k: Option<usize>) -> Result<ResolvedPipeline, CliError> {
    let version = args.prompt_version.or(cfg.run.prompt_version).unwrap_or(DEFAULT_VERSION);
    let k = k.or(cfg.run.k).unwrap_or(DEFAULT_K);
    let mut settings = RunSettings::new(version, k);
    settings.parallelism = args.parallelism.or(cfg.run.parallelism).unwrap_or(1);
    if let Some(t) = cfg.run.max_output_tokens {
        settings.max_output_tokens = t;
    }
    settings.retry.repair = !args.no_repair && cfg.run.repair.unwrap_or(true);
    if let Some(dir) = args.templates.as_ref().or(cfg.run.templates.as_ref()) {
        settings.templates = TemplateSet::load(dir).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let kind = args.backend.or(cfg.backend.kind).unwrap_or(BackendKind::Oracle);
    settings.model = match (args.model.clone().or(cfg.run.model.clone()), kind) {
        (Some(m), _) => m,
        (None, BackendKind::Oracle) => "oracle".into(),
        (None, BackendKind::Remote) => return Err(CliError::Config("the remote backend needs a model name".into())),
    };
    let mut remote = cfg.remote.clone().with_env();
    if let Some(e) = &args.endpoint {
        remote.endpoint = e.clone();
    }
    Ok(ResolvedPipeline {
        settings,
        kind,
        remote,
        cassette: args.cassette.clone().or(cfg.backend.cassette.clone()),
        record: args.record || cfg.backend.record.unwrap_or(false),
    })
}

pub fn build_backend(p: &ResolvedPipeline) -> Result<Box<dyn Backend>, CliError> {
    let live = || -> Result<Box<dyn Backend>, CliError> {
        Ok(match p.kind {
            BackendKind::Oracle => Box::new(OracleBackend::new()),
            BackendKind::Remote => {
                if p.remote.endpoint.is_empty() {
                    return Err(CliError::Config(format!("no endpoint; pass --endpoint or set {ENDPOINT_ENV}")));
                }
                Box::new(RemoteBackend::new(p.remote.clone())?)
            }
        })
    };
    Ok(match (&p.cassette, p.record) {
        (None, _) => live()?,
        (Some(path), false) => Box::new(CassetteBackend::<OracleBackend>::replay(path)?),
        (Some(path), true) => Box::new(CassetteBackend::record(path, live()?)?),
    })
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_bytes(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Io { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(path, bytes).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn to_json<S: serde::Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializes");
    s.push('\n');
    s
}

fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Parse { path: path.to_path_buf(), detail: e.to_string() })
}

fn read_meta(path: Option<&Path>) -> Result<RunMetadata, CliError> {
    match path {
        Some(p) => read_json(p),
        None => Ok(RunMetadata { backend: "unspecified".into(), ..RunMetadata::default() }),
    }
}

fn run_metadata(p: &ResolvedPipeline, backend: &dyn Backend, stats: pipeline::PayloadStats) -> RunMetadata {
    RunMetadata {
        backend: backend.id().to_string(),
        model: p.settings.model.clone(),
        prompt_version: Some(p.settings.version),
        k: Some(p.settings.k),
        payloads: Some(stats),
        ..RunMetadata::default()
    }
}

fn preprocess(args: &PreprocessArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let docs = corpus::load_documents(&args.input)?;
    let records = corpus::preprocess(&docs)?;
    corpus::write_records(&records, &args.out)?;
    let rate = if records.is_empty() { 0.0 } else { corpus::actionable_rate(&records)? };
    let _ = writeln!(out, "{} documents, {} sentences, actionable rate {rate:.4}", docs.len(), records.len());
    Ok(())
}

fn run_pipeline(cfg: &FileConfig, args: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut resolved = resolve_pipeline(cfg, &args.pipeline, args.k)?;
    resolved.settings.checkpoint = args.checkpoint.clone();
    let backend = build_backend(&resolved)?;
    let gold = corpus::read_records(&args.input)?;
    let run = pipeline::run_corpus(&gold, &backend, &resolved.settings)?;
    pipeline::write_predictions(&run.predictions, &args.out)?;
    if let Some(meta) = &args.meta {
        let mut m = run_metadata(&resolved, backend.as_ref(), run.stats);
        m.sentences = gold.len();
        m.documents = gold.iter().map(|r| r.doc_id.as_str()).collect::<BTreeSet<_>>().len();
        write_bytes(meta, to_json(&m))?;
    }
    let _ = writeln!(
        out,
        "{} predictions from {} batches ({} resumed), {} payload failures, {} repairs",
        run.predictions.len(),
        run.batches,
        run.resumed,
        run.stats.payload_failures(),
        run.stats.repairs
    );
    Ok(())
}

fn evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let gold = corpus::read_records(&args.gold)?;
    let predictions = pipeline::read_predictions(&args.input)?;
    let report: EvaluationReport = metrics::evaluate(&gold, &predictions, read_meta(args.meta.as_deref())?)?;
    write_bytes(&args.out, to_json(&report))?;
    if let Some(md) = &args.markdown {
        write_bytes(md, metrics::render_markdown(&report))?;
    }
    let _ = writeln!(
        out,
        "stage 1 macro F1 {:.3}, stage 2 macro F1 {:.3}, compliance {:.3}",
        report.stage1.macro_f1, report.stage2.macro_f1, report.compliance.overall.rate
    );
    Ok(())
}

fn tuner_config(cfg: &TunerSection, args: &TuneArgs) -> Result<TunerConfig, CliError> {
    let mut c = TunerConfig::default();
    if let Some(ks) = args.ks.clone().or(cfg.candidate_ks.clone()) {
        c.candidate_ks = ks;
    }
    if let Some(d) = args.delta.or(cfg.delta) {
        c.delta = d;
    }
    c.delta_mode = match args.delta_mode {
        Some(DeltaModeArg::Absolute) => DeltaMode::Absolute,
        Some(DeltaModeArg::Relative) => DeltaMode::Relative,
        None => cfg.delta_mode.unwrap_or(c.delta_mode),
    };
    if let Some(b) = &args.budgets {
        c.stage_budgets = b.clone();
    } else if let Some(specs) = &cfg.stage_budgets {
        c.stage_budgets = specs
            .iter()
            .map(|s| match s {
                BudgetSpec::Count(n) => Ok(Budget::Docs(*n)),
                BudgetSpec::Name(n) => n.parse().map_err(CliError::Config),
            })
            .collect::<Result<_, _>>()?;
    }
    c.seed = args.seed.or(cfg.seed).unwrap_or(c.seed);
    Ok(c)
}

fn tune(cfg: &FileConfig, args: &TuneArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = tuner_config(&cfg.tuner, args)?;
    let resolved = resolve_pipeline(cfg, &args.pipeline, None)?;
    let backend = build_backend(&resolved)?;
    let gold = corpus::read_records(&args.input)?;
    let documents: Vec<String> = gold.iter().map(|r| r.doc_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let evaluator = PipelineEvaluator { gold: &gold, backend: backend.as_ref(), settings: resolved.settings.clone() };
    let audit: TuningAudit = tuner::tune(&documents, &evaluator, &config)?;
    write_bytes(&args.out, to_json(&audit))?;
    match (audit.selected_k, &audit.failure) {
        (Some(k), _) => {
            let _ = writeln!(out, "selected k={k} after {} stage(s)", audit.stages.len());
            Ok(())
        }
        (None, failure) => Err(CliError::TuningFailed(failure.clone().unwrap_or_else(|| "no candidate selected".into()))),
    }
}

fn write_flags(path: &Path, flags: &[report::FlaggedSentence]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    report::write_flags_to(flags, &mut buf).expect("in-memory write");
    write_bytes(path, buf)
}

fn report(args: &ReportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut gold: Vec<SentenceRecord> = corpus::read_records(&args.gold)?;
    corpus::canonicalize(&mut gold)?;
    let predictions = pipeline::read_predictions(&args.input)?;
    let meta = read_meta(args.meta.as_deref())?;
    let k = args.k.or(meta.k);
    let evaluation: EvaluationReport = metrics::evaluate(&gold, &predictions, meta)?;

    let flags = report::flag_inconsistencies(&gold, k);
    let mut cases = report::collect_errors(&gold, &predictions)?;
    report::attach_flags(&mut cases, &flags);
    let summary = ErrorSummary::from_cases(&cases);
    let mismatches = summary.reconcile(&evaluation);
    if !mismatches.is_empty() {
        return Err(CliError::Reconciliation(mismatches));
    }

    let mut runs = vec![evaluation];
    for path in &args.compare {
        runs.push(read_json(path)?);
    }
    let table = report::render_comparison(&runs);

    let dir = &args.out;
    let mut errors = Vec::new();
    report::write_errors_to(&cases, &mut errors).expect("in-memory write");
    write_bytes(&dir.join("errors.csv"), errors)?;
    write_bytes(&dir.join("errors.md"), summary.render_markdown())?;
    write_flags(&dir.join("flags.csv"), &flags)?;
    write_bytes(&dir.join("comparison.md"), table.to_markdown())?;
    write_bytes(&dir.join("comparison.csv"), table.to_csv())?;
    let _ = writeln!(out, "{} error cases, {} flagged sentences, {} measured run(s)", cases.len(), flags.len(), runs.len());
    Ok(())
}

fn synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let docs = synthetic::generate(args.docs, args.seed);
    write_bytes(&args.out, corpus::documents_to_jsonl(&docs))?;
    let _ = writeln!(out, "{} documents", docs.len());
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match &cli.command {
        Command::Preprocess(a) => preprocess(a, out),
        Command::Run(a) => run_pipeline(&cfg, a, out),
        Command::Evaluate(a) => evaluate(a, out),
        Command::Tune(a) => tune(&cfg, a, out),
        Command::Report(a) => report(a, out),
        Command::Synth(a) => synth(a, out),
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the exit status. Diagnostics go to `err`.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => exit::OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
