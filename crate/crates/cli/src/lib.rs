//! Operator commands behind the `lle` binary.

use std::io::Write;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lle_core::extract::llm::LlmConfigError;
use lle_core::extract::{
    extract_all, ExtractError, Extractor, LlmConfig, LlmExtractor, MockConfigError, MockExtractor, RecordError,
};
use lle_core::kb::{
    lint_kb, load_kb, resolve_stack, snapshot, to_canonical_json, KbError, KnowledgeBase, LintFinding, Registry,
    RegistryError, Severity, SnapshotError, StackError, StackRef, DEFAULT_EXHAUSTIVE_LIMIT,
};
use lle_core::session::{
    compute_stats, evaluate_and_explain, load_session_dir, EvaluationError, RecommendationResult, Stage, StatsError,
    StoreError, TemplateExplainer,
};
use lle_core::{AnswerSet, PatientRecord, SegmentedRecord, ToolRegistry};
use lle_server::{ExtractorKind, ServeError, ServerConfig};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "lle", version, about = "Guideline knowledge bases and rule evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Author and register knowledge bases.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Extract factor answers for a record and evaluate the stacked rules.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Adjustment rates over a directory of session logs.
    Metrics(MetricsArgs),
}

#[derive(Debug, Subcommand)]
pub enum KbCommand {
    /// Check a KB document and print its findings.
    Lint {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Lint, snapshot and register a KB document; prints the content hash.
    Snapshot {
        file: PathBuf,
        #[arg(long)]
        registry: PathBuf,
    },
    /// List registered artifacts.
    List {
        #[arg(long)]
        registry: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Mock,
    Llm,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub record: PathBuf,
    /// Stack entries, lowest priority first (`ns@version` or `ns`).
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub stack: Vec<StackRef>,
    /// Mock extractor pattern file.
    #[arg(long)]
    pub extractor: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Backend::Mock)]
    pub backend: Backend,
    /// Directory registry to resolve the stack from.
    #[arg(long, conflicts_with = "kb", required_unless_present = "kb")]
    pub registry: Option<PathBuf>,
    /// KB documents to load into a throwaway registry instead.
    #[arg(long, num_args = 1..)]
    pub kb: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// JSON config file; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub sessions: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub bind: Option<IpAddr>,
    #[arg(long)]
    pub extractor: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    #[arg(long)]
    pub token: Option<String>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub dir: PathBuf,
    #[arg(long, value_enum, default_value_t = StageArg::Step1)]
    pub stage: StageArg,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Step1,
    Step2,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        match s {
            StageArg::Step1 => Stage::Step1,
            StageArg::Step2 => Stage::Step2,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {}: {source}", .path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", .path.display())]
    Kb {
        path: PathBuf,
        #[source]
        source: KbError,
    },
    #[error("{0} lint error(s)")]
    LintErrors(usize),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    MockConfig(#[from] MockConfigError),
    #[error(transparent)]
    LlmConfig(#[from] LlmConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("write failed: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    /// 1 runtime failure, 2 usage, 3 invalid knowledge base.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Kb { .. } | CliError::LintErrors(_) => 3,
            _ => 1,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn read_kb(path: &Path, strict: bool) -> Result<KnowledgeBase, CliError> {
    let bytes = read(path)?;
    let parsed = if strict {
        load_kb(&bytes)
    } else {
        KnowledgeBase::from_json(&bytes)
    };
    parsed.map_err(|source| CliError::Kb {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    writeln!(out, "{}", to_canonical_json(value))?;
    Ok(())
}

fn error_count(findings: &[LintFinding]) -> usize {
    findings.iter().filter(|f| f.is_error()).count()
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Kb(KbCommand::Lint { file, format }) => kb_lint(&file, format, out),
        Command::Kb(KbCommand::Snapshot { file, registry }) => kb_snapshot(&file, &registry, out, err),
        Command::Kb(KbCommand::List { registry }) => {
            let registry = Registry::open(registry)?;
            for entry in registry.list() {
                writeln!(out, "{}@{}\t{}", entry.namespace, entry.version, entry.content_hash)?;
            }
            Ok(())
        }
        Command::Eval(args) => eval(&args, out),
        Command::Serve(args) => serve(args, err),
        Command::Metrics(args) => metrics(&args, out),
    }
}

pub fn kb_lint(file: &Path, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let kb = read_kb(file, false)?;
    let findings = lint_kb(&kb, DEFAULT_EXHAUSTIVE_LIMIT);
    match format {
        Format::Json => write_json(out, &findings)?,
        Format::Table => write_findings(out, &findings)?,
    }
    match error_count(&findings) {
        0 => Ok(()),
        n => Err(CliError::LintErrors(n)),
    }
}

fn write_findings(out: &mut dyn Write, findings: &[LintFinding]) -> std::io::Result<()> {
    if findings.is_empty() {
        return writeln!(out, "no findings");
    }
    let subject_w = findings.iter().map(|f| f.subject.len()).max().unwrap_or(0).max(7);
    writeln!(out, "{:<8} {:<18} {:<subject_w$} MESSAGE", "SEVERITY", "CODE", "SUBJECT")?;
    for f in findings {
        let severity = match f.severity {
            Severity::Error => "ERROR",
            Severity::Warning => "WARNING",
        };
        writeln!(
            out,
            "{:<8} {:<18} {:<subject_w$} {}",
            severity,
            f.code.as_str(),
            f.subject,
            f.message
        )?;
    }
    Ok(())
}

fn kb_snapshot(file: &Path, registry: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let kb = read_kb(file, true)?;
    let artifact = match snapshot(&kb) {
        Ok(a) => a,
        Err(SnapshotError::LintBlocked(findings)) => {
            write_findings(err, &findings)?;
            return Err(CliError::LintErrors(error_count(&findings)));
        }
    };
    let warnings = lint_kb(artifact.kb(), DEFAULT_EXHAUSTIVE_LIMIT);
    if !warnings.is_empty() {
        write_findings(err, &warnings)?;
    }
    let registry = Registry::open(registry)?;
    let artifact = registry.register(artifact)?;
    writeln!(out, "{}", artifact.content_hash())?;
    Ok(())
}

fn build_extractor(backend: Backend, config: Option<&Path>) -> Result<Arc<dyn Extractor>, CliError> {
    match backend {
        Backend::Mock => {
            let path = config.ok_or_else(|| CliError::Usage("the mock backend needs --extractor <FILE>".into()))?;
            Ok(Arc::new(MockExtractor::from_json(&read(path)?)?))
        }
        Backend::Llm => Ok(Arc::new(LlmExtractor::new(LlmConfig::from_env()?)?)),
    }
}

/// Everything `eval` prints in JSON mode.
#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub patient_id: String,
    pub stack: Vec<String>,
    pub extractor_id: String,
    pub overrides: Vec<lle_core::kb::Override>,
    pub warnings: Vec<LintFinding>,
    pub answers: AnswerSet,
    pub results: Vec<RecommendationResult>,
}

pub fn evaluate_record(args: &EvalArgs) -> Result<EvalReport, CliError> {
    let extractor = build_extractor(args.backend, args.extractor.as_deref())?;
    let registry = match &args.registry {
        Some(dir) => {
            if !dir.is_dir() {
                return Err(CliError::Usage(format!("registry {} does not exist", dir.display())));
            }
            Registry::open(dir)?
        }
        None => {
            let registry = Registry::in_memory();
            for path in &args.kb {
                let kb = read_kb(path, true)?;
                let artifact = snapshot(&kb).map_err(|SnapshotError::LintBlocked(findings)| {
                    CliError::LintErrors(error_count(&findings))
                })?;
                registry.register(artifact)?;
            }
            registry
        }
    };
    let ekb = resolve_stack(&registry, &args.stack)?;
    let record = PatientRecord::from_json(&read(&args.record)?)?;
    let record = SegmentedRecord::new(record)?;
    let answers = extract_all(&ekb, &record, extractor.as_ref(), &ToolRegistry::date_tools())?;
    let results = evaluate_and_explain(&ekb, &answers, &TemplateExplainer)?;
    Ok(EvalReport {
        patient_id: record.record.patient_id.clone(),
        stack: ekb.stack_labels(),
        extractor_id: extractor.id().to_string(),
        overrides: ekb.overrides.clone(),
        warnings: ekb.warnings.clone(),
        answers,
        results,
    })
}

fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let report = evaluate_record(args)?;
    match args.format {
        Format::Json => write_json(out, &report),
        Format::Table => write_plan(out, &report).map_err(Into::into),
    }
}

fn write_plan(out: &mut dyn Write, report: &EvalReport) -> std::io::Result<()> {
    writeln!(out, "patient {}  stack {}", report.patient_id, report.stack.join(" < "))?;
    for o in &report.overrides {
        writeln!(out, "override {}: {} replaces {}", o.recommendation_id, o.winning, o.losing)?;
    }
    writeln!(out)?;
    let id_w = report.results.iter().map(|r| r.recommendation_id.len()).max().unwrap_or(0).max(2);
    writeln!(out, "{:<13} {:<id_w$} TITLE", "STATUS", "ID")?;
    for r in &report.results {
        let flag = if r.indeterminate_completion { "*" } else { "" };
        writeln!(
            out,
            "{:<13} {:<id_w$} {}{}",
            r.status.as_str(),
            r.recommendation_id,
            r.title,
            flag
        )?;
        for line in r.explanation.lines().skip(1) {
            writeln!(out, "{:<13} {:<id_w$}   {}", "", "", line)?;
        }
    }
    writeln!(out)?;
    let name_w = report.answers.answers.keys().map(String::len).max().unwrap_or(0).max(6);
    writeln!(out, "{:<name_w$} ANSWER", "FACTOR")?;
    for (name, answer) in &report.answers.answers {
        writeln!(out, "{:<name_w$} {}", name, answer.value)?;
    }
    Ok(())
}

fn serve(args: ServeArgs, err: &mut dyn Write) -> Result<(), CliError> {
    let mut config = match (&args.config, &args.registry, &args.sessions) {
        (Some(path), _, _) => ServerConfig::from_file(path).map_err(ServeError::from)?,
        (None, Some(registry), Some(sessions)) => ServerConfig::new(registry, sessions),
        _ => return Err(CliError::Usage("serve needs --config or both --registry and --sessions".into())),
    };
    if let Some(dir) = args.registry {
        config.registry_dir = dir;
    }
    if let Some(dir) = args.sessions {
        config.session_dir = dir;
    }
    if let Some(port) = args.port {
        config.port = port;
    }
    if let Some(bind) = args.bind {
        config.bind = bind;
    }
    if let Some(path) = args.extractor {
        config.mock_config = Some(path);
    }
    match args.backend {
        Some(Backend::Mock) => config.extractor = ExtractorKind::Mock,
        Some(Backend::Llm) => config.extractor = ExtractorKind::Llm,
        None => {}
    }
    if args.token.is_some() {
        config.bearer_token = args.token;
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(lle_server::serve(
        config,
        |addr| {
            let _ = writeln!(err, "listening on {addr}");
        },
        lle_server::shutdown_signal(),
    ))?;
    Ok(())
}

fn metrics(args: &MetricsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let sessions = load_session_dir(&args.dir)?;
    let stats = compute_stats(&sessions, args.stage.into())?;
    match args.format {
        Format::Json => write_json(out, &stats),
        Format::Table => {
            let stage = match args.stage {
                StageArg::Step1 => "step1",
                StageArg::Step2 => "step2",
            };
            writeln!(out, "{stage}: {} sessions, {stats}", sessions.len())?;
            Ok(())
        }
    }
}
