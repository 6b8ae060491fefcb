//! Command-line interface.
//!
//! Subcommands: `ingest`, `prompts list`, `prompts render`, `annotate`,
//! `evaluate`, `contradict`, and `report compare`. Machine-readable
//! summaries go to stdout (one JSON document); progress goes to stderr.
//!
//! Exit codes: `0` success, `2` usage error, `3` data error (corpus,
//! config, templates, scoring scope), `4` backend error (auth, rate
//! limits, timeouts, cache misses), `5` internal error. Failures print a
//! single JSON line to stderr:
//! `{"level":"error","class":"data","detail":"..."}`.

use crate::annotate::{annotate_corpus, AnnotateError, AnnotateOptions, AnnotationRun};
use crate::contradiction::{
    run_two_phase, ContradictionError, ContradictionType, TypeRegistry,
};
use crate::corpus::{Corpus, CorpusError, CorpusFormat};
use crate::gateway::{Gateway, GatewayError};
use crate::metrics::{
    annotator_agreement, bootstrap_ci, score_records, verify_corpus_hash, BootstrapConfig,
    MetricsError, ScoreOptions,
};
use crate::normalize::KeywordTable;
use crate::prompt::{render, PromptCatalog, PromptTemplate, RenderError};
use crate::report::{compare_runs, MetricsReport, ReportError};
use crate::runcfg::{RunConfig, RunConfigError};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Parser)]
#[command(
    name = "papel",
    version,
    about = "Prompt-driven privacy-policy annotation, evaluation, and contradiction detection"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate a corpus, print its summary, optionally export it.
    Ingest(IngestArgs),
    /// Inspect the prompt catalog.
    Prompts(PromptsArgs),
    /// Annotate a corpus segment by segment.
    Annotate(AnnotateArgs),
    /// Score a finished annotation run against the gold standard.
    Evaluate(EvaluateArgs),
    /// Run two-phase contradiction detection over a corpus.
    Contradict(ContradictArgs),
    /// Work with evaluation reports.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Corpus file (json) or directory (opp115).
    #[arg(long)]
    root: PathBuf,
    /// Corpus layout: `json` or `opp115`.
    #[arg(long, default_value = "json")]
    format: String,
    /// Write the corpus back out in canonical JSON form.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also report per-annotator agreement with the majority gold standard.
    #[arg(long)]
    agreement: bool,
    /// Score the catch-all Other category too (agreement only).
    #[arg(long)]
    include_other: bool,
}

#[derive(Debug, Args)]
struct PromptsArgs {
    #[command(subcommand)]
    command: PromptsCommand,
}

#[derive(Debug, Subcommand)]
enum PromptsCommand {
    /// List every template in the catalog.
    List(PromptsListArgs),
    /// Render one template, with or without a payload.
    Render(PromptsRenderArgs),
}

#[derive(Debug, Args)]
struct PromptsListArgs {
    /// Custom catalog file (defaults to the built-in catalog).
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Emit the full templates as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct PromptsRenderArgs {
    /// Template id, e.g. `annotation.II`, or a bare numeral like `IV`.
    #[arg(long, visible_alias = "id")]
    template: String,
    /// Custom catalog file (defaults to the built-in catalog).
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Payload text (a policy segment or a numbered segment listing).
    #[arg(long, conflicts_with = "payload_file")]
    payload: Option<String>,
    /// Read the payload from a file.
    #[arg(long)]
    payload_file: Option<PathBuf>,
    /// Emit the rendered prompt as JSON (system text, user text, hash).
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct AnnotateArgs {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Name of the run directory created under the configured output_dir.
    #[arg(long)]
    run_id: String,
    /// Restrict the run to these policy ids (comma separated), overriding
    /// the config's scope.
    #[arg(long, value_delimiter = ',')]
    policies: Vec<String>,
    /// Suppress per-segment progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Run directory written by `annotate`.
    #[arg(long, visible_alias = "run")]
    run_dir: PathBuf,
    /// Score against this corpus instead of the run's snapshot. Its
    /// content hash must match the one recorded in the run manifest.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Corpus layout of --corpus: `json` or `opp115`.
    #[arg(long, default_value = "json")]
    format: String,
    /// Score the catch-all Other category too.
    #[arg(long)]
    include_other: bool,
    /// Skip segments with an empty effective gold set entirely.
    #[arg(long)]
    exclude_empty_gold: bool,
    /// Compute bootstrap confidence intervals.
    #[arg(long)]
    bootstrap: bool,
    #[arg(long, default_value_t = 1000)]
    n_subsets: usize,
    #[arg(long, default_value_t = 50)]
    subset_size: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Where to write the report (default: <run-dir>/report.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Additionally emit `report.csv` and `report.md` next to the report.
    #[arg(long)]
    emit_tables: bool,
}

#[derive(Debug, Args)]
struct ContradictArgs {
    /// Run configuration file (template_id must name a contradiction
    /// template).
    #[arg(long)]
    config: PathBuf,
    /// Name of the output directory created under the configured
    /// output_dir.
    #[arg(long)]
    run_id: String,
    /// Detection template for the whole-policy scan, overriding the
    /// config's template_id.
    #[arg(long)]
    phase1: Option<String>,
    /// Verification template for the per-candidate re-prompt (defaults to
    /// the phase-1 template).
    #[arg(long)]
    phase2: Option<String>,
    /// Restrict the run to these policy ids (comma separated), overriding
    /// the config's scope.
    #[arg(long, value_delimiter = ',')]
    policies: Vec<String>,
    /// JSON file with additional contradiction types:
    /// `[{"name": "...", "definition": "..."}]`.
    #[arg(long)]
    types: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(subcommand)]
    command: ReportCommand,
}

#[derive(Debug, Subcommand)]
enum ReportCommand {
    /// Put several run reports side by side.
    Compare(ReportCompareArgs),
}

#[derive(Debug, Args)]
struct ReportCompareArgs {
    /// Two or more report.json files.
    #[arg(long, visible_alias = "runs", num_args = 1.., required = true, value_delimiter = ',')]
    reports: Vec<PathBuf>,
    /// Output format: `markdown`, `csv`, or `json`.
    #[arg(long, default_value = "markdown")]
    emit: String,
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Everything that can go wrong, grouped by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Backend(String),
    Internal(String),
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Backend(_) => "backend",
            CliError::Internal(_) => "internal",
        }
    }

    pub fn detail(&self) -> &str {
        match self {
            CliError::Usage(d) | CliError::Data(d) | CliError::Backend(d) | CliError::Internal(d) => d,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Internal(_) => 5,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> CliError {
        match e {
            CorpusError::Io(inner) => CliError::Internal(inner.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> CliError {
        match e {
            GatewayError::Config(_) => CliError::Data(e.to_string()),
            GatewayError::Io(inner) => CliError::Internal(inner.to_string()),
            other => CliError::Backend(other.to_string()),
        }
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<AnnotateError> for CliError {
    fn from(e: AnnotateError) -> CliError {
        match e {
            AnnotateError::Gateway(inner) => inner.into(),
            AnnotateError::Io(inner) => CliError::Internal(inner.to_string()),
            AnnotateError::Artifact { .. } => CliError::Internal(e.to_string()),
            // Keep a machine-greppable keyword in front of the prose so
            // callers can distinguish a missing run from other data errors.
            AnnotateError::RunNotFound(_) => {
                CliError::Data(format!("RunNotFound: {e}"))
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<ContradictionError> for CliError {
    fn from(e: ContradictionError) -> CliError {
        match e {
            ContradictionError::Gateway(inner) => inner.into(),
            ContradictionError::Io(inner) => CliError::Internal(inner.to_string()),
            ContradictionError::Artifact { .. } => CliError::Internal(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> CliError {
        match e {
            ReportError::Io(inner) => CliError::Internal(inner.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<RunConfigError> for CliError {
    fn from(e: RunConfigError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Internal(e.to_string())
    }
}

/// Parse arguments, run, and translate the outcome into an exit code.
/// Usage errors detected by clap itself also exit with code 2.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(error) => {
            let line = serde_json::json!({
                "level": "error",
                "class": error.class(),
                "detail": error.detail(),
            });
            eprintln!("{line}");
            error.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Prompts(args) => match args.command {
            PromptsCommand::List(args) => cmd_prompts_list(args),
            PromptsCommand::Render(args) => cmd_prompts_render(args),
        },
        Command::Annotate(args) => cmd_annotate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Contradict(args) => cmd_contradict(args),
        Command::Report(args) => match args.command {
            ReportCommand::Compare(args) => cmd_report_compare(args),
        },
    }
}

fn parse_format(text: &str) -> Result<CorpusFormat, CliError> {
    CorpusFormat::from_str(text).map_err(CliError::Usage)
}

fn load_catalog(path: Option<&Path>) -> Result<PromptCatalog, CliError> {
    match path {
        None => Ok(PromptCatalog::builtin()),
        Some(path) => {
            PromptCatalog::load(path).map_err(|e| CliError::Data(e.to_string()))
        }
    }
}

fn lookup_template<'c>(
    catalog: &'c PromptCatalog,
    template_id: &str,
) -> Result<&'c PromptTemplate, CliError> {
    // Accept bare numerals for the built-in prompts.
    if let Ok(predefined) = crate::prompt::PredefinedPrompt::from_str(template_id) {
        if let Some(template) = catalog.get(predefined.id()) {
            return Ok(template);
        }
    }
    catalog.get(template_id).ok_or_else(|| {
        CliError::Data(format!("template {template_id:?} is not in the catalog"))
    })
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("summary serializes"));
}

fn cmd_ingest(args: IngestArgs) -> Result<(), CliError> {
    let format = parse_format(&args.format)?;
    let corpus = Corpus::load(&args.root, format)?;
    if let Some(out) = &args.out {
        std::fs::write(out, corpus.to_canonical_json())?;
    }
    let summary = corpus.summary();
    let agreement = args
        .agreement
        .then(|| annotator_agreement(&corpus, ScoreOptions {
            include_other: args.include_other,
            ..ScoreOptions::default()
        }));
    print_json(&serde_json::json!({
        "summary": summary,
        "content_hash": corpus.content_hash(),
        "agreement": agreement,
    }));
    Ok(())
}

fn cmd_prompts_list(args: PromptsListArgs) -> Result<(), CliError> {
    let catalog = load_catalog(args.catalog.as_deref())?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&catalog.templates().collect::<Vec<_>>())
                .expect("catalog serializes")
        );
        return Ok(());
    }
    for template in catalog.templates() {
        println!(
            "{}\t{:?}\t{:?}\t{}",
            template.template_id,
            template.task_kind,
            template.shot_level,
            if template.reconstructed { "reconstructed" } else { "verbatim" }
        );
    }
    Ok(())
}

fn cmd_prompts_render(args: PromptsRenderArgs) -> Result<(), CliError> {
    let catalog = load_catalog(args.catalog.as_deref())?;
    let template = lookup_template(&catalog, &args.template)?;
    let payload = match (&args.payload, &args.payload_file) {
        (Some(text), _) => Some(text.clone()),
        (None, Some(path)) => Some(std::fs::read_to_string(path)?),
        (None, None) => None,
    };
    match payload {
        None => {
            // System text only; it does not depend on the payload.
            let rendered = render(template, "(payload placeholder)")?;
            println!("{}", rendered.system_text);
        }
        Some(payload) => {
            let rendered = render(template, &payload)?;
            if args.json {
                print_json(&rendered);
            } else {
                println!("{}", rendered.system_text);
                println!();
                println!("{}", rendered.user_text);
            }
        }
    }
    Ok(())
}

fn load_keyword_table(path: Option<&Path>) -> Result<KeywordTable, CliError> {
    match path {
        None => Ok(KeywordTable::builtin().clone()),
        Some(path) => KeywordTable::load(path).map_err(|e| CliError::Data(e.to_string())),
    }
}

fn cmd_annotate(args: AnnotateArgs) -> Result<(), CliError> {
    let config = RunConfig::load(&args.config)?;
    let corpus = Corpus::load(&config.corpus.root, config.corpus.format)?;
    let catalog = load_catalog(config.catalog.as_deref())?;
    let template = lookup_template(&catalog, &config.template_id)?;
    let table = load_keyword_table(config.keyword_table.as_deref())?;
    let gateway = Gateway::new(config.model.clone())?;
    let scope = if args.policies.is_empty() {
        config.scope.clone()
    } else {
        Some(args.policies.clone())
    };
    let options = AnnotateOptions {
        run_id: args.run_id.clone(),
        output_dir: config.output_dir.clone(),
        scope,
    };
    let quiet = args.quiet;
    let run = annotate_corpus(
        &corpus,
        &config.corpus.root.display().to_string(),
        template,
        &gateway,
        &table,
        &options,
        |event| {
            if !quiet {
                eprintln!(
                    "{}",
                    serde_json::to_string(event).expect("event serializes")
                );
            }
        },
    )?;
    if run.manifest.segments_total > 0 && run.manifest.errors == run.manifest.segments_total {
        return Err(CliError::Backend(format!(
            "all {} segments failed; see {}",
            run.manifest.errors,
            config.output_dir.join(&args.run_id).join("predictions.jsonl").display()
        )));
    }
    print_json(&serde_json::json!({
        "run_id": run.manifest.run_id,
        "run_dir": config.output_dir.join(&args.run_id),
        "segments": run.manifest.segments_total,
        "errors": run.manifest.errors,
        "needs_review": run.manifest.needs_review,
    }));
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let run = AnnotationRun::load(&args.run_dir)?;
    let corpus = match &args.corpus {
        None => AnnotationRun::load_corpus_snapshot(&args.run_dir)?,
        Some(path) => {
            let format = parse_format(&args.format)?;
            let corpus = Corpus::load(path, format)?;
            verify_corpus_hash(&run.manifest.corpus_hash, &corpus)?;
            corpus
        }
    };
    let options = ScoreOptions {
        include_other: args.include_other,
        exclude_empty_gold: args.exclude_empty_gold,
    };
    let evaluation = score_records(&run.predictions, &corpus, options)?;
    let boot = if args.bootstrap {
        Some(bootstrap_ci(
            &run.predictions,
            &corpus,
            BootstrapConfig {
                n_subsets: args.n_subsets,
                subset_size: args.subset_size,
                seed: args.seed,
            },
            options,
        )?)
    } else {
        None
    };
    let report = MetricsReport::from_parts(&run.manifest, &evaluation, boot.as_ref());
    let out = args.out.clone().unwrap_or_else(|| args.run_dir.join("report.json"));
    report.save(&out)?;
    if args.emit_tables {
        std::fs::write(out.with_extension("csv"), report.to_csv())?;
        std::fs::write(out.with_extension("md"), report.to_markdown())?;
    }
    print_json(&serde_json::json!({
        "run_id": report.run_id,
        "report": out,
        "micro_f1": report.micro.f1,
        "segments_scored": report.scope.segments_scored,
        "excluded_errors": report.scope.excluded_errors,
    }));
    Ok(())
}

fn load_extra_types(path: &Path) -> Result<Vec<ContradictionType>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Data(format!("cannot read types file {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Data(format!("invalid types file {}: {e}", path.display()))
    })
}

fn cmd_contradict(args: ContradictArgs) -> Result<(), CliError> {
    let config = RunConfig::load(&args.config)?;
    let corpus = Corpus::load(&config.corpus.root, config.corpus.format)?;
    let catalog = load_catalog(config.catalog.as_deref())?;
    let phase1_id = args.phase1.as_deref().unwrap_or(&config.template_id);
    let phase2_id = args.phase2.as_deref().unwrap_or(phase1_id);
    let phase1 = lookup_template(&catalog, phase1_id)?;
    let phase2 = lookup_template(&catalog, phase2_id)?;
    let gateway = Gateway::new(config.model.clone())?;
    let mut registry = TypeRegistry::builtin();
    if let Some(path) = &args.types {
        for t in load_extra_types(path)? {
            registry.register(t)?;
        }
    }
    let scope = if args.policies.is_empty() {
        config.scope.clone()
    } else {
        Some(args.policies.clone())
    };
    let report =
        run_two_phase(&corpus, scope.as_deref(), phase1, phase2, &gateway, &registry)?;
    let out_dir = config.output_dir.join(&args.run_id);
    report.write(&out_dir)?;
    let failed_policies: Vec<&str> = report
        .policies
        .iter()
        .filter(|p| p.error.is_some())
        .map(|p| p.policy_id.as_str())
        .collect();
    if !report.policies.is_empty() && failed_policies.len() == report.policies.len() {
        return Err(CliError::Backend(format!(
            "phase 1 failed for every policy: {}",
            failed_policies.join(", ")
        )));
    }
    print_json(&serde_json::json!({
        "run_dir": out_dir,
        "policies": report.policies.len(),
        "policies_failed": failed_policies,
        "candidates": report.candidates.len(),
        "confirmed": report.confirmed.len(),
    }));
    Ok(())
}

fn cmd_report_compare(args: ReportCompareArgs) -> Result<(), CliError> {
    let mut loaded = Vec::new();
    for path in &args.reports {
        loaded.push(MetricsReport::load(path)?);
    }
    let refs: Vec<&MetricsReport> = loaded.iter().collect();
    let table = compare_runs(&refs)?;
    let rendered = match args.emit.as_str() {
        "markdown" | "md" => table.to_markdown(),
        "csv" => table.to_csv(),
        "json" => table.to_json(),
        other => {
            return Err(CliError::Usage(format!(
                "unknown emit format {other:?} (expected markdown, csv, or json)"
            )))
        }
    };
    match &args.out {
        Some(path) => std::fs::write(path, rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}
