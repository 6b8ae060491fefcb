//! Annotation runs: drive a prompt over a corpus through a gateway,
//! normalize the answers, and persist everything needed to re-score or
//! resume the run later.
//!
//! A run directory contains:
//!
//! * `manifest.json` — run id, corpus hash, template id, model config, and
//!   keyword table version: enough to re-execute the run exactly.
//! * `predictions.jsonl` — one record per scoped segment, sorted by
//!   `(policy_id, segment_index)`, free of timestamps so that reruns are
//!   byte-identical.
//! * `review.csv` — segments whose answers need human review.
//! * `corpus.json` — canonical snapshot of the corpus that was annotated.
//! * `events.jsonl` — machine-readable progress log (timestamped).
//!
//! Failures of individual segments are recorded in their prediction records
//! (`error` field) without aborting the run. Rerunning the same run id
//! resumes: records whose request hash still matches are kept, everything
//! else (including previously failed segments) is fetched again.

use crate::corpus::{Corpus, PolicySegment};
use crate::gateway::{Gateway, GatewayError};
use crate::label::CategoryLabel;
use crate::normalize::{normalize_annotation, KeywordTable};
use crate::prompt::{render, PromptTemplate, RenderError, TaskKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

/// One scored segment of an annotation run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub policy_id: String,
    pub segment_index: usize,
    pub predicted: BTreeSet<CategoryLabel>,
    pub needs_review: bool,
    pub raw_response: String,
    pub request_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// The run manifest: every input pinned by hash or by value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub corpus_source: String,
    pub corpus_hash: String,
    pub template_id: String,
    pub model: crate::gateway::ModelConfig,
    pub keyword_table_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<Vec<String>>,
    pub segments_total: usize,
    pub errors: usize,
    pub needs_review: usize,
    pub started_utc: String,
    pub finished_utc: String,
}

/// A completed (or loaded) run.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRun {
    pub manifest: RunManifest,
    pub predictions: Vec<PredictionRecord>,
}

/// One line of `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunEvent {
    pub timestamp: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AnnotateOptions {
    /// Name of the run directory created under `output_dir`.
    pub run_id: String,
    pub output_dir: PathBuf,
    /// Restrict the run to these policies (default: whole corpus).
    pub scope: Option<Vec<String>>,
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("template {template_id:?} is a {found:?} template; annotation requires an annotation template")]
    TemplateKindMismatch { template_id: String, found: TaskKind },
    #[error("scope references unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("scope selects no segments")]
    EmptyScope,
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("run directory error: {0}")]
    Io(#[from] std::io::Error),
    #[error("run artifact {file}: {detail}")]
    Artifact { file: String, detail: String },
    #[error("no run found at {0}")]
    RunNotFound(PathBuf),
}

/// Annotate one segment: render, complete, normalize. Gateway errors are
/// propagated; [`annotate_corpus`] catches them per segment instead.
pub fn annotate_segment(
    segment: &PolicySegment,
    template: &PromptTemplate,
    gateway: &Gateway,
    table: &KeywordTable,
) -> Result<PredictionRecord, AnnotateError> {
    if template.task_kind != TaskKind::Annotation {
        return Err(AnnotateError::TemplateKindMismatch {
            template_id: template.template_id.clone(),
            found: template.task_kind,
        });
    }
    let prompt = render(template, &segment.text)?;
    let exchange = gateway.complete(&prompt)?;
    let normalized = normalize_annotation(&exchange.response_text, table);
    Ok(PredictionRecord {
        policy_id: segment.policy_id.clone(),
        segment_index: segment.segment_index,
        predicted: normalized.labels,
        needs_review: normalized.needs_review,
        raw_response: exchange.response_text,
        request_hash: exchange.request_hash,
        error: None,
    })
}

/// Run a template over (a scope of) a corpus and persist the run directory.
/// `on_event` observes progress (the same events are appended to
/// `events.jsonl`).
pub fn annotate_corpus(
    corpus: &Corpus,
    corpus_source: &str,
    template: &PromptTemplate,
    gateway: &Gateway,
    table: &KeywordTable,
    options: &AnnotateOptions,
    on_event: impl Fn(&RunEvent) + Sync,
) -> Result<AnnotationRun, AnnotateError> {
    if template.task_kind != TaskKind::Annotation {
        return Err(AnnotateError::TemplateKindMismatch {
            template_id: template.template_id.clone(),
            found: template.task_kind,
        });
    }
    let targets = scoped_segments(corpus, options.scope.as_deref())?;

    let run_dir = options.output_dir.join(&options.run_id);
    std::fs::create_dir_all(&run_dir)?;
    let started_utc = crate::gateway::now_rfc3339();

    // Recover any records from an interrupted or previous run with the same
    // id. A record is only reused when its request hash still matches the
    // current template, model, and segment text, and it did not fail.
    let predictions_path = run_dir.join("predictions.jsonl");
    let mut recovered: BTreeMap<(String, usize), PredictionRecord> = BTreeMap::new();
    if predictions_path.exists() {
        for record in read_predictions(&predictions_path)? {
            recovered.insert((record.policy_id.clone(), record.segment_index), record);
        }
    }

    let events = Mutex::new(EventLog::open(&run_dir.join("events.jsonl"))?);
    let emit = |kind: &str, segment: Option<&PolicySegment>, detail: Option<String>| {
        let event = RunEvent {
            timestamp: crate::gateway::now_rfc3339(),
            kind: kind.to_string(),
            policy_id: segment.map(|s| s.policy_id.clone()),
            segment_index: segment.map(|s| s.segment_index),
            detail,
        };
        on_event(&event);
        if let Ok(mut log) = events.lock() {
            let _ = log.append(&event);
        }
    };
    emit("run_started", None, Some(format!("{} segments", targets.len())));

    let expected_hashes: Vec<String> = targets
        .iter()
        .map(|segment| {
            render(template, &segment.text).map(|prompt| {
                crate::gateway::ExchangeRequest {
                    model_name: gateway.config().model_name.clone(),
                    temperature: gateway.config().temperature,
                    max_tokens: gateway.config().max_tokens,
                    system_text: prompt.system_text,
                    user_text: prompt.user_text,
                }
                .hash()
            })
        })
        .collect::<Result<_, _>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(gateway.config().parallelism.max(1))
        .build()
        .map_err(|e| AnnotateError::Artifact {
            file: "thread pool".into(),
            detail: e.to_string(),
        })?;

    let records: Vec<PredictionRecord> = pool.install(|| {
        targets
            .par_iter()
            .zip(expected_hashes.par_iter())
            .map(|(segment, expected_hash)| {
                let key = (segment.policy_id.clone(), segment.segment_index);
                if let Some(previous) = recovered.get(&key) {
                    if previous.error.is_none() && &previous.request_hash == expected_hash {
                        emit("segment_reused", Some(segment), None);
                        return previous.clone();
                    }
                }
                match annotate_segment(segment, template, gateway, table) {
                    Ok(record) => {
                        emit("segment_done", Some(segment), None);
                        record
                    }
                    Err(error) => {
                        let class = error_class(&error);
                        emit("segment_failed", Some(segment), Some(error.to_string()));
                        PredictionRecord {
                            policy_id: segment.policy_id.clone(),
                            segment_index: segment.segment_index,
                            predicted: BTreeSet::new(),
                            needs_review: true,
                            raw_response: String::new(),
                            request_hash: expected_hash.clone(),
                            error: Some(class),
                        }
                    }
                }
            })
            .collect()
    });

    let mut records = records;
    records.sort_by(|a, b| {
        (&a.policy_id, a.segment_index).cmp(&(&b.policy_id, b.segment_index))
    });

    write_predictions(&predictions_path, &records)?;
    write_review_csv(&run_dir.join("review.csv"), &records)?;
    let snapshot_path = run_dir.join("corpus.json");
    let snapshot = corpus.to_canonical_json();
    std::fs::write(&snapshot_path, &snapshot)?;

    let errors = records.iter().filter(|r| r.error.is_some()).count();
    let needs_review = records.iter().filter(|r| r.needs_review).count();
    let manifest = RunManifest {
        run_id: options.run_id.clone(),
        corpus_source: corpus_source.to_string(),
        corpus_hash: corpus.content_hash(),
        template_id: template.template_id.clone(),
        model: gateway.config().clone(),
        keyword_table_version: table.version.clone(),
        scope: options.scope.clone(),
        segments_total: records.len(),
        errors,
        needs_review,
        started_utc,
        finished_utc: crate::gateway::now_rfc3339(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).map_err(|e| {
        AnnotateError::Artifact { file: "manifest.json".into(), detail: e.to_string() }
    })?;
    std::fs::write(run_dir.join("manifest.json"), manifest_json + "\n")?;
    emit("run_finished", None, Some(format!("{errors} errors")));

    Ok(AnnotationRun { manifest, predictions: records })
}

impl AnnotationRun {
    /// Load a persisted run directory.
    pub fn load(run_dir: &Path) -> Result<AnnotationRun, AnnotateError> {
        let manifest_path = run_dir.join("manifest.json");
        if !manifest_path.is_file() {
            return Err(AnnotateError::RunNotFound(run_dir.to_path_buf()));
        }
        let manifest: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(&manifest_path)?).map_err(|e| {
                AnnotateError::Artifact {
                    file: manifest_path.display().to_string(),
                    detail: e.to_string(),
                }
            })?;
        let predictions = read_predictions(&run_dir.join("predictions.jsonl"))?;
        Ok(AnnotationRun { manifest, predictions })
    }

    /// The corpus snapshot stored with the run.
    pub fn load_corpus_snapshot(run_dir: &Path) -> Result<Corpus, AnnotateError> {
        let path = run_dir.join("corpus.json");
        if !path.is_file() {
            return Err(AnnotateError::RunNotFound(run_dir.to_path_buf()));
        }
        Corpus::load(&path, crate::corpus::CorpusFormat::Json).map_err(|e| {
            AnnotateError::Artifact { file: path.display().to_string(), detail: e.to_string() }
        })
    }
}

fn scoped_segments<'c>(
    corpus: &'c Corpus,
    scope: Option<&[String]>,
) -> Result<Vec<&'c PolicySegment>, AnnotateError> {
    match scope {
        None => Ok(corpus.segments().iter().collect()),
        Some(policy_ids) => {
            let known: BTreeSet<&str> =
                corpus.policy_ids().iter().map(String::as_str).collect();
            let mut wanted = BTreeSet::new();
            for policy_id in policy_ids {
                if !known.contains(policy_id.as_str()) {
                    return Err(AnnotateError::UnknownPolicy(policy_id.clone()));
                }
                wanted.insert(policy_id.as_str());
            }
            let segments: Vec<&PolicySegment> = corpus
                .segments()
                .iter()
                .filter(|s| wanted.contains(s.policy_id.as_str()))
                .collect();
            if segments.is_empty() {
                return Err(AnnotateError::EmptyScope);
            }
            Ok(segments)
        }
    }
}

fn error_class(error: &AnnotateError) -> String {
    match error {
        AnnotateError::Gateway(GatewayError::Auth { .. }) => "auth".into(),
        AnnotateError::Gateway(GatewayError::RateLimited { .. }) => "rate_limited".into(),
        AnnotateError::Gateway(GatewayError::Timeout { .. }) => "timeout".into(),
        AnnotateError::Gateway(GatewayError::CacheMiss { .. }) => "cache_miss".into(),
        AnnotateError::Gateway(GatewayError::Protocol { .. }) => "protocol".into(),
        AnnotateError::Gateway(_) => "gateway".into(),
        AnnotateError::Render(_) => "render".into(),
        _ => "internal".into(),
    }
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, AnnotateError> {
    let mut records = Vec::new();
    if !path.exists() {
        return Ok(records);
    }
    let text = std::fs::read_to_string(path)?;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord =
            serde_json::from_str(line).map_err(|e| AnnotateError::Artifact {
                file: format!("{}:{}", path.display(), i + 1),
                detail: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<(), AnnotateError> {
    let mut out = String::new();
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| AnnotateError::Artifact {
            file: path.display().to_string(),
            detail: e.to_string(),
        })?;
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_review_csv(path: &Path, records: &[PredictionRecord]) -> Result<(), AnnotateError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| AnnotateError::Artifact {
        file: path.display().to_string(),
        detail: e.to_string(),
    })?;
    writer
        .write_record(["policy_id", "segment_index", "raw_response", "matched_labels", "needs_review_reason"])
        .map_err(csv_error(path))?;
    for record in records.iter().filter(|r| r.needs_review) {
        let reason = match &record.error {
            Some(class) => format!("error: {class}"),
            None if record.predicted.is_empty() => "no_match".to_string(),
            None => "ambiguous_overlap".to_string(),
        };
        let labels = record
            .predicted
            .iter()
            .map(|l| l.display_name())
            .collect::<Vec<_>>()
            .join("; ");
        writer
            .write_record([
                record.policy_id.as_str(),
                &record.segment_index.to_string(),
                record.raw_response.as_str(),
                &labels,
                &reason,
            ])
            .map_err(csv_error(path))?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> AnnotateError + '_ {
    move |e| AnnotateError::Artifact {
        file: path.display().to_string(),
        detail: e.to_string(),
    }
}

struct EventLog {
    file: std::fs::File,
}

impl EventLog {
    fn open(path: &Path) -> Result<EventLog, std::io::Error> {
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EventLog { file })
    }

    fn append(&mut self, event: &RunEvent) -> Result<(), std::io::Error> {
        let line = serde_json::to_string(event).expect("event serializes");
        writeln!(self.file, "{line}")
    }
}
