//! Two-phase contradiction detection.
//!
//! Phase 1 scans a whole policy (numbered segment listing) with a
//! contradiction prompt and parses the model's `FINDING` lines into
//! candidates. Phase 2 re-prompts the model once per plausible candidate
//! with a focused verification task; only candidates the model confirms in
//! isolation survive.
//!
//! Candidates are validated mechanically before any verification call:
//! segment indices must exist and differ, the claimed type must be
//! registered, and each quote must actually occur in its segment. A quote
//! that instead matches one of the prompt's own in-context examples is
//! flagged as an echo. Failing candidates are kept (flagged
//! `needs_review`), never silently dropped, but they are not sent to
//! phase 2.

use crate::corpus::Corpus;
use crate::gateway::{Gateway, GatewayError};
use crate::prompt::{render, render_verification, PromptTemplate, RenderError, TaskKind};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

/// Segments per phase-1 window. Policies longer than this are scanned in
/// overlapping windows so that prompts stay within model context limits.
pub const WINDOW_SIZE: usize = 40;
/// Window start stride; `WINDOW_SIZE - WINDOW_STEP` segments overlap.
pub const WINDOW_STEP: usize = 30;

#[derive(Debug, thiserror::Error)]
pub enum ContradictionError {
    #[error("template {template_id:?} is a {found:?} template; contradiction detection requires a contradiction template")]
    TemplateKindMismatch { template_id: String, found: TaskKind },
    #[error("contradiction type {0:?} is already registered")]
    DuplicateType(String),
    #[error("policy {0:?} is not in the corpus")]
    UnknownPolicy(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("artifact {file}: {detail}")]
    Artifact { file: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A named contradiction type with its prose definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContradictionType {
    pub name: String,
    pub definition: String,
}

/// The set of contradiction types a scan recognizes. Matching is
/// case-insensitive and whitespace-insensitive, so a model answering
/// `type=logical contradiction` still hits `Logical Contradiction`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeRegistry {
    types: Vec<ContradictionType>,
}

impl TypeRegistry {
    pub fn empty() -> TypeRegistry {
        TypeRegistry { types: Vec::new() }
    }

    /// The built-in types every contradiction prompt defines.
    pub fn builtin() -> TypeRegistry {
        let mut registry = TypeRegistry::empty();
        for (name, definition) in crate::prompt::contradiction_types() {
            registry
                .register(ContradictionType {
                    name: name.to_string(),
                    definition: definition.to_string(),
                })
                .expect("built-in types are distinct");
        }
        registry
    }

    pub fn register(&mut self, t: ContradictionType) -> Result<(), ContradictionError> {
        if self.get(&t.name).is_some() {
            return Err(ContradictionError::DuplicateType(t.name));
        }
        self.types.push(t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ContradictionType> {
        let wanted = normalize_name(name);
        self.types.iter().find(|t| normalize_name(&t.name) == wanted)
    }

    pub fn types(&self) -> &[ContradictionType] {
        &self.types
    }
}

fn normalize_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// One phase-1 finding, canonicalized so `segment_a <= segment_b`.
/// `contradiction_type` is a registered type name, a claimed but unknown
/// name (flagged), or `"unspecified"` when the finding named no type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContradictionCandidate {
    pub policy_id: String,
    pub segment_a: usize,
    pub segment_b: usize,
    pub contradiction_type: String,
    pub quote_a: String,
    pub quote_b: String,
    pub rationale: String,
    pub phase1_prompt_id: String,
    pub needs_review: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_reason: Option<String>,
}

/// Phase-2 decision for one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// The model answered `CONFIRMED`.
    Confirmed,
    /// The model answered `NOT A CONTRADICTION`.
    Rejected,
    /// No verification was attempted (flagged candidate), or the answer
    /// contained both marker phrases, neither, or the call failed.
    NeedsReview,
}

/// Phase-2 outcome for one candidate. `rationale` is the model's verbatim
/// verification answer (empty when verification never ran).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub decision: Verdict,
    pub rationale: String,
    pub phase2_prompt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Phase-1 outcome for one policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyScan {
    pub policy_id: String,
    pub segments: usize,
    pub windows: usize,
    pub candidates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything a two-phase run produced. `verdicts` is index-aligned with
/// `candidates`; `confirmed` holds indices into both.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoPhaseReport {
    pub phase1_template_id: String,
    pub phase2_template_id: String,
    pub policies: Vec<PolicyScan>,
    pub candidates: Vec<ContradictionCandidate>,
    pub verdicts: Vec<VerdictRecord>,
    pub confirmed: Vec<usize>,
}

/// Parse the phase-1 response for one policy into candidates.
///
/// A reported line is expected to look like:
///
/// ```text
/// FINDING | seg=2 | seg=5 | type=Logical Contradiction | quote_a="..." | quote_b="..." | because ...
/// ```
///
/// Parsing is tolerant of spacing and field order; lines starting with
/// `FINDING` that cannot be parsed become flagged candidates rather than
/// being dropped.
pub fn parse_findings(
    response_text: &str,
    policy_id: &str,
    segments: &[&str],
    registry: &TypeRegistry,
    template: &PromptTemplate,
) -> Vec<ContradictionCandidate> {
    let example_spans = example_spans(template);
    let mut seen: BTreeSet<(usize, usize, String)> = BTreeSet::new();
    let mut candidates = Vec::new();
    for line in response_text.lines() {
        if !finding_line_re().is_match(line) {
            continue;
        }
        let candidate = parse_finding_line(
            line,
            policy_id,
            segments,
            registry,
            &example_spans,
            &template.template_id,
        );
        if !candidate.needs_review {
            let key = (
                candidate.segment_a,
                candidate.segment_b,
                normalize_name(&candidate.contradiction_type),
            );
            if !seen.insert(key) {
                continue;
            }
        }
        candidates.push(candidate);
    }
    candidates
}

fn finding_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*FINDING\b").expect("valid regex"))
}

fn parse_finding_line(
    line: &str,
    policy_id: &str,
    segments: &[&str],
    registry: &TypeRegistry,
    example_spans: &[String],
    phase1_prompt_id: &str,
) -> ContradictionCandidate {
    static SEG_RE: OnceLock<Regex> = OnceLock::new();
    static TYPE_RE: OnceLock<Regex> = OnceLock::new();
    static QUOTE_A_RE: OnceLock<Regex> = OnceLock::new();
    static QUOTE_B_RE: OnceLock<Regex> = OnceLock::new();
    static BECAUSE_RE: OnceLock<Regex> = OnceLock::new();
    let seg_re = SEG_RE.get_or_init(|| Regex::new(r"(?i)seg\s*=\s*(\d+)").expect("valid regex"));
    let type_re =
        TYPE_RE.get_or_init(|| Regex::new(r"(?i)type\s*=\s*([^|]+)").expect("valid regex"));
    let quote_a_re = QUOTE_A_RE
        .get_or_init(|| Regex::new(r#"(?i)quote_a\s*=\s*"([^"]*)""#).expect("valid regex"));
    let quote_b_re = QUOTE_B_RE
        .get_or_init(|| Regex::new(r#"(?i)quote_b\s*=\s*"([^"]*)""#).expect("valid regex"));
    let because_re =
        BECAUSE_RE.get_or_init(|| Regex::new(r"(?i)\bbecause\b\s*(.*)$").expect("valid regex"));

    let flagged = |reason: &str| ContradictionCandidate {
        policy_id: policy_id.to_string(),
        segment_a: 0,
        segment_b: 0,
        contradiction_type: String::new(),
        quote_a: String::new(),
        quote_b: String::new(),
        rationale: line.trim().to_string(),
        phase1_prompt_id: phase1_prompt_id.to_string(),
        needs_review: true,
        review_reason: Some(reason.to_string()),
    };

    let seg_indices: Vec<usize> = seg_re
        .captures_iter(line)
        .filter_map(|c| c[1].parse().ok())
        .collect();
    let contradiction_type = type_re.captures(line).map(|c| c[1].trim().to_string());
    let quote_a = quote_a_re.captures(line).map(|c| c[1].trim().to_string());
    let quote_b = quote_b_re.captures(line).map(|c| c[1].trim().to_string());
    let rationale = because_re
        .captures(line)
        .map(|c| c[1].trim().to_string())
        .unwrap_or_default();

    let (mut a, mut b, mut quote_a, mut quote_b) = match (seg_indices.as_slice(), quote_a, quote_b)
    {
        ([a, b, ..], Some(qa), Some(qb)) if !qa.is_empty() && !qb.is_empty() => (*a, *b, qa, qb),
        _ => return flagged("unparseable_finding"),
    };
    // A finding that names no type is still a finding; it just cannot be
    // auto-verified.
    let (type_name, type_missing) = match contradiction_type.filter(|t| !t.is_empty()) {
        Some(t) => (t, false),
        None => ("unspecified".to_string(), true),
    };

    let mut candidate = ContradictionCandidate {
        policy_id: policy_id.to_string(),
        segment_a: a,
        segment_b: b,
        contradiction_type: type_name,
        quote_a: String::new(),
        quote_b: String::new(),
        rationale,
        phase1_prompt_id: phase1_prompt_id.to_string(),
        needs_review: false,
        review_reason: None,
    };

    if a >= segments.len() || b >= segments.len() {
        candidate.quote_a = quote_a;
        candidate.quote_b = quote_b;
        candidate.needs_review = true;
        candidate.review_reason = Some("segment_out_of_range".into());
        return candidate;
    }
    if a == b {
        candidate.quote_a = quote_a;
        candidate.quote_b = quote_b;
        candidate.needs_review = true;
        candidate.review_reason = Some("same_segment".into());
        return candidate;
    }
    if a > b {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut quote_a, &mut quote_b);
        candidate.segment_a = a;
        candidate.segment_b = b;
    }
    candidate.quote_a = quote_a;
    candidate.quote_b = quote_b;

    if type_missing {
        candidate.needs_review = true;
        candidate.review_reason = Some("missing_type".into());
        return candidate;
    }
    if registry.get(&candidate.contradiction_type).is_none() {
        candidate.needs_review = true;
        candidate.review_reason = Some("unknown_type".into());
        return candidate;
    }

    for (quote, index) in [(collapse(&candidate.quote_a), a), (collapse(&candidate.quote_b), b)] {
        if !collapse(segments[index]).contains(&quote) {
            let echoed = example_spans.iter().any(|e| e.contains(&quote));
            candidate.needs_review = true;
            candidate.review_reason =
                Some(if echoed { "example_echo" } else { "quote_not_in_segment" }.into());
            return candidate;
        }
    }

    candidate
}

/// All in-context example texts of a template, whitespace-collapsed. Used
/// to spot models that quote the prompt instead of the policy.
fn example_spans(template: &PromptTemplate) -> Vec<String> {
    let mut spans: Vec<String> = template
        .categories
        .iter()
        .flat_map(|c| c.examples.iter())
        .map(|e| collapse(e))
        .collect();
    if let Some(cot) = &template.cot {
        spans.extend(cot.worked_examples.iter().map(|e| collapse(&e.statement)));
    }
    spans
}

fn collapse(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The numbered listing that phase 1 sends as the user payload.
pub fn number_segments(segments: &[&str], start: usize, end: usize) -> String {
    segments[start..end]
        .iter()
        .enumerate()
        .map(|(offset, text)| format!("[{}] {}", start + offset, text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The window spans `(start, end)` phase 1 scans for a policy of `len`
/// segments: one window when the policy fits, overlapping windows otherwise.
pub fn window_spans(len: usize) -> Vec<(usize, usize)> {
    if len <= WINDOW_SIZE {
        return vec![(0, len)];
    }
    let mut spans = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + WINDOW_SIZE).min(len);
        spans.push((start, end));
        if end == len {
            return spans;
        }
        start += WINDOW_STEP;
    }
}

/// Phase 1 for one policy: scan every window and collect deduplicated
/// candidates.
pub fn detect_candidates(
    policy_id: &str,
    segments: &[&str],
    template: &PromptTemplate,
    gateway: &Gateway,
    registry: &TypeRegistry,
) -> Result<Vec<ContradictionCandidate>, ContradictionError> {
    if template.task_kind != TaskKind::Contradiction {
        return Err(ContradictionError::TemplateKindMismatch {
            template_id: template.template_id.clone(),
            found: template.task_kind,
        });
    }
    let mut seen: BTreeSet<(usize, usize, String)> = BTreeSet::new();
    let mut candidates = Vec::new();
    for (start, end) in window_spans(segments.len()) {
        if start >= end {
            continue;
        }
        let payload = number_segments(segments, start, end);
        let prompt = render(template, &payload)?;
        let exchange = gateway.complete(&prompt)?;
        for candidate in
            parse_findings(&exchange.response_text, policy_id, segments, registry, template)
        {
            if !candidate.needs_review {
                let key = (
                    candidate.segment_a,
                    candidate.segment_b,
                    normalize_name(&candidate.contradiction_type),
                );
                if !seen.insert(key) {
                    continue;
                }
            }
            candidates.push(candidate);
        }
    }
    Ok(candidates)
}

/// The focused payload phase 2 sends for one candidate.
pub fn verification_payload(candidate: &ContradictionCandidate) -> String {
    format!(
        "Statement A [segment {}]: \"{}\"\nStatement B [segment {}]: \"{}\"\nClaimed contradiction type: {}",
        candidate.segment_a,
        candidate.quote_a,
        candidate.segment_b,
        candidate.quote_b,
        candidate.contradiction_type
    )
}

/// Classify a phase-2 answer. Exactly one of the marker phrases must be
/// present for a definite verdict.
pub fn parse_verdict(response_text: &str) -> Verdict {
    let upper = response_text.to_uppercase();
    let rejected = upper.contains("NOT A CONTRADICTION");
    let confirmed = upper.replace("NOT A CONTRADICTION", "").contains("CONFIRMED");
    match (confirmed, rejected) {
        (true, false) => Verdict::Confirmed,
        (false, true) => Verdict::Rejected,
        _ => Verdict::NeedsReview,
    }
}

/// Phase 2 for one candidate.
pub fn verify_candidate(
    candidate: &ContradictionCandidate,
    template: &PromptTemplate,
    gateway: &Gateway,
) -> Result<VerdictRecord, ContradictionError> {
    let prompt = render_verification(template, &verification_payload(candidate))?;
    let exchange = gateway.complete(&prompt)?;
    Ok(VerdictRecord {
        decision: parse_verdict(&exchange.response_text),
        rationale: exchange.response_text,
        phase2_prompt_id: template.template_id.clone(),
        error: None,
    })
}

/// Run both phases over a corpus: phase 1 with `phase1` over every policy
/// in `policy_ids` (or the whole corpus when `None`), phase 2 with
/// `phase2` over every clean candidate. Gateway failures are scoped: a
/// failing phase-1 scan marks the policy, a failing verification marks the
/// candidate; neither aborts the run.
pub fn run_two_phase(
    corpus: &Corpus,
    policy_ids: Option<&[String]>,
    phase1: &PromptTemplate,
    phase2: &PromptTemplate,
    gateway: &Gateway,
    registry: &TypeRegistry,
) -> Result<TwoPhaseReport, ContradictionError> {
    for template in [phase1, phase2] {
        if template.task_kind != TaskKind::Contradiction {
            return Err(ContradictionError::TemplateKindMismatch {
                template_id: template.template_id.clone(),
                found: template.task_kind,
            });
        }
    }
    let scope: Vec<&String> = match policy_ids {
        None => corpus.policy_ids().iter().collect(),
        Some(wanted) => {
            for policy_id in wanted {
                if !corpus.policy_ids().contains(policy_id) {
                    return Err(ContradictionError::UnknownPolicy(policy_id.clone()));
                }
            }
            wanted.iter().collect()
        }
    };

    let mut policies = Vec::new();
    let mut candidates = Vec::new();
    for policy_id in scope {
        let segments_owned = corpus.segments_of(policy_id);
        let segments: Vec<&str> =
            segments_owned.iter().map(|s| s.text.as_str()).collect();
        let mut scan = PolicyScan {
            policy_id: policy_id.clone(),
            segments: segments.len(),
            windows: window_spans(segments.len()).len(),
            candidates: 0,
            error: None,
        };
        match detect_candidates(policy_id, &segments, phase1, gateway, registry) {
            Ok(found) => {
                scan.candidates = found.len();
                candidates.extend(found);
            }
            Err(ContradictionError::Gateway(e)) => scan.error = Some(e.to_string()),
            Err(other) => return Err(other),
        }
        policies.push(scan);
    }

    let mut verdicts = Vec::with_capacity(candidates.len());
    for candidate in &candidates {
        if candidate.needs_review {
            verdicts.push(VerdictRecord {
                decision: Verdict::NeedsReview,
                rationale: String::new(),
                phase2_prompt_id: phase2.template_id.clone(),
                error: None,
            });
            continue;
        }
        match verify_candidate(candidate, phase2, gateway) {
            Ok(record) => verdicts.push(record),
            Err(ContradictionError::Gateway(e)) => verdicts.push(VerdictRecord {
                decision: Verdict::NeedsReview,
                rationale: String::new(),
                phase2_prompt_id: phase2.template_id.clone(),
                error: Some(e.to_string()),
            }),
            Err(other) => return Err(other),
        }
    }
    debug_assert_eq!(verdicts.len(), candidates.len());

    let confirmed = verdicts
        .iter()
        .enumerate()
        .filter(|(_, v)| v.decision == Verdict::Confirmed)
        .map(|(i, _)| i)
        .collect();

    Ok(TwoPhaseReport {
        phase1_template_id: phase1.template_id.clone(),
        phase2_template_id: phase2.template_id.clone(),
        policies,
        candidates,
        verdicts,
        confirmed,
    })
}

/// Flat serialization of one candidate plus its verdict, for
/// `contradictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    #[serde(flatten)]
    pub candidate: ContradictionCandidate,
    pub decision: Verdict,
    pub decision_rationale: String,
    pub phase2_prompt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_error: Option<String>,
}

impl TwoPhaseReport {
    /// Persist `contradictions.jsonl` (every candidate with its verdict)
    /// and `confirmed.csv` (confirmed pairs only) into a directory.
    pub fn write(&self, dir: &Path) -> Result<(), ContradictionError> {
        std::fs::create_dir_all(dir)?;
        let jsonl_path = dir.join("contradictions.jsonl");
        let mut jsonl = String::new();
        for (candidate, verdict) in self.candidates.iter().zip(&self.verdicts) {
            let outcome = CandidateOutcome {
                candidate: candidate.clone(),
                decision: verdict.decision,
                decision_rationale: verdict.rationale.clone(),
                phase2_prompt_id: verdict.phase2_prompt_id.clone(),
                decision_error: verdict.error.clone(),
            };
            let line = serde_json::to_string(&outcome).map_err(|e| {
                ContradictionError::Artifact {
                    file: jsonl_path.display().to_string(),
                    detail: e.to_string(),
                }
            })?;
            jsonl.push_str(&line);
            jsonl.push('\n');
        }
        std::fs::write(&jsonl_path, jsonl)?;

        let csv_path = dir.join("confirmed.csv");
        let mut writer = csv::Writer::from_path(&csv_path).map_err(|e| {
            ContradictionError::Artifact {
                file: csv_path.display().to_string(),
                detail: e.to_string(),
            }
        })?;
        let csv_err = |e: csv::Error| ContradictionError::Artifact {
            file: csv_path.display().to_string(),
            detail: e.to_string(),
        };
        writer
            .write_record(["policy_id", "seg_a", "seg_b", "type", "quote_a", "quote_b", "rationale"])
            .map_err(csv_err)?;
        for &i in &self.confirmed {
            let c = &self.candidates[i];
            writer
                .write_record([
                    c.policy_id.as_str(),
                    &c.segment_a.to_string(),
                    &c.segment_b.to_string(),
                    c.contradiction_type.as_str(),
                    c.quote_a.as_str(),
                    c.quote_b.as_str(),
                    c.rationale.as_str(),
                ])
                .map_err(csv_err)?;
        }
        writer.flush()?;
        Ok(())
    }
}
