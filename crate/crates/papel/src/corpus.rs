//! Corpus model: segmented policies, per-annotator label records, and the
//! majority-vote gold standard derived from them.
//!
//! Two on-disk layouts are supported:
//!
//! * `json` — a single canonical JSON document (see [`CorpusDocument`]).
//! * `opp115` — a directory with `policies/<policy_id>.txt` (segments
//!   separated by the literal token `|||`) and
//!   `annotations/<policy_id>.csv` (header-less rows of
//!   `annotator_id,policy_id,segment_index,category`, one category per row).
//!
//! Ingestion is strict: unknown categories, dangling segment references,
//! duplicate annotations, and malformed rows are hard errors. The gold label
//! set of a segment contains exactly the labels assigned by at least
//! [`MAJORITY_QUORUM`] distinct annotators.

use crate::hashing;
use crate::label::CategoryLabel;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

/// Number of distinct annotators that must assign a label for it to enter
/// the gold set.
pub const MAJORITY_QUORUM: usize = 2;

/// One paragraph-length segment of a policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySegment {
    pub policy_id: String,
    pub segment_index: usize,
    pub text: String,
}

/// One annotator's label set for one segment. `labels` is always non-empty;
/// an annotator who saw nothing in a segment simply has no record for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub annotator_id: String,
    pub policy_id: String,
    pub segment_index: usize,
    pub labels: BTreeSet<CategoryLabel>,
}

/// Supported on-disk corpus layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Json,
    Opp115,
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(CorpusFormat::Json),
            "opp115" => Ok(CorpusFormat::Opp115),
            other => Err(format!("unknown corpus format {other:?} (expected json or opp115)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("missing file or directory: {0}")]
    MissingFile(PathBuf),
    #[error("{file}:{line}: {reason}")]
    MalformedRecord { file: String, line: usize, reason: String },
    #[error("unknown category: {0:?}")]
    UnknownCategory(String),
    #[error("duplicate annotation: annotator {annotator_id:?} already labeled {policy_id:?} segment {segment_index}")]
    DuplicateAnnotation { annotator_id: String, policy_id: String, segment_index: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Serialized form of a corpus: the canonical JSON document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub policies: Vec<PolicyDocument>,
    pub annotations: Vec<AnnotationRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDocument {
    pub policy_id: String,
    pub segments: Vec<String>,
}

/// An ingested, validated corpus with its derived gold standard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    segments: Vec<PolicySegment>,
    annotations: Vec<AnnotationRecord>,
    policy_ids: Vec<String>,
    annotator_ids: BTreeSet<String>,
    gold: BTreeMap<(String, usize), BTreeSet<CategoryLabel>>,
}

/// Headline counts reported by `ingest`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorpusSummary {
    pub policies: usize,
    pub segments: usize,
    pub annotators: usize,
    pub annotations: usize,
}

impl fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "policies={} segments={} annotators={} annotations={}",
            self.policies, self.segments, self.annotators, self.annotations
        )
    }
}

/// Majority vote over per-annotator label sets: a label is kept when at
/// least `quorum` of the given sets contain it. Each set counts once per
/// label regardless of its size, and the vote is insensitive to the order of
/// the sets.
pub fn majority_vote(
    votes: &[BTreeSet<CategoryLabel>],
    quorum: usize,
) -> BTreeSet<CategoryLabel> {
    let mut counts: BTreeMap<CategoryLabel, usize> = BTreeMap::new();
    for vote in votes {
        for &label in vote {
            *counts.entry(label).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .filter(|&(_, n)| n >= quorum)
        .map(|(label, _)| label)
        .collect()
}

impl Corpus {
    /// Build a corpus from a parsed document, validating every invariant.
    /// `source` names the document in error messages; "line" numbers for
    /// semantic errors are 1-based positions in the respective arrays.
    pub fn from_document(doc: &CorpusDocument, source: &str) -> Result<Corpus, CorpusError> {
        let mut segments = Vec::new();
        let mut seen_policies = BTreeSet::new();
        for (pos, policy) in doc.policies.iter().enumerate() {
            if policy.policy_id.trim().is_empty() {
                return Err(malformed(source, pos + 1, "empty policy_id"));
            }
            if !seen_policies.insert(policy.policy_id.clone()) {
                return Err(malformed(
                    source,
                    pos + 1,
                    format!("duplicate policy_id {:?}", policy.policy_id),
                ));
            }
            if policy.segments.is_empty() {
                return Err(malformed(
                    source,
                    pos + 1,
                    format!("policy {:?} has no segments", policy.policy_id),
                ));
            }
            for (segment_index, text) in policy.segments.iter().enumerate() {
                if text.trim().is_empty() {
                    return Err(malformed(
                        source,
                        pos + 1,
                        format!("policy {:?} segment {segment_index} is empty", policy.policy_id),
                    ));
                }
                segments.push(PolicySegment {
                    policy_id: policy.policy_id.clone(),
                    segment_index,
                    text: text.clone(),
                });
            }
        }

        let segment_keys: BTreeSet<(String, usize)> = segments
            .iter()
            .map(|s| (s.policy_id.clone(), s.segment_index))
            .collect();

        let mut annotations = Vec::new();
        let mut seen_records = BTreeSet::new();
        for (pos, record) in doc.annotations.iter().enumerate() {
            if record.annotator_id.trim().is_empty() {
                return Err(malformed(source, pos + 1, "empty annotator_id"));
            }
            if record.labels.is_empty() {
                return Err(malformed(
                    source,
                    pos + 1,
                    format!(
                        "annotation by {:?} for {:?} segment {} has no labels",
                        record.annotator_id, record.policy_id, record.segment_index
                    ),
                ));
            }
            if !segment_keys.contains(&(record.policy_id.clone(), record.segment_index)) {
                return Err(malformed(
                    source,
                    pos + 1,
                    format!(
                        "annotation references unknown segment {:?}/{}",
                        record.policy_id, record.segment_index
                    ),
                ));
            }
            let key = (
                record.annotator_id.clone(),
                record.policy_id.clone(),
                record.segment_index,
            );
            if !seen_records.insert(key) {
                return Err(CorpusError::DuplicateAnnotation {
                    annotator_id: record.annotator_id.clone(),
                    policy_id: record.policy_id.clone(),
                    segment_index: record.segment_index,
                });
            }
            annotations.push(record.clone());
        }

        segments.sort_by(|a, b| (&a.policy_id, a.segment_index).cmp(&(&b.policy_id, b.segment_index)));
        annotations.sort_by(|a, b| {
            (&a.policy_id, a.segment_index, &a.annotator_id)
                .cmp(&(&b.policy_id, b.segment_index, &b.annotator_id))
        });

        let policy_ids: Vec<String> = seen_policies.into_iter().collect();
        let annotator_ids: BTreeSet<String> =
            annotations.iter().map(|a| a.annotator_id.clone()).collect();

        let mut votes: BTreeMap<(String, usize), Vec<BTreeSet<CategoryLabel>>> = BTreeMap::new();
        for record in &annotations {
            votes
                .entry((record.policy_id.clone(), record.segment_index))
                .or_default()
                .push(record.labels.clone());
        }
        let mut gold = BTreeMap::new();
        for segment in &segments {
            let key = (segment.policy_id.clone(), segment.segment_index);
            let segment_votes = votes.remove(&key).unwrap_or_default();
            gold.insert(key, majority_vote(&segment_votes, MAJORITY_QUORUM));
        }

        Ok(Corpus {
            segments,
            annotations,
            policy_ids,
            annotator_ids,
            gold,
        })
    }

    /// Load a corpus from disk. For [`CorpusFormat::Json`], `root` is either
    /// the document itself or a directory containing `corpus.json`. For
    /// [`CorpusFormat::Opp115`], `root` is the dataset directory.
    pub fn load(root: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
        if !root.exists() {
            return Err(CorpusError::MissingFile(root.to_path_buf()));
        }
        match format {
            CorpusFormat::Json => {
                let file = if root.is_dir() { root.join("corpus.json") } else { root.to_path_buf() };
                if !file.is_file() {
                    return Err(CorpusError::MissingFile(file));
                }
                let text = std::fs::read_to_string(&file)?;
                let doc: CorpusDocument = serde_json::from_str(&text).map_err(|e| {
                    malformed(&file.display().to_string(), e.line(), e.to_string())
                })?;
                Corpus::from_document(&doc, &file.display().to_string())
            }
            CorpusFormat::Opp115 => load_opp115(root),
        }
    }

    /// All policy ids, sorted.
    pub fn policy_ids(&self) -> &[String] {
        &self.policy_ids
    }

    /// All segments, sorted by `(policy_id, segment_index)`.
    pub fn segments(&self) -> &[PolicySegment] {
        &self.segments
    }

    /// All annotation records, sorted by `(policy_id, segment_index, annotator_id)`.
    pub fn annotations(&self) -> &[AnnotationRecord] {
        &self.annotations
    }

    /// Distinct annotator ids.
    pub fn annotator_ids(&self) -> &BTreeSet<String> {
        &self.annotator_ids
    }

    /// The segments of one policy, in order. Empty if the policy is unknown.
    pub fn segments_of(&self, policy_id: &str) -> Vec<&PolicySegment> {
        self.segments.iter().filter(|s| s.policy_id == policy_id).collect()
    }

    /// The majority-vote gold set of a segment. Empty both for segments
    /// without agreement and for unknown keys.
    pub fn gold(&self, policy_id: &str, segment_index: usize) -> BTreeSet<CategoryLabel> {
        self.gold
            .get(&(policy_id.to_string(), segment_index))
            .cloned()
            .unwrap_or_default()
    }

    /// The label set one annotator assigned to a segment (empty if none).
    pub fn annotator_labels(
        &self,
        annotator_id: &str,
        policy_id: &str,
        segment_index: usize,
    ) -> BTreeSet<CategoryLabel> {
        self.annotations
            .iter()
            .find(|a| {
                a.annotator_id == annotator_id
                    && a.policy_id == policy_id
                    && a.segment_index == segment_index
            })
            .map(|a| a.labels.clone())
            .unwrap_or_default()
    }

    pub fn summary(&self) -> CorpusSummary {
        CorpusSummary {
            policies: self.policy_ids.len(),
            segments: self.segments.len(),
            annotators: self.annotator_ids.len(),
            annotations: self.annotations.len(),
        }
    }

    /// Rebuild the canonical document: policies sorted by id, segments in
    /// index order, annotations sorted by `(policy, segment, annotator)`.
    pub fn to_document(&self) -> CorpusDocument {
        let mut policies = Vec::new();
        for policy_id in &self.policy_ids {
            let segments = self
                .segments_of(policy_id)
                .into_iter()
                .map(|s| s.text.clone())
                .collect();
            policies.push(PolicyDocument {
                policy_id: policy_id.clone(),
                segments,
            });
        }
        CorpusDocument {
            policies,
            annotations: self.annotations.clone(),
        }
    }

    /// Canonical JSON serialization (pretty-printed, trailing newline).
    /// Equal corpora serialize to identical bytes.
    pub fn to_canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.to_document())
            .expect("corpus document serializes");
        text.push('\n');
        text
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn content_hash(&self) -> String {
        hashing::hash_bytes(self.to_canonical_json().as_bytes())
    }
}

fn malformed(file: &str, line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::MalformedRecord {
        file: file.to_string(),
        line,
        reason: reason.into(),
    }
}

fn load_opp115(root: &Path) -> Result<Corpus, CorpusError> {
    let policies_dir = root.join("policies");
    let annotations_dir = root.join("annotations");
    if !policies_dir.is_dir() {
        return Err(CorpusError::MissingFile(policies_dir));
    }
    if !annotations_dir.is_dir() {
        return Err(CorpusError::MissingFile(annotations_dir));
    }

    let mut policies = Vec::new();
    let mut policy_files: Vec<PathBuf> = std::fs::read_dir(&policies_dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
        .collect();
    policy_files.sort();
    for path in &policy_files {
        let display = path.display().to_string();
        let policy_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| malformed(&display, 0, "policy file name is not valid UTF-8"))?
            .to_string();
        let text = std::fs::read_to_string(path)?;
        let segments: Vec<String> = text
            .split("|||")
            .map(|chunk| chunk.trim().to_string())
            .collect();
        for (i, segment) in segments.iter().enumerate() {
            if segment.is_empty() {
                return Err(malformed(&display, 0, format!("segment {i} is empty")));
            }
        }
        policies.push(PolicyDocument { policy_id, segments });
    }

    let known_policies: BTreeSet<&str> =
        policies.iter().map(|p| p.policy_id.as_str()).collect();

    // CSV rows carry one category each; rows sharing (annotator, policy,
    // segment) merge into a single record. The same row appearing twice is a
    // duplicate annotation.
    let mut merged: BTreeMap<(String, String, usize), BTreeSet<CategoryLabel>> = BTreeMap::new();
    let mut annotation_files: Vec<PathBuf> = std::fs::read_dir(&annotations_dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    annotation_files.sort();
    for path in &annotation_files {
        let display = path.display().to_string();
        let file_policy = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| malformed(&display, 0, "annotation file name is not valid UTF-8"))?;
        if !known_policies.contains(file_policy) {
            return Err(malformed(
                &display,
                0,
                format!("annotations for unknown policy {file_policy:?}"),
            ));
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(false)
            .from_path(path)
            .map_err(|e| malformed(&display, 0, e.to_string()))?;
        for (row_index, row) in reader.records().enumerate() {
            let line = row_index + 1;
            let row = row.map_err(|e| malformed(&display, line, e.to_string()))?;
            if row.len() != 4 {
                return Err(malformed(
                    &display,
                    line,
                    format!("expected 4 fields, found {}", row.len()),
                ));
            }
            let annotator_id = row[0].trim().to_string();
            let policy_id = row[1].trim().to_string();
            let segment_index: usize = row[2]
                .trim()
                .parse()
                .map_err(|_| malformed(&display, line, format!("bad segment index {:?}", &row[2])))?;
            if annotator_id.is_empty() {
                return Err(malformed(&display, line, "empty annotator_id"));
            }
            if policy_id != file_policy {
                return Err(malformed(
                    &display,
                    line,
                    format!("row policy {policy_id:?} does not match file policy {file_policy:?}"),
                ));
            }
            let label = CategoryLabel::from_display(&row[3])
                .map_err(|e| CorpusError::UnknownCategory(e.0))?;
            let key = (annotator_id.clone(), policy_id.clone(), segment_index);
            if !merged.entry(key).or_default().insert(label) {
                return Err(CorpusError::DuplicateAnnotation {
                    annotator_id,
                    policy_id,
                    segment_index,
                });
            }
        }
    }

    let annotations = merged
        .into_iter()
        .map(|((annotator_id, policy_id, segment_index), labels)| AnnotationRecord {
            annotator_id,
            policy_id,
            segment_index,
            labels,
        })
        .collect();

    let doc = CorpusDocument { policies, annotations };
    Corpus::from_document(&doc, &root.display().to_string())
}
