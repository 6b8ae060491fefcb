//! Free-text answer normalization.
//!
//! Models answer annotation prompts in prose; this module maps an answer
//! onto data-practice labels with a versioned keyword table. Matching is
//! case-insensitive, ignores punctuation, and respects word boundaries: the
//! answer and every table phrase are tokenized (runs of alphanumeric
//! characters, lowercased), and a phrase matches where its token sequence
//! appears contiguously in the answer. A category is assigned when any of
//! its phrases (canonical name, alias, or distinguishing keyword) matches at
//! least once, so adding phrases to the table can only ever add labels.
//!
//! Every match occurrence is recorded in a trace (ordered by position, then
//! longest match first), and an answer is flagged for human review when no
//! label matched at all or when occurrences of *different* labels overlap,
//! which signals that the answer was ambiguous rather than merely verbose.

use crate::label::CategoryLabel;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

/// Phrases recognized for one category. `canonical` is the display name and
/// always participates in matching; `aliases` are alternate spellings of the
/// name; `keywords` are distinguishing phrases that imply the category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordCategory {
    pub label: CategoryLabel,
    pub canonical: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub keywords: Vec<String>,
}

/// A versioned keyword table. The version string is recorded in run
/// manifests so that a run pins the exact normalization behavior.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordTable {
    pub version: String,
    pub categories: Vec<KeywordCategory>,
}

#[derive(Debug, thiserror::Error)]
pub enum KeywordTableError {
    #[error("keyword table file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("keyword table parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("keyword table is invalid: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

/// One occurrence of a table phrase inside an answer. Offsets and lengths
/// count characters of the raw answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSpan {
    pub label: CategoryLabel,
    pub phrase: String,
    pub char_offset: usize,
    pub char_len: usize,
}

/// The normalized reading of one model answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedAnnotation {
    pub labels: BTreeSet<CategoryLabel>,
    pub match_trace: Vec<MatchSpan>,
    pub needs_review: bool,
    pub raw_response: String,
}

impl NormalizedAnnotation {
    /// Why the answer was flagged, if it was.
    pub fn review_reason(&self) -> Option<&'static str> {
        if !self.needs_review {
            None
        } else if self.labels.is_empty() {
            Some("no_match")
        } else {
            Some("ambiguous_overlap")
        }
    }
}

/// A needs-review line destined for the review worksheet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewItem {
    pub policy_id: String,
    pub segment_index: usize,
    pub annotation: NormalizedAnnotation,
}

impl KeywordTable {
    /// The bundled table, version `v1`.
    pub fn builtin() -> &'static KeywordTable {
        static TABLE: OnceLock<KeywordTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            KeywordTable::from_json(include_str!("../data/keyword_table_v1.json"))
                .expect("bundled keyword table is valid")
        })
    }

    pub fn from_json(text: &str) -> Result<KeywordTable, KeywordTableError> {
        let table: KeywordTable = serde_json::from_str(text)?;
        let violations = table.validate();
        if violations.is_empty() {
            Ok(table)
        } else {
            Err(KeywordTableError::Invalid(violations))
        }
    }

    pub fn load(path: &Path) -> Result<KeywordTable, KeywordTableError> {
        KeywordTable::from_json(&std::fs::read_to_string(path)?)
    }

    /// Table invariants: one entry per label, phrases tokenize to something,
    /// and no two categories claim the same phrase (so a matched phrase
    /// always yields exactly one label).
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        if self.version.trim().is_empty() {
            violations.push("version is empty".into());
        }
        let mut seen_labels = BTreeSet::new();
        let mut phrase_owners: std::collections::BTreeMap<Vec<String>, CategoryLabel> =
            std::collections::BTreeMap::new();
        for category in &self.categories {
            if !seen_labels.insert(category.label) {
                violations.push(format!("label {} has two entries", category.label));
            }
            for phrase in category.phrases() {
                let tokens = tokenize_phrase(phrase);
                if tokens.is_empty() {
                    violations.push(format!(
                        "phrase {phrase:?} of {} contains no letters or digits",
                        category.label
                    ));
                    continue;
                }
                if let Some(&owner) = phrase_owners.get(&tokens) {
                    if owner != category.label {
                        violations.push(format!(
                            "phrase {phrase:?} is claimed by both {owner} and {}",
                            category.label
                        ));
                    }
                } else {
                    phrase_owners.insert(tokens, category.label);
                }
            }
        }
        violations
    }
}

impl KeywordCategory {
    fn phrases(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.canonical.as_str())
            .chain(self.aliases.iter().map(String::as_str))
            .chain(self.keywords.iter().map(String::as_str))
    }
}

/// A token of the raw answer with its character span.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Token {
    text: String,
    start: usize,
    end: usize,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0usize;
    for (i, c) in text.chars().enumerate() {
        if c.is_alphanumeric() {
            if current.is_empty() {
                start = i;
            }
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(Token { text: std::mem::take(&mut current), start, end: i });
        }
    }
    if !current.is_empty() {
        let end = text.chars().count();
        tokens.push(Token { text: current, start, end });
    }
    tokens
}

fn tokenize_phrase(phrase: &str) -> Vec<String> {
    tokenize(phrase).into_iter().map(|t| t.text).collect()
}

/// Map one raw model answer onto labels using the given table.
pub fn normalize_annotation(raw_response: &str, table: &KeywordTable) -> NormalizedAnnotation {
    let tokens = tokenize(raw_response);
    let mut trace: Vec<MatchSpan> = Vec::new();

    for category in &table.categories {
        for phrase in category.phrases() {
            let phrase_tokens = tokenize_phrase(phrase);
            if phrase_tokens.is_empty() || phrase_tokens.len() > tokens.len() {
                continue;
            }
            for window_start in 0..=(tokens.len() - phrase_tokens.len()) {
                let window = &tokens[window_start..window_start + phrase_tokens.len()];
                if window.iter().map(|t| t.text.as_str()).eq(phrase_tokens.iter().map(String::as_str))
                {
                    let start = window[0].start;
                    let end = window[window.len() - 1].end;
                    trace.push(MatchSpan {
                        label: category.label,
                        phrase: phrase.to_string(),
                        char_offset: start,
                        char_len: end - start,
                    });
                }
            }
        }
    }

    // Position order, longest match first among occurrences sharing an
    // offset, label order as the final tie-break.
    trace.sort_by(|a, b| {
        a.char_offset
            .cmp(&b.char_offset)
            .then(b.char_len.cmp(&a.char_len))
            .then(a.label.cmp(&b.label))
            .then(a.phrase.cmp(&b.phrase))
    });

    let labels: BTreeSet<CategoryLabel> = trace.iter().map(|m| m.label).collect();
    let ambiguous = trace.iter().enumerate().any(|(i, a)| {
        trace[i + 1..]
            .iter()
            .take_while(|b| b.char_offset < a.char_offset + a.char_len)
            .any(|b| b.label != a.label)
    });
    let needs_review = labels.is_empty() || ambiguous;

    NormalizedAnnotation {
        labels,
        match_trace: trace,
        needs_review,
        raw_response: raw_response.to_string(),
    }
}

/// Write the flagged subset of a batch as a review worksheet CSV and return
/// the number of rows written. Columns: `policy_id, segment_index,
/// raw_response, matched_labels, needs_review_reason`.
pub fn emit_review_worksheet(items: &[ReviewItem], path: &Path) -> Result<usize, std::io::Error> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["policy_id", "segment_index", "raw_response", "matched_labels", "needs_review_reason"])?;
    let mut rows = 0usize;
    for item in items {
        let Some(reason) = item.annotation.review_reason() else {
            continue;
        };
        let labels = item
            .annotation
            .labels
            .iter()
            .map(|l| l.display_name())
            .collect::<Vec<_>>()
            .join("; ");
        writer.write_record([
            item.policy_id.as_str(),
            &item.segment_index.to_string(),
            item.annotation.raw_response.as_str(),
            &labels,
            reason,
        ])?;
        rows += 1;
    }
    writer.flush()?;
    Ok(rows)
}
