//! Evaluation reports: one serializable summary per scored run, plus
//! side-by-side comparison of several runs.
//!
//! Reports carry no timestamps, so re-scoring the same run against the
//! same corpus produces byte-identical files. Emitters exist for JSON
//! (machine), CSV (spreadsheets), and Markdown (docs).

use crate::annotate::RunManifest;
use crate::label::CategoryLabel;
use crate::metrics::{
    BootstrapConfig, BootstrapReport, Evaluation, SamplingMode, ScopeSummary, ScoreOptions,
    StatSummary,
};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("nothing to compare: no reports given")]
    Empty,
    #[error("reports are not comparable: {0}")]
    ScopeMismatch(String),
    #[error("cannot read report {path}: {detail}")]
    Unreadable { path: String, detail: String },
    #[error("invalid report {path}: {detail}")]
    Invalid { path: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One scored category (or the micro average).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub label: String,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<StatSummary>,
}

/// Bootstrap provenance, echoed into the report when intervals were run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapMeta {
    pub config: BootstrapConfig,
    pub sampling: SamplingMode,
    pub subsets_used: usize,
    pub policies: usize,
}

/// The complete evaluation result for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run_id: String,
    pub template_id: String,
    pub model_name: String,
    pub corpus_hash: String,
    pub options: ScoreOptions,
    pub scope: ScopeSummary,
    pub per_category: Vec<CategoryRow>,
    pub micro: CategoryRow,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapMeta>,
}

impl MetricsReport {
    /// Assemble a report from a run manifest, its evaluation, and an
    /// optional bootstrap result.
    pub fn from_parts(
        manifest: &RunManifest,
        evaluation: &Evaluation,
        bootstrap: Option<&BootstrapReport>,
    ) -> MetricsReport {
        let row_for = |label: CategoryLabel| -> CategoryRow {
            let cell = evaluation.counts.per_label.get(&label).copied().unwrap_or_default();
            let prf = evaluation.per_category.get(&label).copied().unwrap_or_default();
            CategoryRow {
                label: label.display_name().to_string(),
                true_positives: cell.true_positives,
                false_positives: cell.false_positives,
                false_negatives: cell.false_negatives,
                precision: prf.precision,
                recall: prf.recall,
                f1: prf.f1,
                bootstrap: bootstrap.and_then(|b| b.per_category_f1.get(&label).copied()),
            }
        };
        let per_category: Vec<CategoryRow> = crate::metrics::scored_labels(evaluation.options)
            .into_iter()
            .map(row_for)
            .collect();
        let micro_cell = evaluation.counts.micro();
        let micro = CategoryRow {
            label: "micro".to_string(),
            true_positives: micro_cell.true_positives,
            false_positives: micro_cell.false_positives,
            false_negatives: micro_cell.false_negatives,
            precision: evaluation.micro.precision,
            recall: evaluation.micro.recall,
            f1: evaluation.micro.f1,
            bootstrap: bootstrap.map(|b| b.micro_f1),
        };
        MetricsReport {
            run_id: manifest.run_id.clone(),
            template_id: manifest.template_id.clone(),
            model_name: manifest.model.model_name.clone(),
            corpus_hash: manifest.corpus_hash.clone(),
            options: evaluation.options,
            scope: evaluation.scope,
            per_category,
            micro,
            bootstrap: bootstrap.map(|b| BootstrapMeta {
                config: b.config,
                sampling: b.sampling,
                subsets_used: b.subsets_used,
                policies: b.policies.len(),
            }),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn save(&self, path: &Path) -> Result<(), ReportError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MetricsReport, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|e| ReportError::Unreadable {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| ReportError::Invalid {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    fn rows(&self) -> impl Iterator<Item = &CategoryRow> {
        self.per_category.iter().chain(std::iter::once(&self.micro))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "category,true_positives,false_positives,false_negatives,precision,recall,f1,ci_mean,ci_half_width\n",
        );
        for row in self.rows() {
            let (mean, hw) = match &row.bootstrap {
                Some(s) => (format!("{:.6}", s.mean), format!("{:.6}", s.half_width)),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6},{},{}",
                csv_field(&row.label),
                row.true_positives,
                row.false_positives,
                row.false_negatives,
                row.precision,
                row.recall,
                row.f1,
                mean,
                hw
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "# Evaluation: {} ({} on {})\n\n",
            self.run_id, self.template_id, self.model_name
        );
        let _ = writeln!(
            out,
            "Segments scored: {} (errors excluded: {}, empty-gold excluded: {})\n",
            self.scope.segments_scored, self.scope.excluded_errors, self.scope.excluded_empty_gold
        );
        out.push_str("| Category | TP | FP | FN | Precision | Recall | F1 | 95% CI |\n");
        out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|\n");
        for row in self.rows() {
            let ci = match &row.bootstrap {
                Some(s) => format!("{:.4} ± {:.4}", s.mean, s.half_width),
                None => "—".to_string(),
            };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.4} | {:.4} | {:.4} | {} |",
                row.label,
                row.true_positives,
                row.false_positives,
                row.false_negatives,
                row.precision,
                row.recall,
                row.f1,
                ci
            );
        }
        out
    }
}

fn csv_field(text: &str) -> String {
    if text.contains(',') || text.contains('"') || text.contains('\n') {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

/// One cell of a comparison table: the F1 of one run on one category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
}

/// Several runs side by side, one column per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub labels: Vec<String>,
    /// `cells[row][column]`, aligned with `labels` and `columns`.
    pub cells: Vec<Vec<ComparisonCell>>,
}

/// Compare runs that were scored over the same corpus with the same
/// options. Anything else is a scope mismatch.
pub fn compare_runs(reports: &[&MetricsReport]) -> Result<ComparisonTable, ReportError> {
    let first = reports.first().ok_or(ReportError::Empty)?;
    for report in &reports[1..] {
        if report.corpus_hash != first.corpus_hash {
            return Err(ReportError::ScopeMismatch(format!(
                "run {} was scored against corpus {} but run {} against {}",
                first.run_id, first.corpus_hash, report.run_id, report.corpus_hash
            )));
        }
        if report.options != first.options {
            return Err(ReportError::ScopeMismatch(format!(
                "run {} and run {} use different scoring options",
                first.run_id, report.run_id
            )));
        }
    }
    let labels: Vec<String> = first.rows().map(|r| r.label.clone()).collect();
    let mut cells = vec![Vec::with_capacity(reports.len()); labels.len()];
    for report in reports {
        let rows: Vec<&CategoryRow> = report.rows().collect();
        if rows.len() != labels.len()
            || rows.iter().zip(&labels).any(|(r, l)| &r.label != l)
        {
            return Err(ReportError::ScopeMismatch(format!(
                "run {} reports a different category list",
                report.run_id
            )));
        }
        for (row, cell_row) in rows.iter().zip(cells.iter_mut()) {
            cell_row.push(ComparisonCell {
                f1: row.f1,
                half_width: row.bootstrap.as_ref().map(|s| s.half_width),
            });
        }
    }
    Ok(ComparisonTable {
        columns: reports.iter().map(|r| r.run_id.clone()).collect(),
        labels,
        cells,
    })
}

impl ComparisonTable {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("table serializes");
        text.push('\n');
        text
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category");
        for column in &self.columns {
            let _ = write!(out, ",{}", csv_field(column));
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.cells) {
            out.push_str(&csv_field(label));
            for cell in row {
                match cell.half_width {
                    Some(hw) => {
                        let _ = write!(out, ",{:.6} ± {:.6}", cell.f1, hw);
                    }
                    None => {
                        let _ = write!(out, ",{:.6}", cell.f1);
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Category |");
        for column in &self.columns {
            let _ = write!(out, " {column} |");
        }
        out.push('\n');
        out.push_str("|---|");
        out.push_str(&"---:|".repeat(self.columns.len()));
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.cells) {
            let _ = write!(out, "| {label} |");
            for cell in row {
                match cell.half_width {
                    Some(hw) => {
                        let _ = write!(out, " {:.4} ± {:.4} |", cell.f1, hw);
                    }
                    None => {
                        let _ = write!(out, " {:.4} |", cell.f1);
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}
