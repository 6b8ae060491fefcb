//! Deterministic template rendering.
//!
//! Rendering is a pure function of the template and the payload: sections
//! are joined with exactly one blank line, category blocks within the list
//! are separated by single newlines, and nothing else is inserted. The
//! payload becomes the user message verbatim. Because section texts never
//! contain blank lines (enforced by template validation), the inverse
//! mapping [`parse_sections`] recovers the section structure from the
//! rendered system text alone.

use super::{PromptTemplate, RenderedPrompt, TaskKind};
use crate::hashing;

/// Task description substituted by [`render_verification`]: the focused
/// second-phase question that asks the model to confirm or reject one
/// candidate contradiction.
pub const VERIFICATION_TASK: &str = "I have a specific task for you: The user will give you \
two statements taken from the same privacy policy. Decide whether these two statements \
genuinely contradict each other. Respond with CONFIRMED if they do, or NOT A CONTRADICTION \
if they do not, followed by a brief explanation of your decision.";

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("payload is empty")]
    EmptyPayload,
    #[error("template {template_id:?} is invalid: {}", violations.join("; "))]
    InvalidTemplate { template_id: String, violations: Vec<String> },
    #[error("template {template_id:?} has task kind {found:?}, expected {expected:?}")]
    WrongTaskKind { template_id: String, expected: TaskKind, found: TaskKind },
}

/// One recovered section of a rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Section {
    Introduction(String),
    Definition(String),
    Categories(String),
    CotMethodology(String),
    CotExamples(String),
    TaskDescription(String),
}

/// Render a template against a payload. The system text carries the section
/// structure; the payload becomes the user text unmodified.
pub fn render(template: &PromptTemplate, payload: &str) -> Result<RenderedPrompt, RenderError> {
    if payload.trim().is_empty() {
        return Err(RenderError::EmptyPayload);
    }
    let violations = template.validate();
    if !violations.is_empty() {
        return Err(RenderError::InvalidTemplate {
            template_id: template.template_id.clone(),
            violations,
        });
    }
    let system_text = system_text(template, &template.task_description);
    Ok(assemble(&template.template_id, system_text, payload))
}

/// Render the focused verification prompt for phase two of contradiction
/// analysis: the same introduction, definition, and type list as the given
/// contradiction template, but with the task description replaced by
/// [`VERIFICATION_TASK`] and no chain-of-thought block. The payload must be
/// the candidate under review (the two statements plus the claimed type) and
/// nothing else.
pub fn render_verification(
    template: &PromptTemplate,
    payload: &str,
) -> Result<RenderedPrompt, RenderError> {
    if template.task_kind != TaskKind::Contradiction {
        return Err(RenderError::WrongTaskKind {
            template_id: template.template_id.clone(),
            expected: TaskKind::Contradiction,
            found: template.task_kind,
        });
    }
    if payload.trim().is_empty() {
        return Err(RenderError::EmptyPayload);
    }
    let violations = template.validate();
    if !violations.is_empty() {
        return Err(RenderError::InvalidTemplate {
            template_id: template.template_id.clone(),
            violations,
        });
    }
    let mut stripped = template.clone();
    stripped.cot = None;
    // Phase two must not leak phase-one in-context examples: a model that
    // echoed an example back would otherwise see it again and "confirm" it.
    for category in &mut stripped.categories {
        category.examples.clear();
    }
    let system_text = system_text(&stripped, VERIFICATION_TASK);
    Ok(assemble(&template.template_id, system_text, payload))
}

fn assemble(template_id: &str, system_text: String, payload: &str) -> RenderedPrompt {
    let content_hash = hashing::hash_fields(&[system_text.as_bytes(), payload.as_bytes()]);
    RenderedPrompt {
        template_id: template_id.to_string(),
        system_text,
        user_text: payload.to_string(),
        content_hash,
    }
}

fn system_text(template: &PromptTemplate, task_description: &str) -> String {
    let mut sections: Vec<String> = vec![
        template.introduction.clone(),
        template.definition.clone(),
    ];

    if !template.categories.is_empty() {
        let blocks: Vec<String> = template
            .categories
            .iter()
            .enumerate()
            .map(|(i, category)| {
                let mut block = match &category.description {
                    Some(description) => format!("{}. {}: {}", i + 1, category.label, description),
                    None => format!("{}. {}.", i + 1, category.label),
                };
                for example in &category.examples {
                    block.push('\n');
                    block.push_str(&example_line(template.task_kind, example));
                }
                block
            })
            .collect();
        sections.push(blocks.join("\n"));
    }

    if let Some(cot) = &template.cot {
        sections.push(cot.methodology.clone());
        if !cot.worked_examples.is_empty() {
            let examples: Vec<String> = cot
                .worked_examples
                .iter()
                .map(|e| {
                    format!(
                        "Statement: {}\nReasoning: {}\nCategory: {}",
                        e.statement, e.reasoning, e.conclusion
                    )
                })
                .collect();
            sections.push(examples.join("\n"));
        }
    }

    sections.push(task_description.to_string());
    sections.join("\n\n")
}

/// Annotation examples are quoted segment sentences; contradiction examples
/// are prose descriptions of a statement pair and already carry their own
/// internal quoting.
fn example_line(kind: TaskKind, example: &str) -> String {
    match kind {
        TaskKind::Annotation => format!("Example: \"{example}\""),
        TaskKind::Contradiction => format!("Example: {example}"),
    }
}

/// Recover the section structure of a rendered system text. This is the
/// structural inverse of rendering: paragraphs are classified by shape (the
/// category list starts with `1. `, worked examples start with
/// `Statement: `), and the grammar order is enforced.
pub fn parse_sections(system_text: &str) -> Result<Vec<Section>, String> {
    let paragraphs: Vec<&str> = system_text.split("\n\n").collect();
    if paragraphs.len() < 3 {
        return Err(format!(
            "expected at least 3 sections (introduction, definition, task), found {}",
            paragraphs.len()
        ));
    }
    let last = paragraphs.len() - 1;
    let mut sections = vec![
        Section::Introduction(paragraphs[0].to_string()),
        Section::Definition(paragraphs[1].to_string()),
    ];
    let mut seen_categories = false;
    let mut seen_methodology = false;
    let mut seen_examples = false;
    for paragraph in &paragraphs[2..last] {
        if paragraph.starts_with("1. ") {
            if seen_categories || seen_methodology || seen_examples {
                return Err("category list out of order".into());
            }
            seen_categories = true;
            sections.push(Section::Categories(paragraph.to_string()));
        } else if paragraph.starts_with("Statement: ") {
            if seen_examples {
                return Err("duplicate worked-example section".into());
            }
            seen_examples = true;
            sections.push(Section::CotExamples(paragraph.to_string()));
        } else {
            if seen_methodology || seen_examples {
                return Err("methodology section out of order".into());
            }
            seen_methodology = true;
            sections.push(Section::CotMethodology(paragraph.to_string()));
        }
    }
    sections.push(Section::TaskDescription(paragraphs[last].to_string()));
    Ok(sections)
}
