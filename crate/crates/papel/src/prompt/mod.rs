//! Prompt templates: the structured grammar behind every prompt in the
//! catalog, plus rendering and the built-in catalog itself.
//!
//! A template is an ordered sequence of sections: an introduction, a task
//! definition, an optional numbered list of category blocks (each with an
//! optional description and optional examples), an optional chain-of-thought
//! block (a methodology plus worked reasoning examples), and a closing task
//! description. Rendering joins the sections with blank lines, which keeps
//! the rendered text both human-readable and mechanically parseable: the
//! section structure can be recovered from the rendered string alone (see
//! [`render::parse_sections`]).

mod builtin;
mod catalog;
mod render;

pub use builtin::{contradiction_types, NO_FINDINGS};
pub use catalog::{CatalogError, PromptCatalog};
pub use render::{parse_sections, render, render_verification, RenderError, Section};

use serde::{Deserialize, Serialize};

/// What a template asks the model to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Annotation,
    Contradiction,
}

/// How many in-context examples each category block carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotLevel {
    Zero,
    One,
    Few,
}

/// One numbered block in the category list. For annotation templates the
/// label is a data-practice category name; for contradiction templates it is
/// a contradiction-type name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub examples: Vec<String>,
}

/// One worked reasoning example in a chain-of-thought block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotExample {
    pub statement: String,
    pub reasoning: String,
    pub conclusion: String,
}

/// Chain-of-thought section: a step-by-step methodology and zero or more
/// worked examples demonstrating it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotBlock {
    pub methodology: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub worked_examples: Vec<CotExample>,
}

/// A complete prompt template. `reconstructed` marks templates whose text
/// was rebuilt from a structural recipe rather than transcribed verbatim
/// from a published source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub task_kind: TaskKind,
    pub shot_level: ShotLevel,
    pub introduction: String,
    pub definition: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<CategorySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot: Option<CotBlock>,
    pub task_description: String,
    #[serde(default)]
    pub reconstructed: bool,
}

/// A template rendered against one payload, ready to send to a model. The
/// section structure goes into `system_text`; the payload (segment text or a
/// numbered policy listing) is `user_text`, verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template_id: String,
    pub system_text: String,
    pub user_text: String,
    pub content_hash: String,
}

/// The eleven built-in prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredefinedPrompt {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
    VIII,
    IX,
    X,
    XI,
}

impl PredefinedPrompt {
    pub const ALL: [PredefinedPrompt; 11] = [
        PredefinedPrompt::I,
        PredefinedPrompt::II,
        PredefinedPrompt::III,
        PredefinedPrompt::IV,
        PredefinedPrompt::V,
        PredefinedPrompt::VI,
        PredefinedPrompt::VII,
        PredefinedPrompt::VIII,
        PredefinedPrompt::IX,
        PredefinedPrompt::X,
        PredefinedPrompt::XI,
    ];

    /// The catalog id, e.g. `annotation.IV` or `contradiction.IX`.
    pub fn id(self) -> &'static str {
        match self {
            PredefinedPrompt::I => "annotation.I",
            PredefinedPrompt::II => "annotation.II",
            PredefinedPrompt::III => "annotation.III",
            PredefinedPrompt::IV => "annotation.IV",
            PredefinedPrompt::V => "annotation.V",
            PredefinedPrompt::VI => "annotation.VI",
            PredefinedPrompt::VII => "annotation.VII",
            PredefinedPrompt::VIII => "contradiction.VIII",
            PredefinedPrompt::IX => "contradiction.IX",
            PredefinedPrompt::X => "contradiction.X",
            PredefinedPrompt::XI => "contradiction.XI",
        }
    }

    fn numeral(self) -> &'static str {
        self.id().split('.').next_back().expect("id has a numeral")
    }
}

impl std::str::FromStr for PredefinedPrompt {
    type Err = String;

    /// Accepts the full catalog id (`annotation.IV`) or the bare numeral (`IV`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim();
        for prompt in PredefinedPrompt::ALL {
            if wanted.eq_ignore_ascii_case(prompt.id())
                || wanted.eq_ignore_ascii_case(prompt.numeral())
            {
                return Ok(prompt);
            }
        }
        Err(format!("unknown predefined prompt {s:?} (expected I through XI)"))
    }
}

impl PromptTemplate {
    /// Check every template invariant. Returns an empty list exactly when
    /// the template is well-formed; otherwise one human-readable violation
    /// per problem.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();

        if self.template_id.is_empty() || self.template_id.chars().any(char::is_whitespace) {
            violations.push(format!(
                "template_id {:?} must be non-empty and contain no whitespace",
                self.template_id
            ));
        }
        check_text(&mut violations, "introduction", &self.introduction);
        check_text(&mut violations, "definition", &self.definition);
        check_text(&mut violations, "task_description", &self.task_description);

        match self.task_kind {
            TaskKind::Annotation => {
                if self.categories.is_empty() {
                    violations.push("annotation templates must list at least one category".into());
                }
            }
            TaskKind::Contradiction => {
                if self.categories.is_empty() && self.template_id != "contradiction.VIII" {
                    violations.push(
                        "contradiction templates must list at least one contradiction type \
                         (only contradiction.VIII omits the list)"
                            .into(),
                    );
                }
            }
        }

        let mut seen_labels = std::collections::BTreeSet::new();
        for (i, category) in self.categories.iter().enumerate() {
            let context = format!("category {}", i + 1);
            check_text(&mut violations, &format!("{context} label"), &category.label);
            if !seen_labels.insert(category.label.clone()) {
                violations.push(format!("duplicate category label {:?}", category.label));
            }
            if let Some(description) = &category.description {
                check_text(&mut violations, &format!("{context} description"), description);
            }
            for (j, example) in category.examples.iter().enumerate() {
                check_text(&mut violations, &format!("{context} example {}", j + 1), example);
            }
            let expected: Option<usize> = match self.shot_level {
                ShotLevel::Zero => Some(0),
                ShotLevel::One => Some(1),
                ShotLevel::Few => None,
            };
            match expected {
                Some(n) if category.examples.len() != n => violations.push(format!(
                    "{context}: shot level requires exactly {n} example(s), found {}",
                    category.examples.len()
                )),
                None if category.examples.len() < 2 => violations.push(format!(
                    "{context}: few-shot requires at least 2 examples, found {}",
                    category.examples.len()
                )),
                _ => {}
            }
        }

        if let Some(cot) = &self.cot {
            check_text(&mut violations, "cot methodology", &cot.methodology);
            for (i, example) in cot.worked_examples.iter().enumerate() {
                let context = format!("cot example {}", i + 1);
                check_text(&mut violations, &format!("{context} statement"), &example.statement);
                check_text(&mut violations, &format!("{context} reasoning"), &example.reasoning);
                check_text(&mut violations, &format!("{context} conclusion"), &example.conclusion);
            }
        }

        violations
    }
}

/// Section texts must be non-empty, carry no surrounding whitespace, and
/// contain no blank lines, so that a rendered prompt always splits back into
/// its sections on blank-line boundaries.
fn check_text(violations: &mut Vec<String>, what: &str, text: &str) {
    if text.trim().is_empty() {
        violations.push(format!("{what} is empty"));
        return;
    }
    if text != text.trim() {
        violations.push(format!("{what} has leading or trailing whitespace"));
    }
    if text.contains("\n\n") {
        violations.push(format!("{what} contains a blank line"));
    }
}
