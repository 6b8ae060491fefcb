//! The prompt catalog: built-in templates plus user-registered ones,
//! addressable by id and serializable as a single JSON document.

use super::builtin::builtin_templates;
use super::{PredefinedPrompt, PromptTemplate};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("template id {0:?} is already registered")]
    DuplicateId(String),
    #[error("template {template_id:?} is invalid: {}", violations.join("; "))]
    InvalidTemplate { template_id: String, violations: Vec<String> },
    #[error("catalog file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("catalog parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CatalogDocument {
    templates: Vec<PromptTemplate>,
}

/// An id-addressed collection of validated prompt templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptCatalog {
    templates: BTreeMap<String, PromptTemplate>,
    order: Vec<String>,
}

impl PromptCatalog {
    /// An empty catalog.
    pub fn empty() -> PromptCatalog {
        PromptCatalog { templates: BTreeMap::new(), order: Vec::new() }
    }

    /// The catalog of built-in prompts I through XI.
    pub fn builtin() -> PromptCatalog {
        let mut catalog = PromptCatalog::empty();
        for template in builtin_templates() {
            catalog.register(template).expect("built-in templates are valid and unique");
        }
        catalog
    }

    /// Add a template after validating it. The id must be new.
    pub fn register(&mut self, template: PromptTemplate) -> Result<(), CatalogError> {
        let violations = template.validate();
        if !violations.is_empty() {
            return Err(CatalogError::InvalidTemplate {
                template_id: template.template_id.clone(),
                violations,
            });
        }
        if self.templates.contains_key(&template.template_id) {
            return Err(CatalogError::DuplicateId(template.template_id));
        }
        self.order.push(template.template_id.clone());
        self.templates.insert(template.template_id.clone(), template);
        Ok(())
    }

    pub fn get(&self, template_id: &str) -> Option<&PromptTemplate> {
        self.templates.get(template_id)
    }

    pub fn get_predefined(&self, prompt: PredefinedPrompt) -> Option<&PromptTemplate> {
        self.get(prompt.id())
    }

    /// Template ids in registration order.
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(|s| s.as_str())
    }

    /// Templates in registration order.
    pub fn templates(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.order.iter().map(|id| &self.templates[id])
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Serialize the catalog as a JSON document (templates in registration
    /// order, trailing newline).
    pub fn to_json(&self) -> String {
        let doc = CatalogDocument { templates: self.templates().cloned().collect() };
        let mut text = serde_json::to_string_pretty(&doc).expect("catalog serializes");
        text.push('\n');
        text
    }

    /// Parse a catalog document, validating every template.
    pub fn from_json(text: &str) -> Result<PromptCatalog, CatalogError> {
        let doc: CatalogDocument = serde_json::from_str(text)?;
        let mut catalog = PromptCatalog::empty();
        for template in doc.templates {
            catalog.register(template)?;
        }
        Ok(catalog)
    }

    pub fn save(&self, path: &Path) -> Result<(), CatalogError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PromptCatalog, CatalogError> {
        let text = std::fs::read_to_string(path)?;
        PromptCatalog::from_json(&text)
    }
}

impl Default for PromptCatalog {
    fn default() -> Self {
        PromptCatalog::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{CategorySpec, ShotLevel, TaskKind};

    fn custom_template(id: &str) -> PromptTemplate {
        PromptTemplate {
            template_id: id.into(),
            task_kind: TaskKind::Annotation,
            shot_level: ShotLevel::Zero,
            introduction: "Intro.".into(),
            definition: "Definition.".into(),
            categories: vec![CategorySpec {
                label: "Data Security".into(),
                description: None,
                examples: vec![],
            }],
            cot: None,
            task_description: "Task.".into(),
            reconstructed: false,
        }
    }

    #[test]
    fn builtin_catalog_has_eleven_prompts() {
        let catalog = PromptCatalog::builtin();
        assert_eq!(catalog.len(), 11);
        for prompt in PredefinedPrompt::ALL {
            assert!(catalog.get_predefined(prompt).is_some(), "{} missing", prompt.id());
        }
    }

    #[test]
    fn register_rejects_duplicate_ids() {
        let mut catalog = PromptCatalog::builtin();
        let err = catalog.register(custom_template("annotation.I")).unwrap_err();
        assert!(matches!(err, CatalogError::DuplicateId(_)));
    }

    #[test]
    fn register_rejects_invalid_templates() {
        let mut catalog = PromptCatalog::empty();
        let mut template = custom_template("annotation.bad");
        template.categories.clear();
        let err = catalog.register(template).unwrap_err();
        assert!(matches!(err, CatalogError::InvalidTemplate { .. }));
    }

    #[test]
    fn custom_templates_coexist_with_builtins() {
        let mut catalog = PromptCatalog::builtin();
        catalog.register(custom_template("annotation.custom")).unwrap();
        assert_eq!(catalog.len(), 12);
        assert!(catalog.get("annotation.custom").is_some());
        assert!(catalog.get("annotation.I").is_some());
    }

    #[test]
    fn json_round_trip_preserves_everything() {
        let mut catalog = PromptCatalog::builtin();
        catalog.register(custom_template("annotation.custom")).unwrap();
        let json = catalog.to_json();
        let back = PromptCatalog::from_json(&json).unwrap();
        assert_eq!(catalog, back);
        assert_eq!(json, back.to_json());
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.json");
        let catalog = PromptCatalog::builtin();
        catalog.save(&path).unwrap();
        let back = PromptCatalog::load(&path).unwrap();
        assert_eq!(catalog, back);
    }
}
