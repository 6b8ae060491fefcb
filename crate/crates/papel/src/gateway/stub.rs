//! The rule-stub backend: deterministic local answers for tests and demos.
//!
//! Annotation prompts are answered from a keyword rule table: every rule
//! whose keyword occurs (case-insensitively) in the user text contributes
//! its label, and the response lists the matched labels in catalog order,
//! comma-separated, falling back to a default response when nothing
//! matches. Contradiction prompts are answered from a script: the first
//! entry whose `when_contains` needle occurs verbatim in the user text wins,
//! with a default response (normally `NO FINDINGS.`) otherwise. Both tables
//! are versioned JSON documents; bundled versions ship with the crate.

use super::{GatewayError, ModelConfig};
use crate::label::CategoryLabel;
use crate::prompt::RenderedPrompt;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubRule {
    pub keyword: String,
    pub label: CategoryLabel,
}

/// Keyword rules for annotation prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubRules {
    pub version: String,
    pub rules: Vec<StubRule>,
    pub default_response: String,
}

/// One scripted contradiction answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub when_contains: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Scripted answers for contradiction prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubScript {
    pub version: String,
    pub entries: Vec<ScriptEntry>,
    pub default_response: String,
}

/// The combined stub responder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleStub {
    rules: StubRules,
    script: StubScript,
}

impl RuleStub {
    /// The bundled rules and script.
    pub fn builtin() -> RuleStub {
        RuleStub {
            rules: serde_json::from_str(include_str!("../../data/stub/annotation_rules_v1.json"))
                .expect("bundled stub rules parse"),
            script: serde_json::from_str(include_str!(
                "../../data/stub/contradiction_script_v1.json"
            ))
            .expect("bundled stub script parses"),
        }
    }

    pub fn new(rules: StubRules, script: StubScript) -> RuleStub {
        RuleStub { rules, script }
    }

    /// Build from a model config, loading rule/script files when configured
    /// and falling back to the bundled versions.
    pub fn from_config(config: &ModelConfig) -> Result<RuleStub, GatewayError> {
        let mut stub = RuleStub::builtin();
        if let Some(path) = &config.stub_rules {
            stub.rules = load_json(path)?;
        }
        if let Some(path) = &config.stub_script {
            stub.script = load_json(path)?;
        }
        Ok(stub)
    }

    pub fn rules(&self) -> &StubRules {
        &self.rules
    }

    pub fn script(&self) -> &StubScript {
        &self.script
    }

    /// Answer one prompt. Contradiction templates (id prefix
    /// `contradiction.`) are served from the script, everything else from
    /// the keyword rules.
    pub fn respond(&self, prompt: &RenderedPrompt) -> String {
        if prompt.template_id.starts_with("contradiction.") {
            self.respond_scripted(&prompt.user_text)
        } else {
            self.respond_rules(&prompt.user_text)
        }
    }

    fn respond_rules(&self, user_text: &str) -> String {
        let haystack = user_text.to_lowercase();
        let mut matched: Vec<CategoryLabel> = Vec::new();
        for rule in &self.rules.rules {
            if haystack.contains(&rule.keyword.to_lowercase()) && !matched.contains(&rule.label) {
                matched.push(rule.label);
            }
        }
        if matched.is_empty() {
            return self.rules.default_response.clone();
        }
        matched.sort();
        matched
            .iter()
            .map(|l| l.display_name())
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn respond_scripted(&self, user_text: &str) -> String {
        for entry in &self.script.entries {
            if user_text.contains(&entry.when_contains) {
                return entry.response.clone();
            }
        }
        self.script.default_response.clone()
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, GatewayError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        GatewayError::Config(format!("cannot read {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| GatewayError::Config(format!("cannot parse {}: {e}", path.display())))
}
