//! Run configuration files: one JSON document that pins everything an
//! evaluation run needs — corpus location and format, prompt template,
//! model configuration, keyword table, bootstrap parameters, and output
//! directory — so that a run can be reproduced from the file alone.

use crate::corpus::CorpusFormat;
use crate::gateway::ModelConfig;
use crate::metrics::BootstrapConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Where the corpus lives and how it is laid out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    /// `json`: a single corpus file. `opp115`: a directory with
    /// `policies/` and `annotations/` subdirectories.
    pub root: PathBuf,
    pub format: CorpusFormat,
}

/// A complete, self-describing run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusSpec,
    /// Catalog id of the prompt to run, e.g. `annotation.II`.
    pub template_id: String,
    pub model: ModelConfig,
    /// Optional custom keyword table (defaults to the built-in table).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyword_table: Option<PathBuf>,
    /// Optional custom prompt catalog (defaults to the built-in catalog).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub include_other: bool,
    #[serde(default)]
    pub exclude_empty_gold: bool,
    /// Restrict runs to these policy ids (default: the whole corpus).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<Vec<String>>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunConfigError {
    #[error("cannot read run config {path}: {detail}")]
    Unreadable { path: String, detail: String },
    #[error("invalid run config {path}: {detail}")]
    Invalid { path: String, detail: String },
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, RunConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunConfigError::Unreadable {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| RunConfigError::Invalid {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
        if config.template_id.trim().is_empty() {
            return Err(RunConfigError::Invalid {
                path: path.display().to_string(),
                detail: "template_id is empty".into(),
            });
        }
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<(), std::io::Error> {
        let mut text = serde_json::to_string_pretty(self).expect("run config serializes");
        text.push('\n');
        std::fs::write(path, text)
    }

    /// Scoring options as configured.
    pub fn score_options(&self) -> crate::metrics::ScoreOptions {
        crate::metrics::ScoreOptions {
            include_other: self.include_other,
            exclude_empty_gold: self.exclude_empty_gold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::BackendKind;

    fn sample() -> RunConfig {
        RunConfig {
            corpus: CorpusSpec { root: "data/fixture/corpus.json".into(), format: CorpusFormat::Json },
            template_id: "annotation.II".into(),
            model: ModelConfig::default(),
            keyword_table: None,
            catalog: None,
            bootstrap: BootstrapConfig::default(),
            output_dir: "runs".into(),
            include_other: false,
            exclude_empty_gold: false,
            scope: None,
        }
    }

    #[test]
    fn round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let config = sample();
        config.save(&path).unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        assert_eq!(loaded, config);
        assert_eq!(loaded.model.backend, BackendKind::RuleStub);
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{
  "corpus": { "root": "corpus.json", "format": "json" },
  "template_id": "annotation.I",
  "model": { "backend": "rule_stub", "model_name": "rule-stub" },
  "output_dir": "runs"
}"#,
        )
        .unwrap();
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.bootstrap, BootstrapConfig::default());
        assert!(!config.include_other);
        assert_eq!(config.model.max_tokens, 512);
        assert!(config.scope.is_none());
    }

    #[test]
    fn unknown_fields_and_bad_json_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{ "corpus": { "root": "c", "format": "json" }, "template_id": "annotation.I",
                 "model": { "backend": "rule_stub", "model_name": "m" },
                 "output_dir": "runs", "includeOther": true }"#,
        )
        .unwrap();
        assert!(matches!(RunConfig::load(&path), Err(RunConfigError::Invalid { .. })));

        std::fs::write(&path, "not json").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(RunConfigError::Invalid { .. })));

        let missing = dir.path().join("absent.json");
        assert!(matches!(RunConfig::load(&missing), Err(RunConfigError::Unreadable { .. })));
    }
}
