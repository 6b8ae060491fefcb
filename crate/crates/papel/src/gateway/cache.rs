//! Append-only exchange cache.
//!
//! One JSONL file per model under the cache directory:
//! `<cache_dir>/<model_name>/exchanges.jsonl`, one [`Exchange`] per line.
//! The file is only ever appended to; when the same request hash occurs on
//! several lines the last one wins (a deliberate re-recording refreshes the
//! entry). Corrupt lines are reported with their line number rather than
//! skipped.

use super::{Exchange, GatewayError};
use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct ExchangeCache {
    path: PathBuf,
    entries: HashMap<String, Exchange>,
}

impl ExchangeCache {
    /// Open (creating directories and an empty file if needed) the cache for
    /// one model and load its index.
    pub fn open(cache_dir: &Path, model_name: &str) -> Result<ExchangeCache, GatewayError> {
        let dir = cache_dir.join(sanitize_model_name(model_name));
        std::fs::create_dir_all(&dir)?;
        let path = dir.join("exchanges.jsonl");
        let mut entries = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let exchange: Exchange =
                    serde_json::from_str(line).map_err(|e| GatewayError::Cache {
                        path: path.display().to_string(),
                        line: i + 1,
                        detail: e.to_string(),
                    })?;
                entries.insert(exchange.request_hash.clone(), exchange);
            }
        }
        Ok(ExchangeCache { path, entries })
    }

    pub fn lookup(&self, request_hash: &str) -> Option<&Exchange> {
        self.entries.get(request_hash)
    }

    /// Append one exchange to the file and the in-memory index.
    pub fn append(&mut self, exchange: &Exchange) -> Result<(), GatewayError> {
        let line = serde_json::to_string(exchange).map_err(|e| GatewayError::Cache {
            path: self.path.display().to_string(),
            line: 0,
            detail: format!("serialization failed: {e}"),
        })?;
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path)?;
        writeln!(file, "{line}")?;
        self.entries
            .insert(exchange.request_hash.clone(), exchange.clone());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Model names may contain path separators (`openai/gpt-4o`); keep cache
/// directories flat and predictable.
fn sanitize_model_name(model_name: &str) -> String {
    model_name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ExchangeRequest;

    fn exchange(user_text: &str, response: &str) -> Exchange {
        let request = ExchangeRequest {
            model_name: "m".into(),
            temperature: 0.0,
            max_tokens: 64,
            system_text: "sys".into(),
            user_text: user_text.into(),
        };
        Exchange {
            request_hash: request.hash(),
            request,
            response_text: response.into(),
            latency_ms: 1,
            backend_tag: "test".into(),
            timestamp: "2024-01-01T00:00:00.000Z".into(),
        }
    }

    #[test]
    fn append_then_reopen_finds_entries() {
        let dir = tempfile::tempdir().unwrap();
        let a = exchange("one", "response one");
        let b = exchange("two", "response two");
        {
            let mut cache = ExchangeCache::open(dir.path(), "m").unwrap();
            cache.append(&a).unwrap();
            cache.append(&b).unwrap();
        }
        let cache = ExchangeCache::open(dir.path(), "m").unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.lookup(&a.request_hash).unwrap().response_text, "response one");
        assert_eq!(cache.lookup(&b.request_hash).unwrap().response_text, "response two");
        assert!(cache.lookup("unknown").is_none());
    }

    #[test]
    fn last_entry_wins_for_duplicate_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let first = exchange("one", "old");
        let mut second = first.clone();
        second.response_text = "new".into();
        {
            let mut cache = ExchangeCache::open(dir.path(), "m").unwrap();
            cache.append(&first).unwrap();
            cache.append(&second).unwrap();
        }
        let cache = ExchangeCache::open(dir.path(), "m").unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(cache.lookup(&first.request_hash).unwrap().response_text, "new");
    }

    #[test]
    fn corrupt_lines_are_reported_with_position() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut cache = ExchangeCache::open(dir.path(), "m").unwrap();
            cache.append(&exchange("one", "fine")).unwrap();
        }
        let path = dir.path().join("m").join("exchanges.jsonl");
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{not json\n");
        std::fs::write(&path, text).unwrap();
        let err = ExchangeCache::open(dir.path(), "m").unwrap_err();
        match err {
            GatewayError::Cache { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn model_names_with_separators_stay_in_one_directory() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ExchangeCache::open(dir.path(), "openai/gpt-4o").unwrap();
        assert!(cache.path().starts_with(dir.path().join("openai_gpt-4o")));
    }
}
