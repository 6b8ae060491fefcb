//! Model gateway: one `complete()` call, three interchangeable backends.
//!
//! * `http_chat` — POSTs to an OpenAI-compatible `/chat/completions`
//!   endpoint, with bounded retries and an append-only response cache that
//!   is always consulted first.
//! * `replay` — serves exclusively from a previously recorded cache; a
//!   request that was never recorded is a hard error. This makes entire
//!   evaluation runs reproducible offline.
//! * `rule_stub` — a deterministic local responder driven by keyword rules
//!   (annotation prompts) and a scripted lookup (contradiction prompts), so
//!   pipelines can be tested hermetically.
//!
//! Every successful call yields an [`Exchange`]: the full request, the
//! response text, and provenance. Exchanges are keyed by a request hash over
//! `(model_name, temperature, max_tokens, system_text, user_text)`.

mod cache;
mod http;
mod stub;

pub use cache::ExchangeCache;
pub use stub::{RuleStub, ScriptEntry, StubRule, StubRules, StubScript};

use crate::hashing;
use crate::prompt::RenderedPrompt;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    Replay,
    RuleStub,
}

/// Everything needed to talk to one model. Serializable so that run
/// manifests can pin the exact configuration (the API key itself is never
/// stored, only the name of the environment variable holding it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub backend: BackendKind,
    pub model_name: String,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default = "defaults::temperature")]
    pub temperature: f64,
    #[serde(default = "defaults::max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "defaults::timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "defaults::max_retries")]
    pub max_retries: u32,
    #[serde(default = "defaults::retry_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default = "defaults::api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "defaults::parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub stub_rules: Option<PathBuf>,
    #[serde(default)]
    pub stub_script: Option<PathBuf>,
}

mod defaults {
    pub fn temperature() -> f64 {
        0.0
    }
    pub fn max_tokens() -> u32 {
        512
    }
    pub fn timeout_s() -> f64 {
        60.0
    }
    pub fn max_retries() -> u32 {
        3
    }
    pub fn retry_backoff_ms() -> u64 {
        250
    }
    pub fn api_key_env() -> String {
        "PAPEL_API_KEY".to_string()
    }
    pub fn parallelism() -> usize {
        4
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backend: BackendKind::RuleStub,
            model_name: "rule-stub".to_string(),
            base_url: None,
            temperature: defaults::temperature(),
            max_tokens: defaults::max_tokens(),
            timeout_s: defaults::timeout_s(),
            max_retries: defaults::max_retries(),
            retry_backoff_ms: defaults::retry_backoff_ms(),
            api_key_env: defaults::api_key_env(),
            cache_dir: None,
            parallelism: defaults::parallelism(),
            stub_rules: None,
            stub_script: None,
        }
    }
}

/// The request half of an exchange: the exact parameter tuple the request
/// hash is computed over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRequest {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub system_text: String,
    pub user_text: String,
}

impl ExchangeRequest {
    pub fn hash(&self) -> String {
        hashing::request_hash(
            &self.model_name,
            self.temperature,
            self.max_tokens,
            &self.system_text,
            &self.user_text,
        )
    }
}

/// One request/response pair with provenance. This is the unit stored in
/// the cache (one JSON object per line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request_hash: String,
    pub request: ExchangeRequest,
    pub response_text: String,
    pub latency_ms: u64,
    pub backend_tag: String,
    pub timestamp: String,
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("auth error: environment variable {env_var} is not set (or empty)")]
    Auth { env_var: String },
    #[error("rate limited: gave up after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("request timed out after {attempts} attempts (timeout {timeout_s}s)")]
    Timeout { attempts: u32, timeout_s: f64 },
    #[error("cache miss for request {request_hash} (replay backend has no recording)")]
    CacheMiss { request_hash: String },
    #[error("protocol error: {detail}")]
    Protocol { detail: String },
    #[error("cache file {path} line {line}: {detail}")]
    Cache { path: String, line: usize, detail: String },
    #[error("gateway configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Result of [`Gateway::warm_cache`]: how many prompts were already
/// recorded, how many were not, and how many were fetched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WarmSummary {
    pub hits: usize,
    pub misses: usize,
    pub fetched: usize,
}

enum BackendImpl {
    HttpChat { client: reqwest::blocking::Client },
    Replay,
    RuleStub { stub: RuleStub },
}

/// A configured connection to one model.
pub struct Gateway {
    config: ModelConfig,
    backend: BackendImpl,
    cache: Option<Mutex<ExchangeCache>>,
}

impl Gateway {
    pub fn new(config: ModelConfig) -> Result<Gateway, GatewayError> {
        if config.model_name.trim().is_empty() {
            return Err(GatewayError::Config("model_name is empty".into()));
        }
        let cache = match (&config.backend, &config.cache_dir) {
            (BackendKind::Replay, None) => {
                return Err(GatewayError::Config(
                    "replay backend requires cache_dir".into(),
                ))
            }
            (BackendKind::RuleStub, _) => None,
            (_, Some(dir)) => Some(Mutex::new(ExchangeCache::open(dir, &config.model_name)?)),
            (_, None) => None,
        };
        let backend = match config.backend {
            BackendKind::HttpChat => {
                let base_url = config.base_url.as_deref().unwrap_or("");
                if base_url.trim().is_empty() {
                    return Err(GatewayError::Config(
                        "http_chat backend requires base_url".into(),
                    ));
                }
                let client = reqwest::blocking::Client::builder()
                    .timeout(std::time::Duration::from_secs_f64(config.timeout_s))
                    .build()
                    .map_err(|e| GatewayError::Config(e.to_string()))?;
                BackendImpl::HttpChat { client }
            }
            BackendKind::Replay => BackendImpl::Replay,
            BackendKind::RuleStub => {
                let stub = RuleStub::from_config(&config)?;
                BackendImpl::RuleStub { stub }
            }
        };
        Ok(Gateway { config, backend, cache })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn request_for(&self, prompt: &RenderedPrompt) -> ExchangeRequest {
        ExchangeRequest {
            model_name: self.config.model_name.clone(),
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            system_text: prompt.system_text.clone(),
            user_text: prompt.user_text.clone(),
        }
    }

    /// Complete one prompt. Replay serves from the cache only; http_chat
    /// consults the cache first and records fresh responses; the rule stub
    /// answers locally.
    pub fn complete(&self, prompt: &RenderedPrompt) -> Result<Exchange, GatewayError> {
        let request = self.request_for(prompt);
        let request_hash = request.hash();

        if let Some(cache) = &self.cache {
            let cache = cache.lock().expect("cache lock");
            if let Some(exchange) = cache.lookup(&request_hash) {
                return Ok(exchange.clone());
            }
        }

        match &self.backend {
            BackendImpl::Replay => Err(GatewayError::CacheMiss { request_hash }),
            BackendImpl::RuleStub { stub } => Ok(Exchange {
                request_hash,
                response_text: stub.respond(prompt),
                request,
                latency_ms: 0,
                backend_tag: "rule_stub".to_string(),
                timestamp: now_rfc3339(),
            }),
            BackendImpl::HttpChat { client } => {
                let api_key = std::env::var(&self.config.api_key_env)
                    .ok()
                    .filter(|v| !v.trim().is_empty())
                    .ok_or_else(|| GatewayError::Auth {
                        env_var: self.config.api_key_env.clone(),
                    })?;
                let (response_text, latency_ms) =
                    http::complete(client, &self.config, &api_key, &request)?;
                let exchange = Exchange {
                    request_hash,
                    request,
                    response_text,
                    latency_ms,
                    backend_tag: format!("http_chat:{}", self.config.model_name),
                    timestamp: now_rfc3339(),
                };
                if let Some(cache) = &self.cache {
                    cache.lock().expect("cache lock").append(&exchange)?;
                }
                Ok(exchange)
            }
        }
    }

    /// Pre-fetch a batch of prompts into the cache (http_chat only).
    /// Duplicate prompts count once. Aborts on the first fetch error.
    pub fn warm_cache(&self, prompts: &[RenderedPrompt]) -> Result<WarmSummary, GatewayError> {
        if self.config.backend != BackendKind::HttpChat {
            return Err(GatewayError::Config(
                "warm_cache requires the http_chat backend".into(),
            ));
        }
        if self.cache.is_none() {
            return Err(GatewayError::Config(
                "warm_cache requires cache_dir to be configured".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        let mut summary = WarmSummary { hits: 0, misses: 0, fetched: 0 };
        for prompt in prompts {
            let hash = self.request_for(prompt).hash();
            if !seen.insert(hash.clone()) {
                continue;
            }
            let cached = {
                let cache = self.cache.as_ref().unwrap().lock().expect("cache lock");
                cache.lookup(&hash).is_some()
            };
            if cached {
                summary.hits += 1;
            } else {
                summary.misses += 1;
                self.complete(prompt)?;
                summary.fetched += 1;
            }
        }
        Ok(summary)
    }
}

pub(crate) fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
