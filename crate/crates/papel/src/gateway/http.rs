//! OpenAI-compatible chat-completions client with bounded retries.
//!
//! Retries apply only to transport errors, HTTP 429, and HTTP 5xx, with
//! exponential backoff plus jitter. Anything else (malformed body, unexpected
//! status) fails immediately with a body excerpt for diagnosis.

use super::{ExchangeRequest, GatewayError, ModelConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ChatResponseMessage {
    content: String,
}

enum Failure {
    Retryable(String),
    RateLimited,
    TimedOut,
}

/// POST the request, retrying up to `max_retries` additional times. Returns
/// the assistant text and the total latency (including retries).
pub(super) fn complete(
    client: &reqwest::blocking::Client,
    config: &ModelConfig,
    api_key: &str,
    request: &ExchangeRequest,
) -> Result<(String, u64), GatewayError> {
    let base = config.base_url.as_deref().unwrap_or("").trim_end_matches('/');
    let url = format!("{base}/chat/completions");
    let body = ChatRequest {
        model: &request.model_name,
        messages: vec![
            ChatMessage { role: "system", content: &request.system_text },
            ChatMessage { role: "user", content: &request.user_text },
        ],
        temperature: request.temperature,
        max_tokens: request.max_tokens,
    };

    let attempts = config.max_retries + 1;
    let started = Instant::now();
    let mut last_failure = Failure::Retryable("no attempt made".into());

    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(backoff_delay(config.retry_backoff_ms, attempt));
        }
        match try_once(client, &url, api_key, &body) {
            Ok(text) => {
                let latency_ms = started.elapsed().as_millis() as u64;
                return Ok((text, latency_ms));
            }
            Err(TryError::Fatal(error)) => return Err(error),
            Err(TryError::Transient(failure)) => last_failure = failure,
        }
    }

    Err(match last_failure {
        Failure::RateLimited => GatewayError::RateLimited { attempts },
        Failure::TimedOut => GatewayError::Timeout { attempts, timeout_s: config.timeout_s },
        Failure::Retryable(detail) => GatewayError::Protocol {
            detail: format!("giving up after {attempts} attempts: {detail}"),
        },
    })
}

enum TryError {
    Transient(Failure),
    Fatal(GatewayError),
}

fn try_once(
    client: &reqwest::blocking::Client,
    url: &str,
    api_key: &str,
    body: &ChatRequest<'_>,
) -> Result<String, TryError> {
    let response = client
        .post(url)
        .bearer_auth(api_key)
        .json(body)
        .send()
        .map_err(|e| {
            if e.is_timeout() {
                TryError::Transient(Failure::TimedOut)
            } else {
                TryError::Transient(Failure::Retryable(e.to_string()))
            }
        })?;

    let status = response.status();
    let text = response
        .text()
        .map_err(|e| TryError::Transient(Failure::Retryable(e.to_string())))?;

    if status.as_u16() == 429 {
        return Err(TryError::Transient(Failure::RateLimited));
    }
    if status.is_server_error() {
        return Err(TryError::Transient(Failure::Retryable(format!(
            "HTTP {status}: {}",
            excerpt(&text)
        ))));
    }
    if !status.is_success() {
        return Err(TryError::Fatal(GatewayError::Protocol {
            detail: format!("HTTP {status}: {}", excerpt(&text)),
        }));
    }

    let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| {
        TryError::Fatal(GatewayError::Protocol {
            detail: format!("unparseable completion body ({e}): {}", excerpt(&text)),
        })
    })?;
    match parsed.choices.into_iter().next() {
        Some(choice) => Ok(choice.message.content),
        None => Err(TryError::Fatal(GatewayError::Protocol {
            detail: format!("completion body has no choices: {}", excerpt(&text)),
        })),
    }
}

fn backoff_delay(base_ms: u64, attempt: u32) -> Duration {
    let exp = base_ms.saturating_mul(1u64 << (attempt - 1).min(16));
    let jitter = if base_ms == 0 { 0 } else { rand::thread_rng().gen_range(0..=base_ms / 2) };
    Duration::from_millis(exp + jitter)
}

fn excerpt(text: &str) -> String {
    const LIMIT: usize = 200;
    let trimmed = text.trim();
    if trimmed.chars().count() <= LIMIT {
        trimmed.to_string()
    } else {
        let cut: String = trimmed.chars().take(LIMIT).collect();
        format!("{cut}…")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excerpt_truncates_long_bodies() {
        let long = "x".repeat(500);
        let cut = excerpt(&long);
        assert!(cut.chars().count() <= 201);
        assert!(cut.ends_with('…'));
        assert_eq!(excerpt("short"), "short");
    }

    #[test]
    fn backoff_grows_with_attempts() {
        let d1 = backoff_delay(100, 1);
        let d3 = backoff_delay(100, 3);
        assert!(d1 >= Duration::from_millis(100));
        assert!(d1 <= Duration::from_millis(150));
        assert!(d3 >= Duration::from_millis(400));
        assert!(d3 <= Duration::from_millis(450));
        assert_eq!(backoff_delay(0, 5), Duration::from_millis(0));
    }

    #[test]
    fn chat_request_serializes_in_openai_shape() {
        let body = ChatRequest {
            model: "gpt-test",
            messages: vec![
                ChatMessage { role: "system", content: "sys" },
                ChatMessage { role: "user", content: "usr" },
            ],
            temperature: 0.0,
            max_tokens: 64,
        };
        let json: serde_json::Value =
            serde_json::from_str(&serde_json::to_string(&body).unwrap()).unwrap();
        assert_eq!(json["model"], "gpt-test");
        assert_eq!(json["messages"][0]["role"], "system");
        assert_eq!(json["messages"][1]["content"], "usr");
        assert_eq!(json["max_tokens"], 64);
    }

    #[test]
    fn chat_response_parses_first_choice() {
        let body = r#"{"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"Data Security"},"finish_reason":"stop"}],"usage":{"total_tokens":10}}"#;
        let parsed: ChatResponse = serde_json::from_str(body).unwrap();
        assert_eq!(parsed.choices[0].message.content, "Data Security");
    }
}
