//! Integration tests driving the http_chat backend against a local
//! hand-rolled HTTP server: retry behavior, cache-first short-circuiting,
//! and the record/replay round trip.

use papel::gateway::{BackendKind, Gateway, GatewayError, ModelConfig};
use papel::prompt::RenderedPrompt;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

/// One canned response the server will play for one incoming request.
#[derive(Clone)]
struct Canned {
    status: u16,
    body: String,
    delay: Duration,
}

impl Canned {
    fn ok(content: &str) -> Canned {
        Canned { status: 200, body: chat_body(content), delay: Duration::ZERO }
    }

    fn status(status: u16, body: &str) -> Canned {
        Canned { status, body: body.to_string(), delay: Duration::ZERO }
    }
}

fn chat_body(content: &str) -> String {
    serde_json::json!({
        "id": "chatcmpl-test",
        "choices": [
            { "index": 0, "message": { "role": "assistant", "content": content }, "finish_reason": "stop" }
        ]
    })
    .to_string()
}

struct TestServer {
    base_url: String,
    hits: Arc<AtomicUsize>,
    requests: Arc<Mutex<Vec<String>>>,
}

/// Serve exactly `responses.len()` requests on a fresh local port, then let
/// the thread die. The raw text of each request is captured for inspection.
fn spawn_server(responses: Vec<Canned>) -> TestServer {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind test server");
    let base_url = format!("http://{}/v1", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let requests: Arc<Mutex<Vec<String>>> = Arc::new(Mutex::new(Vec::new()));

    let thread_hits = Arc::clone(&hits);
    let thread_requests = Arc::clone(&requests);
    thread::spawn(move || {
        for canned in responses {
            let (mut stream, _) = match listener.accept() {
                Ok(pair) => pair,
                Err(_) => return,
            };
            let request = read_http_request(&mut stream);
            thread_requests.lock().unwrap().push(request);
            thread_hits.fetch_add(1, Ordering::SeqCst);
            if !canned.delay.is_zero() {
                thread::sleep(canned.delay);
            }
            write_http_response(&mut stream, canned.status, &canned.body);
        }
    });

    TestServer { base_url, hits, requests }
}

fn read_http_request(stream: &mut TcpStream) -> String {
    let mut buffer = Vec::new();
    let mut chunk = [0u8; 1024];
    loop {
        let n = match stream.read(&mut chunk) {
            Ok(0) | Err(_) => break,
            Ok(n) => n,
        };
        buffer.extend_from_slice(&chunk[..n]);
        if let Some(header_end) = find(&buffer, b"\r\n\r\n") {
            let headers = String::from_utf8_lossy(&buffer[..header_end]).to_string();
            let content_length = headers
                .lines()
                .find_map(|line| {
                    let (name, value) = line.split_once(':')?;
                    name.eq_ignore_ascii_case("content-length")
                        .then(|| value.trim().parse::<usize>().ok())?
                })
                .unwrap_or(0);
            if buffer.len() >= header_end + 4 + content_length {
                break;
            }
        }
    }
    String::from_utf8_lossy(&buffer).to_string()
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn write_http_response(stream: &mut TcpStream, status: u16, body: &str) {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        _ => "Unknown",
    };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(response.as_bytes());
}

fn prompt(text: &str) -> RenderedPrompt {
    RenderedPrompt {
        template_id: "annotation.test".to_string(),
        system_text: "You are a test system.".to_string(),
        user_text: text.to_string(),
        content_hash: String::new(),
    }
}

fn http_config(base_url: &str, cache_dir: &std::path::Path, key_env: &str) -> ModelConfig {
    ModelConfig {
        backend: BackendKind::HttpChat,
        model_name: "gpt-test".to_string(),
        base_url: Some(base_url.to_string()),
        timeout_s: 5.0,
        max_retries: 3,
        retry_backoff_ms: 1,
        api_key_env: key_env.to_string(),
        cache_dir: Some(cache_dir.to_path_buf()),
        ..ModelConfig::default()
    }
}

#[test]
fn completes_records_and_replays() {
    let server = spawn_server(vec![Canned::ok("Data Security")]);
    let dir = tempfile::tempdir().unwrap();
    std::env::set_var("PAPEL_TEST_KEY_ROUNDTRIP", "test-key-123");

    let gateway = Gateway::new(http_config(
        &server.base_url,
        dir.path(),
        "PAPEL_TEST_KEY_ROUNDTRIP",
    ))
    .unwrap();
    let exchange = gateway.complete(&prompt("Please classify this segment.")).unwrap();
    assert_eq!(exchange.response_text, "Data Security");
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);

    // The wire format is the familiar chat-completions shape with the
    // bearer key and both messages.
    let raw = server.requests.lock().unwrap()[0].clone();
    assert!(raw.starts_with("POST /v1/chat/completions HTTP/1.1\r\n"));
    assert!(raw.contains("authorization: Bearer test-key-123")
        || raw.contains("Authorization: Bearer test-key-123"));
    assert!(raw.contains("\"model\":\"gpt-test\""));
    assert!(raw.contains("You are a test system."));

    // The exchange was recorded on disk under the sanitized model name.
    let cache_file = dir.path().join("gpt-test").join("exchanges.jsonl");
    assert!(cache_file.is_file(), "missing {}", cache_file.display());

    // A second completion of the same prompt is served from the cache: the
    // server (which has no responses left) is never contacted again.
    let again = gateway.complete(&prompt("Please classify this segment.")).unwrap();
    assert_eq!(again.response_text, "Data Security");
    assert_eq!(again.request_hash, exchange.request_hash);
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);

    // Replay over the same cache directory needs no server at all.
    let replay = Gateway::new(ModelConfig {
        backend: BackendKind::Replay,
        model_name: "gpt-test".to_string(),
        cache_dir: Some(dir.path().to_path_buf()),
        ..ModelConfig::default()
    })
    .unwrap();
    let replayed = replay.complete(&prompt("Please classify this segment.")).unwrap();
    assert_eq!(replayed.response_text, "Data Security");
    assert_eq!(replayed.request_hash, exchange.request_hash);

    // A prompt that was never recorded is a hard cache miss.
    let miss = replay.complete(&prompt("Never seen before."));
    assert!(matches!(miss, Err(GatewayError::CacheMiss { .. })));
}

#[test]
fn retries_past_rate_limits_and_server_errors() {
    let server = spawn_server(vec![
        Canned::status(429, "slow down"),
        Canned::status(500, "flaky"),
        Canned::ok("User Choice/Control"),
    ]);
    let dir = tempfile::tempdir().unwrap();
    std::env::set_var("PAPEL_TEST_KEY_RETRY", "k");

    let gateway =
        Gateway::new(http_config(&server.base_url, dir.path(), "PAPEL_TEST_KEY_RETRY")).unwrap();
    let exchange = gateway.complete(&prompt("segment")).unwrap();
    assert_eq!(exchange.response_text, "User Choice/Control");
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn rate_limit_exhaustion_reports_attempts() {
    let server = spawn_server(vec![
        Canned::status(429, "no"),
        Canned::status(429, "still no"),
    ]);
    let dir = tempfile::tempdir().unwrap();
    std::env::set_var("PAPEL_TEST_KEY_LIMIT", "k");

    let mut config = http_config(&server.base_url, dir.path(), "PAPEL_TEST_KEY_LIMIT");
    config.max_retries = 1;
    let gateway = Gateway::new(config).unwrap();
    let result = gateway.complete(&prompt("segment"));
    match result {
        Err(GatewayError::RateLimited { attempts }) => assert_eq!(attempts, 2),
        other => panic!("expected RateLimited, got {other:?}"),
    }
    assert_eq!(server.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn client_errors_fail_without_retry() {
    let server = spawn_server(vec![Canned::status(400, "bad request")]);
    let dir = tempfile::tempdir().unwrap();
    std::env::set_var("PAPEL_TEST_KEY_FATAL", "k");

    let gateway =
        Gateway::new(http_config(&server.base_url, dir.path(), "PAPEL_TEST_KEY_FATAL")).unwrap();
    let result = gateway.complete(&prompt("segment"));
    match result {
        Err(GatewayError::Protocol { detail }) => assert!(detail.contains("400")),
        other => panic!("expected Protocol, got {other:?}"),
    }
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn timeouts_are_classified() {
    let server = spawn_server(vec![Canned {
        status: 200,
        body: chat_body("too late"),
        delay: Duration::from_millis(1500),
    }]);
    let dir = tempfile::tempdir().unwrap();
    std::env::set_var("PAPEL_TEST_KEY_TIMEOUT", "k");

    let mut config = http_config(&server.base_url, dir.path(), "PAPEL_TEST_KEY_TIMEOUT");
    config.timeout_s = 0.2;
    config.max_retries = 0;
    let gateway = Gateway::new(config).unwrap();
    let result = gateway.complete(&prompt("segment"));
    match result {
        Err(GatewayError::Timeout { attempts, .. }) => assert_eq!(attempts, 1),
        other => panic!("expected Timeout, got {other:?}"),
    }
}

#[test]
fn missing_api_key_fails_before_any_request() {
    let server = spawn_server(vec![Canned::ok("unused")]);
    let dir = tempfile::tempdir().unwrap();
    std::env::remove_var("PAPEL_TEST_KEY_ABSENT");

    let gateway =
        Gateway::new(http_config(&server.base_url, dir.path(), "PAPEL_TEST_KEY_ABSENT")).unwrap();
    let result = gateway.complete(&prompt("segment"));
    match result {
        Err(GatewayError::Auth { env_var }) => assert_eq!(env_var, "PAPEL_TEST_KEY_ABSENT"),
        other => panic!("expected Auth, got {other:?}"),
    }
    assert_eq!(server.hits.load(Ordering::SeqCst), 0);
}

#[test]
fn warm_cache_counts_duplicates_once() {
    let server = spawn_server(vec![Canned::ok("First answer"), Canned::ok("Second answer")]);
    let dir = tempfile::tempdir().unwrap();
    std::env::set_var("PAPEL_TEST_KEY_WARM", "k");

    let gateway =
        Gateway::new(http_config(&server.base_url, dir.path(), "PAPEL_TEST_KEY_WARM")).unwrap();
    let batch = vec![prompt("alpha"), prompt("beta"), prompt("alpha")];
    let summary = gateway.warm_cache(&batch).unwrap();
    assert_eq!(summary.hits, 0);
    assert_eq!(summary.misses, 2);
    assert_eq!(summary.fetched, 2);
    assert_eq!(server.hits.load(Ordering::SeqCst), 2);

    // Warming the same batch again is a pure cache operation.
    let summary = gateway.warm_cache(&batch).unwrap();
    assert_eq!(summary.hits, 2);
    assert_eq!(summary.misses, 0);
    assert_eq!(summary.fetched, 0);
    assert_eq!(server.hits.load(Ordering::SeqCst), 2);
}
