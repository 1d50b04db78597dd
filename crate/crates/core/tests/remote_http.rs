use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use claimprobe_core::domain::Polarity;
use claimprobe_core::gateway::remote::RetryPolicy;
use claimprobe_core::gateway::{Backend, GatewayError, RemoteBackend, RemoteConfig, RemoteKind, SampleRequest};
use claimprobe_core::probegen::Probe;

/// Serves canned (status, extra header, body) replies, one per connection,
/// and records each request's head and body.
fn serve(replies: Vec<(u16, &'static str, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, header, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
                head.push_str(&line);
            }
            let mut request_body = vec![0u8; length];
            reader.read_exact(&mut request_body).unwrap();
            log.lock().unwrap().push(format!("{head}\n{}", String::from_utf8_lossy(&request_body)));
            let mut stream = stream;
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n{header}\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    (format!("http://{addr}/v1/chat/completions"), seen)
}

fn probe() -> Probe {
    Probe {
        id: "ag-original".into(),
        polarity: Polarity::Agree,
        is_paraphrase: false,
        prompt: "Is the claim true?".into(),
    }
}

fn config(endpoint: String, auth_env: Option<&str>) -> RemoteConfig {
    let mut c = RemoteConfig::new(RemoteKind::Chat, endpoint, "test-model");
    c.auth_env = auth_env.map(str::to_string);
    c.retry = RetryPolicy {
        max_retries: 3,
        backoff_base_ms: 5,
    };
    c.timeout_secs = 5;
    c
}

fn generate(backend: &RemoteBackend) -> Result<String, GatewayError> {
    let p = probe();
    backend.generate(&SampleRequest {
        claim_id: "c",
        document_id: "d",
        probe: &p,
        sample_index: 0,
    })
}

const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"Yes."}}]}"#;

#[test]
fn retries_rate_limits_and_sends_bearer_token() {
    std::env::set_var("CLAIMPROBE_TEST_KEY_A", "sk-test-secret");
    let (endpoint, seen) = serve(vec![
        (429, "Retry-After: 0\r\n", "{}".into()),
        (503, "", "{}".into()),
        (200, "", OK.into()),
    ]);
    let backend = RemoteBackend::new(config(endpoint, Some("CLAIMPROBE_TEST_KEY_A"))).unwrap();
    assert_eq!(generate(&backend).unwrap(), "Yes.");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    for request in seen.iter() {
        assert!(request.to_ascii_lowercase().contains("authorization: bearer sk-test-secret"));
        assert!(request.contains("\"model\":\"test-model\""));
        assert!(request.contains("Is the claim true?"));
    }
}

#[test]
fn gives_up_after_the_retry_budget() {
    std::env::set_var("CLAIMPROBE_TEST_KEY_B", "sk-hidden-value");
    let replies = (0..4).map(|_| (500, "", "{}".to_string())).collect();
    let (endpoint, seen) = serve(replies);
    let backend = RemoteBackend::new(config(endpoint, Some("CLAIMPROBE_TEST_KEY_B"))).unwrap();
    let err = generate(&backend).unwrap_err();
    assert!(matches!(err, GatewayError::BackendUnavailable(_)));
    assert!(err.to_string().contains("4 attempts"));
    assert!(!err.to_string().contains("sk-hidden-value"));
    assert_eq!(seen.lock().unwrap().len(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let (endpoint, seen) = serve(vec![(401, "", "{}".into()), (200, "", OK.into())]);
    let backend = RemoteBackend::new(config(endpoint, None)).unwrap();
    assert!(matches!(generate(&backend), Err(GatewayError::BackendUnavailable(_))));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn missing_credential_variable_is_reported_by_name() {
    let backend = RemoteBackend::new(config("http://127.0.0.1:9/x".into(), Some("CLAIMPROBE_TEST_UNSET"))).unwrap();
    let err = generate(&backend).unwrap_err();
    assert!(matches!(err, GatewayError::BackendUnavailable(ref m) if m.contains("CLAIMPROBE_TEST_UNSET")));
}

#[test]
fn unreachable_endpoint_is_backend_unavailable() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let mut c = config(format!("http://{addr}/v1"), None);
    c.retry.max_retries = 1;
    let backend = RemoteBackend::new(c).unwrap();
    assert!(matches!(generate(&backend), Err(GatewayError::BackendUnavailable(_))));
}
