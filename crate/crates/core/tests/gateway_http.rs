use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use drivetext_core::gateway::{
    cache_key, canonical_request_bytes, GatewayError, HttpBackend, MockBackend, MockRule, ResponseCache, RetryPolicy,
};
use drivetext_core::{ChatRequest, Gateway};

fn req(user: &str) -> ChatRequest {
    ChatRequest {
        model_id: "gpt-test".into(),
        system_text: "system".into(),
        user_text: user.into(),
        temperature: 0.0,
        max_tokens: 32,
    }
}

/// Serve canned `(status, body)` responses in order, one per connection.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for (status, body) in responses {
            let Ok((mut stream, _)) = listener.accept() else { return };
            counter.fetch_add(1, Ordering::SeqCst);
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1/chat/completions"), hits)
}

fn ok_body(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_retries: 3,
        base_delay: Duration::from_millis(5),
    }
}

#[test]
fn server_errors_are_retried_then_succeed() {
    let (url, hits) = serve(vec![
        (503, "{}".into()),
        (429, "{}".into()),
        (200, ok_body("LABEL: Pedestrian Interaction")),
    ]);
    let gw = Gateway::new(Arc::new(HttpBackend::new(
        url,
        Some("k".into()),
        Duration::from_secs(5),
    )))
    .with_retry(fast_retry());
    let r = gw.complete(&req("hello")).unwrap();
    assert_eq!(r.text, "LABEL: Pedestrian Interaction");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    assert_eq!(gw.backend_calls(), 3);
}

#[test]
fn client_error_is_not_retried_and_carries_body() {
    let (url, hits) = serve(vec![
        (400, "{\"error\":\"bad model name\"}".into()),
        (200, ok_body("x")),
    ]);
    let gw = Gateway::new(Arc::new(HttpBackend::new(url, None, Duration::from_secs(5)))).with_retry(fast_retry());
    match gw.complete(&req("hello")).unwrap_err() {
        GatewayError::Status { status, body } => {
            assert_eq!(status, 400);
            assert!(body.contains("bad model name"));
        }
        e => panic!("{e:?}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn retries_are_bounded() {
    let (url, hits) = serve(vec![(500, "{}".into()); 6]);
    let gw = Gateway::new(Arc::new(HttpBackend::new(url, None, Duration::from_secs(5)))).with_retry(fast_retry());
    assert!(gw.complete(&req("hello")).is_err());
    assert_eq!(hits.load(Ordering::SeqCst), 4);
}

#[test]
fn refused_connection_is_a_retryable_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let gw = Gateway::new(Arc::new(HttpBackend::new(
        format!("http://127.0.0.1:{port}/v1"),
        None,
        Duration::from_secs(2),
    )))
    .with_retry(RetryPolicy {
        max_retries: 1,
        base_delay: Duration::from_millis(1),
    });
    let e = gw.complete(&req("x")).unwrap_err();
    assert!(e.is_retryable(), "{e:?}");
    assert_eq!(gw.backend_calls(), 2);
}

#[test]
fn cache_key_matches_external_digest() {
    let r = req("The car stops because the light is red");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("canonical.json");
    std::fs::write(&path, canonical_request_bytes(&r)).unwrap();
    let out = match Command::new("sha256sum").arg(&path).output() {
        Ok(o) if o.status.success() => o,
        _ => {
            eprintln!("sha256sum not available; skipping digest cross-check");
            return;
        }
    };
    let external = String::from_utf8(out.stdout).unwrap();
    assert_eq!(external.split_whitespace().next().unwrap(), cache_key(&r));
}

#[test]
fn cache_persists_across_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let mock = MockBackend::new(vec![MockRule {
        keywords: vec!["stop".into()],
        reply: "LABEL: Traffic Signal Compliance".into(),
    }]);
    let r = req("stop here");
    {
        let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
        let gw = Gateway::new(Arc::new(mock.clone())).with_cache(cache);
        assert!(!gw.complete(&r).unwrap().cached);
        assert!(gw.complete(&r).unwrap().cached);
        assert_eq!(gw.backend_calls(), 1);
    }
    let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
    assert_eq!(cache.len(), 1);
    let gw = Gateway::new(Arc::new(mock)).with_cache(cache);
    let again = gw.complete(&r).unwrap();
    assert!(again.cached);
    assert_eq!(again.text, "LABEL: Traffic Signal Compliance");
    assert_eq!(gw.backend_calls(), 0);
}

#[test]
fn concurrent_identical_requests_hit_backend_once() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
    let gw = Gateway::new(Arc::new(MockBackend::new(vec![]))).with_cache(cache);
    let batch: Vec<(usize, ChatRequest)> = (0..32).map(|i| (i, req("same"))).collect();
    let out = gw.complete_many(&batch);
    assert_eq!(
        out.iter().map(|(i, _)| *i).collect::<Vec<_>>(),
        (0..32).collect::<Vec<_>>()
    );
    assert!(out.iter().all(|(_, r)| r.as_ref().unwrap().text == "LABEL: UNKNOWN"));
    assert_eq!(gw.backend_calls(), 1);
}
