//! Serving-layer contract: order preservation under scrambled completion
//! timing, serial equivalence, bounded concurrency, and the HTTP backend's
//! retry behavior against a scripted local endpoint.

use dataflow::serving::{
    Backend, BackendConfig, CallError, GenerationRequest, MockBackend, MockMatcher, MockReply,
    MockScript, MockScriptEntry, ServingHandle, SystemClock,
};
use proptest::prelude::*;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

fn requests(inputs: &[String]) -> Vec<GenerationRequest> {
    inputs.iter().map(|i| GenerationRequest::new(i.clone()).unwrap()).collect()
}

fn latency_script(inputs: &[String], latencies: &[u64]) -> MockScript {
    let mut script = MockScript::new();
    for (input, latency) in inputs.iter().zip(latencies) {
        script = script.with_entry(MockScriptEntry {
            matcher: MockMatcher::Exact(input.clone()),
            reply: MockReply::Text(format!("reply for {input}")),
            latency_ms: Some(*latency),
        });
    }
    script
}

#[test]
fn order_preserved_under_scrambled_latencies() {
    let inputs: Vec<String> = (0..200).map(|i| format!("req-{i}")).collect();
    // Later requests finish earlier.
    let latencies: Vec<u64> = (0..200).map(|i| (199 - i) % 5).collect();
    let mut baseline: Option<Vec<String>> = None;
    for max_in_flight in [1usize, 8, 64] {
        let mut config = BackendConfig::mock();
        config.max_in_flight = max_in_flight;
        let handle =
            ServingHandle::mock_scripted(config, latency_script(&inputs, &latencies)).unwrap();
        let out = handle.generate_from_input(&requests(&inputs)).unwrap();
        let texts: Vec<String> = out.iter().map(|r| r.text().unwrap().to_string()).collect();
        for (i, text) in texts.iter().enumerate() {
            assert_eq!(text, &format!("reply for req-{i}"), "index misaligned at {i}");
        }
        match &baseline {
            None => baseline = Some(texts),
            Some(base) => assert_eq!(&texts, base, "max_in_flight={max_in_flight} diverged"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// The multiset of (input, output) pairs is the same whether requests
    /// run one at a time or eight at a time.
    #[test]
    fn serial_equivalence(inputs in prop::collection::vec("[a-z]{1,12}", 1..40)) {
        let reqs = requests(&inputs);
        let mut pair_sets = Vec::new();
        for max_in_flight in [1usize, 8] {
            let mut config = BackendConfig::mock();
            config.max_in_flight = max_in_flight;
            let handle = ServingHandle::new(config).unwrap();
            let out = handle.generate_from_input(&reqs).unwrap();
            let mut pairs: Vec<(String, String)> = inputs
                .iter()
                .zip(&out)
                .map(|(i, r)| (i.clone(), r.text().unwrap().to_string()))
                .collect();
            pairs.sort();
            pair_sets.push(pairs);
        }
        prop_assert_eq!(&pair_sets[0], &pair_sets[1]);
    }
}

#[test]
fn overlap_never_exceeds_max_in_flight() {
    struct Overlap {
        current: AtomicUsize,
        peak: AtomicUsize,
    }
    impl Backend for Overlap {
        fn call(&self, _: &GenerationRequest) -> Result<String, CallError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(1));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok("done".into())
        }
    }
    for max_in_flight in [1usize, 3, 16] {
        let backend =
            Arc::new(Overlap { current: AtomicUsize::new(0), peak: AtomicUsize::new(0) });
        let mut config = BackendConfig::mock();
        config.max_in_flight = max_in_flight;
        let handle =
            ServingHandle::with_backend(config, backend.clone(), Arc::new(SystemClock::new()))
                .unwrap();
        let inputs: Vec<String> = (0..64).map(|i| format!("r{i}")).collect();
        handle.generate_from_input(&requests(&inputs)).unwrap();
        assert!(
            backend.peak.load(Ordering::SeqCst) <= max_in_flight,
            "peak overlap exceeded {max_in_flight}"
        );
    }
}

/// Minimal scripted chat-completions endpoint: fails the first
/// `failures_before_success` requests with HTTP 500, then replies normally.
fn scripted_endpoint(failures_before_success: usize) -> (String, std::thread::JoinHandle<usize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        let mut served = 0usize;
        loop {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            // Read headers, then the content-length body.
            let body_start = loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                    break pos + 4;
                }
            };
            let header_text = String::from_utf8_lossy(&buf[..body_start]).to_string();
            if header_text.starts_with("GET /shutdown") {
                let _ = stream.write_all(b"HTTP/1.1 200 OK\r\ncontent-length: 0\r\n\r\n");
                return served;
            }
            let content_length: usize = header_text
                .lines()
                .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse().unwrap()))
                .unwrap_or(0);
            while buf.len() < body_start + content_length {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
            }
            served += 1;
            let response_body = if served <= failures_before_success {
                let body = r#"{"error":"scripted overload"}"#;
                format!(
                    "HTTP/1.1 500 Internal Server Error\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
                    body.len(),
                    body
                )
            } else {
                let body = r#"{"choices":[{"message":{"role":"assistant","content":"scripted reply"}}]}"#;
                format!(
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
                    body.len(),
                    body
                )
            };
            stream.write_all(response_body.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}"), handle)
}

#[test]
fn http_backend_retries_until_the_endpoint_recovers() {
    let (endpoint, server) = scripted_endpoint(2);
    let mut config = BackendConfig::http(&endpoint);
    config.retry.max_attempts = 3;
    config.retry.base_backoff_ms = 1;
    let handle = ServingHandle::new(config).unwrap();
    let out = handle
        .generate_from_input(&requests(&["hello".to_string()]))
        .unwrap();
    assert!(out[0].is_ok(), "{:?}", out[0].error_detail);
    assert_eq!(out[0].attempts, 3);
    assert_eq!(out[0].text().unwrap(), "scripted reply");

    // Ask the server to exit and collect its request count: 2 failures + 1
    // success + the shutdown probe is not counted.
    let _ = reqwest::blocking::get(format!("{endpoint}/shutdown"));
    assert_eq!(server.join().unwrap(), 3);
}

#[test]
fn http_backend_gives_up_when_failures_exceed_attempts() {
    let (endpoint, server) = scripted_endpoint(10);
    let mut config = BackendConfig::http(&endpoint);
    config.retry.max_attempts = 2;
    config.retry.base_backoff_ms = 1;
    let handle = ServingHandle::new(config).unwrap();
    let out = handle
        .generate_from_input(&requests(&["hello".to_string()]))
        .unwrap();
    assert!(!out[0].is_ok());
    assert_eq!(out[0].attempts, 2);
    assert!(out[0].error_detail.as_deref().unwrap().contains("500"));
    let _ = reqwest::blocking::get(format!("{endpoint}/shutdown"));
    let _ = server.join();
}

#[test]
fn terminal_http_status_fails_without_retry() {
    // A 404 is terminal: exactly one request reaches the endpoint.
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        let mut served = 0;
        for _ in 0..1 {
            let (mut stream, _) = listener.accept().unwrap();
            let mut chunk = [0u8; 4096];
            let _ = stream.read(&mut chunk);
            served += 1;
            let body = "missing";
            let _ = stream.write_all(
                format!("HTTP/1.1 404 Not Found\r\ncontent-length: {}\r\n\r\n{}", body.len(), body)
                    .as_bytes(),
            );
        }
        served
    });
    let mut config = BackendConfig::http(format!("http://{addr}"));
    config.retry.max_attempts = 3;
    config.retry.base_backoff_ms = 1;
    let handle = ServingHandle::new(config).unwrap();
    let out = handle
        .generate_from_input(&requests(&["q".to_string()]))
        .unwrap();
    assert!(!out[0].is_ok());
    assert_eq!(out[0].attempts, 1);
    assert_eq!(server.join().unwrap(), 1);
}

#[test]
fn mock_determinism_is_a_pure_function_of_inputs() {
    let script = MockScript::new().reply_exact("fixed", "canned");
    for _ in 0..3 {
        let backend = MockBackend::new(script.clone());
        assert_eq!(backend.call(&GenerationRequest::new("fixed").unwrap()).unwrap(), "canned");
        let a = backend.call(&GenerationRequest::new("free").unwrap()).unwrap();
        let b = backend.call(&GenerationRequest::new("free").unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
