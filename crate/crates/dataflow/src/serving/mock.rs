//! Deterministic mock backend: scripted replies for tests and dry runs,
//! digest-derived replies otherwise.

use super::clock::Clock;
use super::{Backend, CallError, GenerationRequest};
use crate::digest::sha256_hex;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

/// How a script entry matches a request's user input.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMatcher {
    Exact(String),
    Prefix(String),
}

impl MockMatcher {
    fn matches(&self, input: &str) -> bool {
        match self {
            MockMatcher::Exact(s) => input == s,
            MockMatcher::Prefix(p) => input.starts_with(p.as_str()),
        }
    }
}

/// What a matched entry replies with.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockReply {
    /// Always succeed with this text.
    Text(String),
    /// Fail every call (retryable).
    AlwaysFail,
    /// Fail the first `failures` calls, then succeed with the text.
    FailThen { failures: u32, then: String },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MockScriptEntry {
    #[serde(flatten)]
    pub matcher: MockMatcher,
    #[serde(flatten)]
    pub reply: MockReply,
    /// Simulated latency, slept on the backend's clock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

/// Ordered canned replies. Exact matchers are consulted before prefix
/// matchers; within each pass, script order wins.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MockScript {
    pub entries: Vec<MockScriptEntry>,
}

impl MockScript {
    pub fn new() -> MockScript {
        MockScript::default()
    }

    pub fn reply_exact(mut self, input: impl Into<String>, reply: impl Into<String>) -> MockScript {
        self.entries.push(MockScriptEntry {
            matcher: MockMatcher::Exact(input.into()),
            reply: MockReply::Text(reply.into()),
            latency_ms: None,
        });
        self
    }

    pub fn reply_prefix(mut self, prefix: impl Into<String>, reply: impl Into<String>) -> MockScript {
        self.entries.push(MockScriptEntry {
            matcher: MockMatcher::Prefix(prefix.into()),
            reply: MockReply::Text(reply.into()),
            latency_ms: None,
        });
        self
    }

    pub fn fail_exact(mut self, input: impl Into<String>) -> MockScript {
        self.entries.push(MockScriptEntry {
            matcher: MockMatcher::Exact(input.into()),
            reply: MockReply::AlwaysFail,
            latency_ms: None,
        });
        self
    }

    pub fn fail_prefix(mut self, prefix: impl Into<String>) -> MockScript {
        self.entries.push(MockScriptEntry {
            matcher: MockMatcher::Prefix(prefix.into()),
            reply: MockReply::AlwaysFail,
            latency_ms: None,
        });
        self
    }

    pub fn fail_then(mut self, input: impl Into<String>, failures: u32, then: impl Into<String>) -> MockScript {
        self.entries.push(MockScriptEntry {
            matcher: MockMatcher::Exact(input.into()),
            reply: MockReply::FailThen { failures, then: then.into() },
            latency_ms: None,
        });
        self
    }

    pub fn with_entry(mut self, entry: MockScriptEntry) -> MockScript {
        self.entries.push(entry);
        self
    }

    /// Exact matchers first, then prefix matchers, each in script order.
    fn find(&self, input: &str) -> Option<usize> {
        let exact = self
            .entries
            .iter()
            .position(|e| matches!(e.matcher, MockMatcher::Exact(_)) && e.matcher.matches(input));
        exact.or_else(|| {
            self.entries
                .iter()
                .position(|e| matches!(e.matcher, MockMatcher::Prefix(_)) && e.matcher.matches(input))
        })
    }
}

/// The fallback reply: a digest over the system prompt and user input, so
/// identical inputs always produce identical outputs and any difference in
/// either field changes the reply.
pub fn digest_reply(system_prompt: Option<&str>, user_input: &str) -> String {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(system_prompt.unwrap_or_default().as_bytes());
    bytes.push(0x1f); // unit separator keeps the two fields unambiguous
    bytes.extend_from_slice(user_input.as_bytes());
    let digest = sha256_hex(&bytes);
    format!("MOCK({})", &digest[..16])
}

pub struct MockBackend {
    script: MockScript,
    clock: Option<Arc<dyn Clock>>,
    // Per-entry call counters drive FailThen replies.
    calls: Mutex<HashMap<usize, u32>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> MockBackend {
        MockBackend { script, clock: None, calls: Mutex::new(HashMap::new()) }
    }

    pub fn unscripted() -> MockBackend {
        MockBackend::new(MockScript::new())
    }

    /// Latencies in the script sleep on this clock.
    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> MockBackend {
        self.clock = Some(clock);
        self
    }
}

impl Backend for MockBackend {
    fn call(&self, request: &GenerationRequest) -> Result<String, CallError> {
        let entry_idx = self.script.find(&request.user_input);
        if let (Some(idx), Some(clock)) = (entry_idx, self.clock.as_ref()) {
            if let Some(ms) = self.script.entries[idx].latency_ms {
                clock.sleep(Duration::from_millis(ms));
            }
        }
        match entry_idx.map(|i| (&self.script.entries[i].reply, i)) {
            Some((MockReply::Text(text), _)) => Ok(text.clone()),
            Some((MockReply::AlwaysFail, _)) => {
                Err(CallError::retryable("scripted failure".to_string()))
            }
            Some((MockReply::FailThen { failures, then }, idx)) => {
                let mut calls = self.calls.lock().expect("mock counter lock poisoned");
                let seen = calls.entry(idx).or_insert(0);
                *seen += 1;
                if *seen <= *failures {
                    Err(CallError::retryable(format!("scripted failure {seen} of {failures}")))
                } else {
                    Ok(then.clone())
                }
            }
            None => Ok(digest_reply(request.system_prompt.as_deref(), &request.user_input)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(input: &str) -> GenerationRequest {
        GenerationRequest::new(input).unwrap()
    }

    #[test]
    fn unscripted_replies_are_deterministic_digests() {
        let backend = MockBackend::unscripted();
        let a = backend.call(&req("hello")).unwrap();
        let b = backend.call(&req("hello")).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("MOCK(") && a.ends_with(')'));
        assert_eq!(a.len(), "MOCK()".len() + 16);
    }

    #[test]
    fn system_prompt_changes_the_digest() {
        let backend = MockBackend::unscripted();
        let mut with_system = req("q");
        with_system.system_prompt = Some("be brief".into());
        let plain = backend.call(&req("q")).unwrap();
        let system = backend.call(&with_system).unwrap();
        assert_ne!(plain, system);
    }

    #[test]
    fn exact_match_wins_over_earlier_prefix() {
        let script = MockScript::new().reply_prefix("Q", "prefix answer").reply_exact("Q1", "A1");
        let backend = MockBackend::new(script);
        assert_eq!(backend.call(&req("Q1")).unwrap(), "A1");
        assert_eq!(backend.call(&req("Q2")).unwrap(), "prefix answer");
        assert!(backend.call(&req("other")).unwrap().starts_with("MOCK("));
    }

    #[test]
    fn fail_then_counts_per_entry() {
        let backend = MockBackend::new(MockScript::new().fail_then("flaky", 2, "ok"));
        assert!(backend.call(&req("flaky")).is_err());
        assert!(backend.call(&req("flaky")).is_err());
        assert_eq!(backend.call(&req("flaky")).unwrap(), "ok");
    }
}
