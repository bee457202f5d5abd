//! Unified LLM serving layer: one batch entry point over interchangeable
//! backends, with bounded concurrency, retries with exponential backoff,
//! optional structured-output validation and token-bucket rate limiting.

mod clock;
mod http;
mod mock;
mod schema;
mod throttle;

pub use clock::{Clock, SystemClock, VirtualClock};
pub use http::HttpBackend;
pub use mock::{digest_reply, MockBackend, MockMatcher, MockReply, MockScript, MockScriptEntry};
pub use schema::{validate_structured_output, StructuredOutputError};
pub use throttle::TokenBucket;

use serde_json::Value;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum ServingError {
    #[error("invalid serving configuration: {0}")]
    InvalidConfig(String),
    #[error("credential env var {0} is named in the configuration but unset")]
    MissingCredential(String),
    #[error("batch aborted at request {index}: {detail}")]
    BatchAborted { index: usize, detail: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams { temperature: 0.7, top_p: 1.0, max_tokens: 2048 }
    }
}

/// One unit of generation traffic.
#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub user_input: String,
    pub system_prompt: Option<String>,
    pub schema_constraint: Option<Value>,
    pub sampling: SamplingParams,
}

impl GenerationRequest {
    pub fn new(user_input: impl Into<String>) -> Result<GenerationRequest, ServingError> {
        let user_input = user_input.into();
        if user_input.is_empty() {
            return Err(ServingError::InvalidRequest("user_input must be non-empty".into()));
        }
        Ok(GenerationRequest {
            user_input,
            system_prompt: None,
            schema_constraint: None,
            sampling: SamplingParams::default(),
        })
    }

    pub fn with_system_prompt(mut self, system_prompt: impl Into<String>) -> GenerationRequest {
        self.system_prompt = Some(system_prompt.into());
        self
    }

    pub fn with_schema(mut self, schema: Value) -> Result<GenerationRequest, ServingError> {
        if !schema.is_object() {
            return Err(ServingError::InvalidRequest("schema_constraint must be a JSON object".into()));
        }
        self.schema_constraint = Some(schema);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResponseOutput {
    Text(String),
    /// Parsed object from a schema-constrained request.
    Structured(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResponse {
    pub status: ResponseStatus,
    pub output: Option<ResponseOutput>,
    pub attempts: u32,
    pub error_detail: Option<String>,
}

impl GenerationResponse {
    fn ok_text(text: String, attempts: u32) -> GenerationResponse {
        GenerationResponse {
            status: ResponseStatus::Ok,
            output: Some(ResponseOutput::Text(text)),
            attempts,
            error_detail: None,
        }
    }

    fn ok_structured(value: Value, attempts: u32) -> GenerationResponse {
        GenerationResponse {
            status: ResponseStatus::Ok,
            output: Some(ResponseOutput::Structured(value)),
            attempts,
            error_detail: None,
        }
    }

    fn failed(detail: String, attempts: u32) -> GenerationResponse {
        GenerationResponse {
            status: ResponseStatus::Failed,
            output: None,
            attempts,
            error_detail: Some(detail),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ResponseStatus::Ok
    }

    pub fn text(&self) -> Option<&str> {
        match &self.output {
            Some(ResponseOutput::Text(s)) => Some(s),
            _ => None,
        }
    }

    pub fn structured(&self) -> Option<&Value> {
        match &self.output {
            Some(ResponseOutput::Structured(v)) => Some(v),
            _ => None,
        }
    }
}

/// A backend failure, flagged retryable (transport faults, HTTP 429/5xx)
/// or terminal (other 4xx, bad credentials).
#[derive(Debug, Clone)]
pub struct CallError {
    pub retryable: bool,
    pub detail: String,
}

impl CallError {
    pub fn retryable(detail: String) -> CallError {
        CallError { retryable: true, detail }
    }

    pub fn terminal(detail: String) -> CallError {
        CallError { retryable: false, detail }
    }
}

/// The single call every backend implements.
pub trait Backend: Send + Sync {
    fn call(&self, request: &GenerationRequest) -> Result<String, CallError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
    pub backoff_multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_backoff_ms: 500, backoff_multiplier: 2.0 }
    }
}

impl RetryPolicy {
    /// Exponential backoff before retrying: base × multiplier^(attempt − 1).
    fn backoff_after(&self, attempt: u32) -> Duration {
        let factor = self.backoff_multiplier.powi(attempt.saturating_sub(1) as i32);
        Duration::from_secs_f64(self.base_backoff_ms as f64 / 1000.0 * factor)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Model name sent in the HTTP request body.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_env_var: Option<String>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Requests per second; unset disables throttling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit: Option<f64>,
    /// When set, the first failed request aborts the whole batch instead of
    /// yielding a failed entry.
    #[serde(default)]
    pub abort_on_failure: bool,
}

fn default_max_in_flight() -> usize {
    8
}

impl BackendConfig {
    pub fn mock() -> BackendConfig {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint: None,
            model: None,
            credential_env_var: None,
            max_in_flight: default_max_in_flight(),
            retry: RetryPolicy::default(),
            rate_limit: None,
            abort_on_failure: false,
        }
    }

    pub fn http(endpoint: impl Into<String>) -> BackendConfig {
        BackendConfig { kind: BackendKind::Http, endpoint: Some(endpoint.into()), ..BackendConfig::mock() }
    }

    pub fn validate(&self) -> Result<(), ServingError> {
        if self.kind == BackendKind::Http && self.endpoint.is_none() {
            return Err(ServingError::InvalidConfig("http backend requires an endpoint".into()));
        }
        if self.max_in_flight == 0 {
            return Err(ServingError::InvalidConfig("max_in_flight must be at least 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(ServingError::InvalidConfig("retry.max_attempts must be at least 1".into()));
        }
        if self.retry.backoff_multiplier < 1.0 {
            return Err(ServingError::InvalidConfig("retry.backoff_multiplier must be ≥ 1".into()));
        }
        if let Some(rate) = self.rate_limit {
            if !(rate > 0.0) {
                return Err(ServingError::InvalidConfig("rate_limit must be positive".into()));
            }
        }
        Ok(())
    }
}

/// A configured serving endpoint: backend, retry policy, shared token
/// bucket and clock. Cheap to clone and safe to share across threads.
#[derive(Clone)]
pub struct ServingHandle {
    config: BackendConfig,
    backend: Arc<dyn Backend>,
    clock: Arc<dyn Clock>,
    bucket: Option<Arc<TokenBucket>>,
}

impl ServingHandle {
    /// Builds the backend named by the configuration. Mock backends start
    /// unscripted; use [`ServingHandle::mock_scripted`] for canned replies.
    pub fn new(config: BackendConfig) -> Result<ServingHandle, ServingError> {
        config.validate()?;
        let backend: Arc<dyn Backend> = match config.kind {
            BackendKind::Mock => Arc::new(MockBackend::unscripted()),
            BackendKind::Http => Arc::new(HttpBackend::new(
                config.endpoint.clone().expect("validated endpoint"),
                config.model.clone().unwrap_or_else(|| "default".to_string()),
                config.credential_env_var.clone(),
            )),
        };
        Ok(ServingHandle::with_backend(config, backend, Arc::new(SystemClock::new()))?)
    }

    /// A mock handle with a reply script.
    pub fn mock_scripted(config: BackendConfig, script: MockScript) -> Result<ServingHandle, ServingError> {
        let clock: Arc<dyn Clock> = Arc::new(SystemClock::new());
        let backend = Arc::new(MockBackend::new(script).with_clock(clock.clone()));
        ServingHandle::with_backend(config, backend, clock)
    }

    /// Full control over backend and clock, for instrumented tests.
    pub fn with_backend(
        config: BackendConfig,
        backend: Arc<dyn Backend>,
        clock: Arc<dyn Clock>,
    ) -> Result<ServingHandle, ServingError> {
        config.validate()?;
        let bucket = config
            .rate_limit
            .map(|rate| Arc::new(TokenBucket::new(rate, clock.clone())));
        Ok(ServingHandle { config, backend, clock, bucket })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Issues the whole batch, preserving index correspondence between
    /// requests and responses regardless of completion order. At most
    /// `max_in_flight` requests are outstanding at any instant. Individual
    /// failures become `status = failed` entries unless `abort_on_failure`
    /// is configured.
    pub fn generate_from_input(
        &self,
        requests: &[GenerationRequest],
    ) -> Result<Vec<GenerationResponse>, ServingError> {
        self.config.validate()?;
        if self.config.kind == BackendKind::Http {
            if let Some(var) = &self.config.credential_env_var {
                if std::env::var(var).is_err() {
                    return Err(ServingError::MissingCredential(var.clone()));
                }
            }
        }
        if requests.is_empty() {
            return Ok(Vec::new());
        }

        let n = requests.len();
        let results: Mutex<Vec<Option<GenerationResponse>>> = Mutex::new(vec![None; n]);
        let next = AtomicUsize::new(0);
        let aborted = AtomicBool::new(false);
        let workers = self.config.max_in_flight.min(n);

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if self.config.abort_on_failure && aborted.load(Ordering::SeqCst) {
                        break;
                    }
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    if index >= n {
                        break;
                    }
                    let response = self.process_one(&requests[index]);
                    if response.status == ResponseStatus::Failed {
                        aborted.store(true, Ordering::SeqCst);
                    }
                    results.lock().expect("results lock poisoned")[index] = Some(response);
                });
            }
        });

        let results = results.into_inner().expect("results lock poisoned");
        if self.config.abort_on_failure {
            for (index, slot) in results.iter().enumerate() {
                if let Some(response) = slot {
                    if response.status == ResponseStatus::Failed {
                        return Err(ServingError::BatchAborted {
                            index,
                            detail: response.error_detail.clone().unwrap_or_default(),
                        });
                    }
                }
            }
        }
        Ok(results
            .into_iter()
            .map(|slot| {
                slot.unwrap_or_else(|| GenerationResponse::failed("request skipped after batch abort".into(), 0))
            })
            .collect())
    }

    /// One request through admission, retries with exponential backoff and
    /// optional structured-output validation. A reply that fails schema
    /// validation is retried like a transport failure.
    fn process_one(&self, request: &GenerationRequest) -> GenerationResponse {
        let max_attempts = self.config.retry.max_attempts;
        let mut last_error = String::new();
        for attempt in 1..=max_attempts {
            if let Some(bucket) = &self.bucket {
                bucket.admit();
            }
            match self.backend.call(request) {
                Ok(text) => match &request.schema_constraint {
                    None => return GenerationResponse::ok_text(text, attempt),
                    Some(schema) => match validate_structured_output(&text, schema) {
                        Ok(value) => return GenerationResponse::ok_structured(value, attempt),
                        Err(e) => last_error = e.to_string(),
                    },
                },
                Err(e) if e.retryable => last_error = e.detail,
                Err(e) => return GenerationResponse::failed(e.detail, attempt),
            }
            if attempt < max_attempts {
                self.clock.sleep(self.config.retry.backoff_after(attempt));
            }
        }
        GenerationResponse::failed(last_error, max_attempts)
    }
}

/// Single-shot mock generation outside any backend configuration: scripted
/// reply if a matcher hits, digest reply otherwise. Always succeeds in one
/// attempt.
pub fn mock_generate(request: &GenerationRequest, script: Option<&MockScript>) -> GenerationResponse {
    let backend = match script {
        Some(script) => MockBackend::new(script.clone()),
        None => MockBackend::unscripted(),
    };
    match backend.call(request) {
        Ok(text) => GenerationResponse::ok_text(text, 1),
        Err(e) => GenerationResponse::failed(e.detail, 1),
    }
}
