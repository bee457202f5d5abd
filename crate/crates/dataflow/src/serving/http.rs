//! HTTP chat-completions backend. Local inference engines and online API
//! services are both reached through this one wire contract.

use super::{Backend, CallError, GenerationRequest};
use serde_json::{json, Value};
use std::time::Duration;

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    credential_env_var: Option<String>,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, credential_env_var: Option<String>) -> HttpBackend {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .expect("http client");
        HttpBackend {
            client,
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            model: model.into(),
            credential_env_var,
        }
    }
}

impl Backend for HttpBackend {
    fn call(&self, request: &GenerationRequest) -> Result<String, CallError> {
        let mut messages = Vec::new();
        if let Some(system) = &request.system_prompt {
            messages.push(json!({ "role": "system", "content": system }));
        }
        messages.push(json!({ "role": "user", "content": request.user_input }));
        let body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": request.sampling.temperature,
            "top_p": request.sampling.top_p,
            "max_tokens": request.sampling.max_tokens,
        });

        let url = format!("{}/chat/completions", self.endpoint);
        let mut builder = self.client.post(&url).json(&body);
        if let Some(var) = &self.credential_env_var {
            match std::env::var(var) {
                Ok(token) => builder = builder.bearer_auth(token),
                Err(_) => {
                    return Err(CallError::terminal(format!("credential env var {var} is unset")))
                }
            }
        }

        let response = builder
            .send()
            .map_err(|e| CallError::retryable(format!("transport error: {e}")))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| CallError::retryable(format!("failed reading response body: {e}")))?;

        if status.is_success() {
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| CallError::retryable(format!("invalid JSON reply: {e}")))?;
            let content = value
                .get("choices")
                .and_then(Value::as_array)
                .and_then(|choices| choices.first())
                .and_then(|choice| choice.get("message"))
                .and_then(|message| message.get("content"))
                .and_then(Value::as_str);
            match content {
                Some(content) => Ok(content.to_string()),
                None => Err(CallError::retryable("reply has no choices[0].message.content".to_string())),
            }
        } else if status.as_u16() == 429 || status.is_server_error() {
            Err(CallError::retryable(format!("HTTP {status}: {text}")))
        } else {
            // Remaining 4xx statuses are terminal for this request.
            Err(CallError::terminal(format!("HTTP {status}: {text}")))
        }
    }
}
