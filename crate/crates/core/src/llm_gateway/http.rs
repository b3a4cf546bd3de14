use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde_json::{json, Value};

use super::{ApiStyle, AttemptError, Backend, CompletionRequest, ModelEndpoint, RawCompletion, Usage};

/// OpenAI-compatible HTTP backend (legacy completions or chat).
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    calls: AtomicUsize,
    auth: bool,
}

impl Default for HttpBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpBackend {
    pub fn new() -> Self {
        HttpBackend { client: reqwest::blocking::Client::new(), calls: AtomicUsize::new(0), auth: true }
    }

    /// Sends no bearer token and does not require the key variable; for
    /// local servers that accept anonymous requests.
    pub fn unauthenticated() -> Self {
        HttpBackend { auth: false, ..Self::new() }
    }
}

/// JSON body for one request.
pub fn request_body(endpoint: &ModelEndpoint, request: &CompletionRequest) -> Value {
    let mut body = json!({
        "model": endpoint.model_name,
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
    });
    match endpoint.api_style {
        ApiStyle::Completions => body["prompt"] = json!(request.prompt),
        ApiStyle::Chat => body["messages"] = json!([{ "role": "user", "content": request.prompt }]),
    }
    if !request.stop.is_empty() {
        body["stop"] = json!(request.stop);
    }
    body
}

/// Pulls the completion text and usage out of a response body.
pub fn parse_response(body: &Value) -> Result<RawCompletion, AttemptError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| AttemptError::Malformed("no choices[0]".into()))?;
    let text = choice
        .get("text")
        .and_then(Value::as_str)
        .or_else(|| choice.get("message").and_then(|m| m.get("content")).and_then(Value::as_str))
        .ok_or_else(|| AttemptError::Malformed("choices[0] has neither text nor message.content".into()))?;
    let usage = body.get("usage").and_then(|u| {
        Some(Usage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
        })
    });
    Ok(RawCompletion { text: text.to_string(), usage })
}

impl Backend for HttpBackend {
    fn send(&self, endpoint: &ModelEndpoint, request: &CompletionRequest) -> Result<RawCompletion, AttemptError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut builder = self.client.post(endpoint.url());
        if self.auth {
            builder = builder.bearer_auth(std::env::var(&endpoint.api_key_env).unwrap_or_default());
        }
        let resp = builder
            .timeout(Duration::from_secs_f64(endpoint.timeout_secs.max(0.001)))
            .json(&request_body(endpoint, request))
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    AttemptError::Timeout(e.to_string())
                } else {
                    AttemptError::Connection(e.to_string())
                }
            })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| AttemptError::Connection(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(AttemptError::Status { code: status, body: text.chars().take(500).collect() });
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| AttemptError::Malformed(e.to_string()))?;
        parse_response(&body)
    }

    fn requires_auth(&self) -> bool {
        self.auth
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}
