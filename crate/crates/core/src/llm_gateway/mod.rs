//! Completions endpoint access: retries, caching, bounded concurrency and
//! an append-only run log.
//!
//! [`Gateway::complete`] sends one request. A response for the same
//! (model, prompt text, temperature) is served from the [`ResponseCache`]
//! without touching the backend. [`Gateway::annotate_batch`] runs many
//! requests with at most `max_in_flight` outstanding and returns results in
//! input order.

mod cache;
mod http;
mod mock;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::{cache_key, ResponseCache};
pub use http::HttpBackend;
pub use mock::{MockBackend, MockFixtures};

use crate::budget::CostModel;
use crate::error::{Error, Result};

/// Hex SHA-256 of the prompt text; names prompts in fixtures and run logs.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApiStyle {
    /// `POST {base}/completions` with a `prompt` field.
    #[default]
    Completions,
    /// `POST {base}/chat/completions`, prompt sent as one user message.
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_backoff_secs: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 5, base_backoff_secs: 1.0 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): `base * 2^(retry-1)`, capped at one minute.
    pub fn backoff(&self, retry: u32) -> Duration {
        let secs = self.base_backoff_secs.max(0.0) * 2f64.powi(retry.saturating_sub(1).min(30) as i32);
        Duration::from_secs_f64(secs.min(60.0))
    }
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_in_flight() -> usize {
    4
}
fn default_max_output_tokens() -> u32 {
    16
}
fn default_stop() -> Vec<String> {
    vec!["\n\n".into()]
}
fn default_timeout() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub base_url: String,
    #[serde(alias = "model")]
    pub model_name: String,
    /// Environment variable holding the bearer token.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub api_style: ApiStyle,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pricing: Option<CostModel>,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_stop")]
    pub stop: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

impl ModelEndpoint {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        ModelEndpoint {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env: default_api_key_env(),
            api_style: ApiStyle::default(),
            max_in_flight: default_in_flight(),
            retry: RetryPolicy::default(),
            pricing: None,
            max_output_tokens: default_max_output_tokens(),
            stop: default_stop(),
            timeout_secs: default_timeout(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        if let Some(p) = &self.pricing {
            p.validate()?;
        }
        Ok(())
    }

    pub fn url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        match self.api_style {
            ApiStyle::Completions => format!("{base}/completions"),
            ApiStyle::Chat => format!("{base}/chat/completions"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub stop: Vec<String>,
}

impl CompletionRequest {
    /// Temperature 0 with the endpoint's output limit and stop sequences.
    pub fn for_endpoint(endpoint: &ModelEndpoint, prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            temperature: 0.0,
            max_output_tokens: endpoint.max_output_tokens,
            stop: endpoint.stop.clone(),
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub usage: Option<Usage>,
    pub latency_secs: f64,
    pub cache_hit: bool,
}

/// What a backend returns for one successful attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCompletion {
    pub text: String,
    pub usage: Option<Usage>,
}

/// Failure of a single attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum AttemptError {
    Status { code: u16, body: String },
    Timeout(String),
    Connection(String),
    Malformed(String),
}

impl AttemptError {
    pub fn is_retryable(&self) -> bool {
        match self {
            AttemptError::Status { code, .. } => *code == 429 || (500..600).contains(code),
            AttemptError::Timeout(_) | AttemptError::Connection(_) => true,
            AttemptError::Malformed(_) => false,
        }
    }

    fn status(&self) -> Option<u16> {
        match self {
            AttemptError::Status { code, .. } => Some(*code),
            _ => None,
        }
    }
}

impl std::fmt::Display for AttemptError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttemptError::Status { code, body } => write!(f, "HTTP {code}: {body}"),
            AttemptError::Timeout(m) => write!(f, "timeout: {m}"),
            AttemptError::Connection(m) => write!(f, "connection failed: {m}"),
            AttemptError::Malformed(m) => write!(f, "malformed response: {m}"),
        }
    }
}

/// Something that can answer a completion request.
pub trait Backend: Send + Sync {
    fn send(&self, endpoint: &ModelEndpoint, request: &CompletionRequest) -> Result<RawCompletion, AttemptError>;

    /// Whether the endpoint's API key variable must be set.
    fn requires_auth(&self) -> bool {
        true
    }

    /// Requests that reached the backend, including failed attempts.
    fn calls(&self) -> usize;
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogRecord {
    pub run_id: String,
    pub instance_id: String,
    pub model: String,
    pub prompt_hash: String,
    pub response_text: String,
    pub usage: Option<Usage>,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// Append-only line-delimited log of responses.
#[derive(Debug, Clone)]
pub struct RunLog {
    path: PathBuf,
    run_id: String,
}

impl RunLog {
    pub fn new(path: impl Into<PathBuf>, run_id: impl Into<String>) -> Self {
        RunLog { path: path.into(), run_id: run_id.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn append(&self, records: &[RunLogRecord]) -> Result<()> {
        crate::io::append_jsonl(&self.path, records)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Vec<RunLogRecord>> {
        crate::io::read_jsonl(path)
    }
}

fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// A failed item from [`Gateway::annotate_batch`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub instance_id: String,
    /// `transport`, `request`, `config` or `other`.
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct BatchOutcome {
    /// Successful responses in input order.
    pub responses: Vec<(String, CompletionResponse)>,
    /// Error manifest, in input order.
    pub failures: Vec<BatchFailure>,
}

impl BatchOutcome {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

type Sleeper = dyn Fn(Duration) + Send + Sync;

pub struct Gateway {
    endpoint: ModelEndpoint,
    backend: Arc<dyn Backend>,
    cache: ResponseCache,
    sleep: Arc<Sleeper>,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl Gateway {
    pub fn new(endpoint: ModelEndpoint, backend: Arc<dyn Backend>, cache: ResponseCache) -> Result<Self> {
        endpoint.validate()?;
        Ok(Gateway {
            endpoint,
            backend,
            cache,
            sleep: Arc::new(std::thread::sleep),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        })
    }

    /// Replaces the backoff sleep, e.g. to record delays in tests.
    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Arc::new(sleep);
        self
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Calls that reached the backend so far.
    pub fn backend_calls(&self) -> usize {
        self.backend.calls()
    }

    /// Highest number of concurrent backend requests observed.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    fn check_auth(&self) -> Result<()> {
        if !self.backend.requires_auth() {
            return Ok(());
        }
        match std::env::var(&self.endpoint.api_key_env) {
            Ok(v) if !v.trim().is_empty() => Ok(()),
            _ => Err(Error::Config(format!(
                "API key environment variable `{}` is not set",
                self.endpoint.api_key_env
            ))),
        }
    }

    fn send_with_retries(&self, request: &CompletionRequest) -> Result<RawCompletion> {
        let policy = &self.endpoint.retry;
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
            let result = self.backend.send(&self.endpoint, request);
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            match result {
                Ok(raw) => return Ok(raw),
                Err(AttemptError::Status { code, body }) if !(code == 429 || code >= 500) => {
                    return Err(Error::Request { status: code, body })
                }
                Err(AttemptError::Malformed(m)) => return Err(Error::format("completion response", m)),
                Err(e) => {
                    debug_assert!(e.is_retryable());
                    if attempt > policy.max_retries {
                        return Err(Error::Transport { attempts: attempt, status: e.status(), last: e.to_string() });
                    }
                    let delay = policy.backoff(attempt);
                    log::warn!("attempt {attempt} failed ({e}); retrying in {delay:?}");
                    (self.sleep)(delay);
                }
            }
        }
    }

    /// Sends one request, serving repeats from the cache.
    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        if request.prompt.is_empty() {
            return Err(Error::Invalid("prompt is empty".into()));
        }
        if request.temperature < 0.0 || !request.temperature.is_finite() {
            return Err(Error::Invalid(format!("temperature {} is not >= 0", request.temperature)));
        }
        let key = cache_key(&self.endpoint.model_name, &request.prompt, request.temperature);
        let started = Instant::now();
        let _guard = self.cache.lock_key(&key);
        if let Some(hit) = self.cache.get(&key)? {
            return Ok(CompletionResponse {
                text: hit.text,
                usage: hit.usage,
                latency_secs: started.elapsed().as_secs_f64(),
                cache_hit: true,
            });
        }
        self.check_auth()?;
        let raw = self.send_with_retries(request)?;
        self.cache.put(&key, &self.endpoint.model_name, request.temperature, &raw)?;
        Ok(CompletionResponse {
            text: raw.text,
            usage: raw.usage,
            latency_secs: started.elapsed().as_secs_f64(),
            cache_hit: false,
        })
    }

    /// Runs `items` with at most `max_in_flight` requests outstanding.
    ///
    /// Per-item failures go to the error manifest; successes are appended to
    /// `log` in input order before returning.
    pub fn annotate_batch(
        &self,
        items: &[(String, CompletionRequest)],
        log: Option<&RunLog>,
    ) -> Result<BatchOutcome> {
        let mut ids = HashSet::with_capacity(items.len());
        for (id, _) in items {
            if !ids.insert(id.as_str()) {
                return Err(Error::Invalid(format!("duplicate instance id `{id}` in batch")));
            }
        }

        let slots: Vec<Mutex<Option<Result<CompletionResponse>>>> =
            items.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.endpoint.max_in_flight.min(items.len()).max(1);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= items.len() {
                        break;
                    }
                    let result = self.complete(&items[i].1);
                    *slots[i].lock().unwrap() = Some(result);
                });
            }
        });

        let mut outcome = BatchOutcome::default();
        let mut records = Vec::new();
        for ((id, request), slot) in items.iter().zip(slots) {
            match slot.into_inner().unwrap().expect("every slot is filled") {
                Ok(resp) => {
                    if let Some(log) = log {
                        records.push(RunLogRecord {
                            run_id: log.run_id().to_string(),
                            instance_id: id.clone(),
                            model: self.endpoint.model_name.clone(),
                            prompt_hash: prompt_hash(&request.prompt),
                            response_text: resp.text.clone(),
                            usage: resp.usage,
                            timestamp: now_millis(),
                        });
                    }
                    outcome.responses.push((id.clone(), resp));
                }
                Err(e) => {
                    let kind = match &e {
                        Error::Transport { .. } => "transport",
                        Error::Request { .. } => "request",
                        Error::Config(_) => "config",
                        _ => "other",
                    };
                    outcome.failures.push(BatchFailure {
                        instance_id: id.clone(),
                        kind: kind.into(),
                        message: e.to_string(),
                    });
                }
            }
        }
        if let Some(log) = log {
            log.append(&records)?;
        }
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn endpoint() -> ModelEndpoint {
        let mut e = ModelEndpoint::new("http://unused", "mock-model");
        e.retry = RetryPolicy { max_retries: 3, base_backoff_secs: 0.5 };
        e
    }

    fn gateway(backend: Arc<dyn Backend>) -> Gateway {
        Gateway::new(endpoint(), backend, ResponseCache::in_memory()).unwrap().with_sleeper(|_| {})
    }

    fn req(p: &str) -> CompletionRequest {
        CompletionRequest::for_endpoint(&endpoint(), p)
    }

    #[test]
    fn default_temperature_is_zero() {
        assert_eq!(req("x").temperature, 0.0);
    }

    #[test]
    fn cache_hit_skips_backend() {
        let mock = Arc::new(MockBackend::new(MockFixtures::constant("passive")));
        let gw = gateway(mock.clone());
        let first = gw.complete(&req("p")).unwrap();
        let second = gw.complete(&req("p")).unwrap();
        assert!(!first.cache_hit && second.cache_hit);
        assert_eq!(first.text, second.text);
        assert_eq!(first.usage, second.usage);
        assert_eq!(mock.calls(), 1);
    }

    #[test]
    fn cache_key_components_each_miss() {
        let mock = Arc::new(MockBackend::new(MockFixtures::constant("passive")));
        let gw = gateway(mock.clone());
        gw.complete(&req("p")).unwrap();
        gw.complete(&req("p").with_temperature(0.7)).unwrap();
        gw.complete(&req("q")).unwrap();
        let mut other = endpoint();
        other.model_name = "another".into();
        let gw2 = Gateway::new(other, mock.clone(), gw.cache().clone()).unwrap();
        gw2.complete(&req("p")).unwrap();
        assert_eq!(mock.calls(), 4);
    }

    #[test]
    fn fixture_by_prompt_hash() {
        let mut responses = HashMap::new();
        responses.insert(prompt_hash("the prompt"), "passive, explicit, descriptive".to_string());
        let mock = Arc::new(MockBackend::new(MockFixtures { responses, default: vec![] }));
        let gw = gateway(mock);
        assert_eq!(gw.complete(&req("the prompt")).unwrap().text, "passive, explicit, descriptive");
        assert!(matches!(gw.complete(&req("other")), Err(Error::Request { status: 404, .. })));
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let mock = Arc::new(MockBackend::new(MockFixtures::constant("ok")).fail_first(vec![429, 503]));
        let delays = Arc::new(Mutex::new(Vec::new()));
        let d2 = delays.clone();
        let gw = gateway(mock.clone()).with_sleeper(move |d| d2.lock().unwrap().push(d));
        assert_eq!(gw.complete(&req("p")).unwrap().text, "ok");
        assert_eq!(mock.calls(), 3);
        assert_eq!(*delays.lock().unwrap(), vec![Duration::from_millis(500), Duration::from_secs(1)]);
    }

    #[test]
    fn retries_exhaust_into_transport_error() {
        let mock = Arc::new(MockBackend::new(MockFixtures::constant("ok")).fail_first(vec![500; 10]));
        let gw = gateway(mock.clone());
        match gw.complete(&req("p")) {
            Err(Error::Transport { attempts, status, .. }) => {
                assert_eq!(attempts, 4);
                assert_eq!(status, Some(500));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(mock.calls(), 4);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let mock = Arc::new(MockBackend::new(MockFixtures::constant("ok")).fail_first(vec![400]));
        let gw = gateway(mock.clone());
        assert!(matches!(gw.complete(&req("p")), Err(Error::Request { status: 400, .. })));
        assert_eq!(mock.calls(), 1);
    }

    #[test]
    fn missing_api_key_is_config_error() {
        let mut e = endpoint();
        e.api_key_env = "LLMCODER_TEST_SURELY_UNSET_VAR".into();
        let gw = Gateway::new(e, Arc::new(HttpBackend::new()), ResponseCache::in_memory()).unwrap();
        assert!(matches!(gw.complete(&req("p")), Err(Error::Config(_))));
    }

    #[test]
    fn empty_prompt_and_negative_temperature_rejected() {
        let gw = gateway(Arc::new(MockBackend::new(MockFixtures::constant("x"))));
        assert!(gw.complete(&req("")).is_err());
        assert!(gw.complete(&req("p").with_temperature(-0.1)).is_err());
    }

    #[test]
    fn zero_in_flight_is_config_error() {
        let mut e = endpoint();
        e.max_in_flight = 0;
        assert!(Gateway::new(e, Arc::new(MockBackend::new(MockFixtures::constant("x"))), ResponseCache::in_memory()).is_err());
    }

    fn batch(n: usize) -> Vec<(String, CompletionRequest)> {
        (0..n).map(|i| (format!("i{i}"), req(&format!("prompt {i}")))).collect()
    }

    #[test]
    fn sequential_batch_keeps_order() {
        let mock = Arc::new(MockBackend::new(MockFixtures::echo_hash(&["a", "b", "c"])));
        let mut e = endpoint();
        e.max_in_flight = 1;
        let gw = Gateway::new(e, mock.clone(), ResponseCache::in_memory()).unwrap();
        let out = gw.annotate_batch(&batch(3), None).unwrap();
        let ids: Vec<_> = out.responses.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, vec!["i0", "i1", "i2"]);
        assert_eq!(gw.peak_in_flight(), 1);
    }

    #[test]
    fn concurrent_batch_is_bounded_and_ordered() {
        let mock = Arc::new(
            MockBackend::new(MockFixtures::echo_hash(&["a", "b"])).with_latency(Duration::from_millis(5)),
        );
        let mut e = endpoint();
        e.max_in_flight = 3;
        let gw = Gateway::new(e, mock.clone(), ResponseCache::in_memory()).unwrap();
        let items = batch(24);
        let out = gw.annotate_batch(&items, None).unwrap();
        assert!(out.is_complete());
        assert!(gw.peak_in_flight() <= 3);
        assert!(gw.peak_in_flight() >= 2, "expected overlap, got {}", gw.peak_in_flight());
        let ids: Vec<_> = out.responses.iter().map(|(id, _)| id.clone()).collect();
        let want: Vec<_> = items.iter().map(|(id, _)| id.clone()).collect();
        assert_eq!(ids, want);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let gw = gateway(Arc::new(MockBackend::new(MockFixtures::constant("x"))));
        let items = vec![("a".to_string(), req("1")), ("a".to_string(), req("2"))];
        assert!(matches!(gw.annotate_batch(&items, None), Err(Error::Invalid(_))));
    }

    #[test]
    fn partial_failures_go_to_manifest() {
        let mut responses = HashMap::new();
        responses.insert(prompt_hash("prompt 0"), "a".to_string());
        responses.insert(prompt_hash("prompt 2"), "c".to_string());
        let gw = gateway(Arc::new(MockBackend::new(MockFixtures { responses, default: vec![] })));
        let out = gw.annotate_batch(&batch(3), None).unwrap();
        assert_eq!(out.responses.len(), 2);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].instance_id, "i1");
        assert_eq!(out.failures[0].kind, "request");
    }

    #[test]
    fn run_log_is_written_in_input_order() {
        let dir = tempfile::tempdir().unwrap();
        let log = RunLog::new(dir.path().join("run.jsonl"), "r1");
        let gw = gateway(Arc::new(MockBackend::new(MockFixtures::echo_hash(&["x", "y"]))));
        gw.annotate_batch(&batch(5), Some(&log)).unwrap();
        let recs = RunLog::read(log.path()).unwrap();
        assert_eq!(recs.len(), 5);
        assert!(recs.iter().enumerate().all(|(i, r)| r.instance_id == format!("i{i}") && r.run_id == "r1"));
        assert_eq!(recs[0].prompt_hash, prompt_hash("prompt 0"));
        assert!(recs[0].usage.is_some());
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy { max_retries: 10, base_backoff_secs: 1.0 };
        assert_eq!(p.backoff(1), Duration::from_secs(1));
        assert_eq!(p.backoff(3), Duration::from_secs(4));
        assert_eq!(p.backoff(10), Duration::from_secs(60));
    }

    #[test]
    fn endpoint_urls() {
        let mut e = ModelEndpoint::new("http://h/v1/", "m");
        assert_eq!(e.url(), "http://h/v1/completions");
        e.api_style = ApiStyle::Chat;
        assert_eq!(e.url(), "http://h/v1/chat/completions");
    }
}
