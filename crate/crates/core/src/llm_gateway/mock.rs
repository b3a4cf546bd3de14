use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{prompt_hash, AttemptError, Backend, CompletionRequest, ModelEndpoint, RawCompletion, Usage};
use crate::error::Result;
use crate::prompt_forge::estimate_tokens;

/// Canned answers for [`MockBackend`].
///
/// `responses` maps a prompt hash (see [`prompt_hash`]) to its answer.
/// Prompts without an entry get `default[h % len]`, where `h` is derived
/// from the prompt hash; with an empty `default` they are rejected with 404.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockFixtures {
    #[serde(default)]
    pub responses: HashMap<String, String>,
    #[serde(default)]
    pub default: Vec<String>,
}

impl MockFixtures {
    pub fn constant(text: &str) -> Self {
        MockFixtures { responses: HashMap::new(), default: vec![text.to_string()] }
    }

    /// Answers drawn deterministically from `choices` by prompt hash.
    pub fn echo_hash(choices: &[&str]) -> Self {
        MockFixtures { responses: HashMap::new(), default: choices.iter().map(|s| s.to_string()).collect() }
    }

    pub fn from_json_str(src: &str) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| crate::Error::format("mock fixtures", e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&crate::io::read_to_string(path)?)
    }

    pub fn answer(&self, prompt: &str) -> Option<String> {
        if let Some(r) = self.responses.get(&prompt_hash(prompt)) {
            return Some(r.clone());
        }
        if self.default.is_empty() {
            return None;
        }
        let digest = Sha256::digest(prompt.as_bytes());
        let h = u64::from_le_bytes(digest[..8].try_into().unwrap());
        Some(self.default[(h % self.default.len() as u64) as usize].clone())
    }
}

/// Offline backend answering from [`MockFixtures`]; never needs an API key.
pub struct MockBackend {
    fixtures: MockFixtures,
    calls: AtomicUsize,
    failures: Mutex<VecDeque<u16>>,
    latency: Option<Duration>,
}

impl MockBackend {
    pub fn new(fixtures: MockFixtures) -> Self {
        MockBackend { fixtures, calls: AtomicUsize::new(0), failures: Mutex::new(VecDeque::new()), latency: None }
    }

    /// The first calls fail with these HTTP statuses, one per call.
    pub fn fail_first(self, statuses: Vec<u16>) -> Self {
        *self.failures.lock().unwrap() = statuses.into();
        self
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }
}

impl Backend for MockBackend {
    fn send(&self, _endpoint: &ModelEndpoint, request: &CompletionRequest) -> Result<RawCompletion, AttemptError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(d) = self.latency {
            std::thread::sleep(d);
        }
        if let Some(code) = self.failures.lock().unwrap().pop_front() {
            return Err(AttemptError::Status { code, body: "injected failure".into() });
        }
        let text = self.fixtures.answer(&request.prompt).ok_or_else(|| AttemptError::Status {
            code: 404,
            body: format!("no fixture for prompt {}", prompt_hash(&request.prompt)),
        })?;
        let usage = Usage {
            prompt_tokens: estimate_tokens(&request.prompt, 4.0) as u64,
            completion_tokens: estimate_tokens(&text, 4.0) as u64,
        };
        Ok(RawCompletion { text, usage: Some(usage) })
    }

    fn requires_auth(&self) -> bool {
        false
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}
