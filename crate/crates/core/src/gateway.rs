//! Provider-agnostic chat-completion client.
//!
//! A [`Gateway`] wraps one [`ChatBackend`] (an OpenAI-style HTTP endpoint or the
//! offline rule-based [`MockBackend`]) with bounded retries and an optional
//! on-disk response cache shared between gateways.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";
pub const DEFAULT_MOCK_REPLY: &str = "LABEL: UNKNOWN";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Response(String),
    #[error("response cache {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

impl GatewayError {
    /// Transport failures, 429 and 5xx are retried; everything else surfaces at once.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport(_) => true,
            GatewayError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.model_id.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty model id".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub model_id: String,
    pub cached: bool,
}

/// Bytes hashed by [`cache_key`]: a JSON array of every request field in declaration order.
pub fn canonical_request_bytes(request: &ChatRequest) -> Vec<u8> {
    serde_json::to_vec(&(
        &request.model_id,
        &request.system_text,
        &request.user_text,
        request.temperature,
        request.max_tokens,
    ))
    .expect("request fields serialize")
}

/// Hex SHA-256 of the canonical request serialization.
pub fn cache_key(request: &ChatRequest) -> String {
    hex::encode(Sha256::digest(canonical_request_bytes(request)))
}

pub trait ChatBackend: Send + Sync {
    /// Perform one round trip and return the model's text.
    fn send(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    /// All keywords must occur (case-insensitively) for the rule to fire.
    pub keywords: Vec<String>,
    pub reply: String,
}

/// Deterministic offline backend: the first rule whose keywords all occur wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockBackend {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default = "default_mock_reply")]
    pub default_reply: String,
    /// When set, rules only look at the rest of the line following the last
    /// occurrence of this marker in the user text (e.g. `"Explanation:"`).
    #[serde(default)]
    pub scope_marker: Option<String>,
}

fn default_mock_reply() -> String {
    DEFAULT_MOCK_REPLY.to_string()
}

impl MockBackend {
    pub fn new(rules: Vec<MockRule>) -> Self {
        MockBackend {
            rules,
            default_reply: default_mock_reply(),
            scope_marker: None,
        }
    }

    fn scope<'a>(&self, user_text: &'a str) -> &'a str {
        match &self.scope_marker {
            Some(marker) => match user_text.rfind(marker.as_str()) {
                Some(pos) => {
                    let rest = &user_text[pos + marker.len()..];
                    rest.split('\n').next().unwrap_or(rest)
                }
                None => user_text,
            },
            None => user_text,
        }
    }

    pub fn reply_for(&self, user_text: &str) -> &str {
        let haystack = self.scope(user_text).to_lowercase();
        self.rules
            .iter()
            .find(|r| r.keywords.iter().all(|k| haystack.contains(&k.to_lowercase())))
            .map(|r| r.reply.as_str())
            .unwrap_or(&self.default_reply)
    }
}

impl ChatBackend for MockBackend {
    fn send(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        Ok(self.reply_for(&request.user_text).to_string())
    }
}

/// OpenAI-compatible `chat/completions` client.
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: [WireMessage<'a>; 2],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireContent,
}

#[derive(Deserialize)]
struct WireContent {
    content: Option<String>,
}

const BODY_EXCERPT_CHARS: usize = 300;

fn excerpt(body: &str) -> String {
    match body.char_indices().nth(BODY_EXCERPT_CHARS) {
        Some((idx, _)) => format!("{}...", &body[..idx]),
        None => body.to_string(),
    }
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpBackend {
            endpoint: endpoint.into(),
            api_key,
            agent,
        }
    }

    pub fn wire_body(request: &ChatRequest) -> serde_json::Value {
        serde_json::to_value(WireRequest {
            model: &request.model_id,
            messages: [
                WireMessage {
                    role: "system",
                    content: &request.system_text,
                },
                WireMessage {
                    role: "user",
                    content: &request.user_text,
                },
            ],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        })
        .expect("wire request serializes")
    }
}

impl ChatBackend for HttpBackend {
    fn send(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut call = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::to_string(&Self::wire_body(request))
            .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        let mut resp = call
            .send(body.as_bytes())
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(GatewayError::Status {
                status,
                body: excerpt(&text),
            });
        }
        let parsed: WireResponse = serde_json::from_str(&text).map_err(|e| GatewayError::Response(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|c| !c.trim().is_empty())
            .ok_or_else(|| GatewayError::Response("no message content in first choice".into()))
    }
}

/// Declarative backend description, as found in run configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Http {
        endpoint: String,
        #[serde(default = "default_api_key_env")]
        api_key_env: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
    Mock(MockBackend),
}

fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}

fn default_timeout_secs() -> u64 {
    120
}

impl BackendSpec {
    /// Instantiate the backend; HTTP backends read their key from the environment.
    pub fn build(&self) -> Result<Arc<dyn ChatBackend>, GatewayError> {
        match self {
            BackendSpec::Http {
                endpoint,
                api_key_env,
                timeout_secs,
            } => {
                if endpoint.trim().is_empty() {
                    return Err(GatewayError::Config("http backend needs an endpoint".into()));
                }
                let key = std::env::var(api_key_env)
                    .map_err(|_| GatewayError::Config(format!("environment variable {api_key_env} is not set")))?;
                Ok(Arc::new(HttpBackend::new(
                    endpoint.clone(),
                    Some(key),
                    Duration::from_secs(*timeout_secs),
                )))
            }
            BackendSpec::Mock(mock) => Ok(Arc::new(mock.clone())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn delay_for(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16))
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    model_id: String,
    text: String,
}

/// Append-only on-disk key → response store (`responses.jsonl` inside the cache dir).
pub struct ResponseCache {
    path: PathBuf,
    entries: Mutex<HashMap<String, String>>,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    writer: Mutex<File>,
}

impl ResponseCache {
    pub fn open(dir: &Path) -> Result<Self, GatewayError> {
        let path = dir.join("responses.jsonl");
        let cache_err = |message: String| GatewayError::Cache {
            path: path.clone(),
            message,
        };
        fs::create_dir_all(dir).map_err(|e| cache_err(e.to_string()))?;
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| cache_err(e.to_string()))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| cache_err(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                // A torn final line from an interrupted run is skipped.
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(entry) => {
                        entries.entry(entry.key).or_insert(entry.text);
                    }
                    Err(e) => eprintln!("warning: skipping cache line {}: {e}", i + 1),
                }
            }
        }
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| cache_err(e.to_string()))?;
        Ok(ResponseCache {
            path,
            entries: Mutex::new(entries),
            inflight: Mutex::new(HashMap::new()),
            writer: Mutex::new(writer),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    fn insert(&self, key: &str, model_id: &str, text: &str) -> Result<(), GatewayError> {
        let mut entries = self.entries.lock().unwrap();
        if entries.contains_key(key) {
            return Ok(());
        }
        let line = serde_json::to_string(&CacheLine {
            key: key.to_string(),
            model_id: model_id.to_string(),
            text: text.to_string(),
        })
        .expect("cache line serializes");
        let mut w = self.writer.lock().unwrap();
        writeln!(w, "{line}")
            .and_then(|_| w.flush())
            .map_err(|e| GatewayError::Cache {
                path: self.path.clone(),
                message: e.to_string(),
            })?;
        entries.insert(key.to_string(), text.to_string());
        Ok(())
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.inflight
            .lock()
            .unwrap()
            .entry(key.to_string())
            .or_default()
            .clone()
    }
}

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    cache: Option<Arc<ResponseCache>>,
    retry: RetryPolicy,
    calls: AtomicUsize,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Gateway {
            backend,
            cache: None,
            retry: RetryPolicy::default(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_spec(spec: &BackendSpec) -> Result<Self, GatewayError> {
        Ok(Gateway::new(spec.build()?))
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Number of backend round trips attempted so far (cache hits excluded).
    pub fn backend_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn send_with_retry(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut attempt = 0;
        loop {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.backend.send(request) {
                Ok(text) if text.trim().is_empty() => return Err(GatewayError::Response("empty completion".into())),
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.retry.max_retries => {
                    std::thread::sleep(self.retry.delay_for(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let Some(cache) = &self.cache else {
            let text = self.send_with_retry(request)?;
            return Ok(ChatResponse {
                text,
                model_id: request.model_id.clone(),
                cached: false,
            });
        };
        let key = cache_key(request);
        let lock = cache.key_lock(&key);
        let _guard = lock.lock().unwrap();
        if let Some(text) = cache.get(&key) {
            return Ok(ChatResponse {
                text,
                model_id: request.model_id.clone(),
                cached: true,
            });
        }
        let text = self.send_with_retry(request)?;
        cache.insert(&key, &request.model_id, &text)?;
        Ok(ChatResponse {
            text,
            model_id: request.model_id.clone(),
            cached: false,
        })
    }

    /// Complete a batch concurrently; results keep their caller-supplied tags and input order.
    pub fn complete_many<T: Send + Sync + Clone>(
        &self,
        requests: &[(T, ChatRequest)],
    ) -> Vec<(T, Result<ChatResponse, GatewayError>)> {
        requests
            .par_iter()
            .map(|(tag, req)| (tag.clone(), self.complete(req)))
            .collect()
    }
}
