//! Completion client with an offline fixture mode.
//!
//! In fixture mode completions come from a store keyed by the sha256 of the
//! prompt and the transport is never touched. In live mode each completion
//! is one POST to `A2NAV_LLM_ENDPOINT` with a JSON body
//! `{"model", "prompt", "max_tokens", "temperature", "stop"}`.
//!
//! The response body is read as text. If it is JSON in one of the common
//! provider shapes (`choices[0].text`, `choices[0].message.content`,
//! `completion`, `text`, `content[0].text`) that field is returned,
//! otherwise the raw body is.

mod embed;

pub use embed::{cosine, RemoteEncoder, TextEncoder, TrigramEncoder, EMBED_DIM};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const ENV_ENDPOINT: &str = "A2NAV_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "A2NAV_LLM_API_KEY";
pub const ENV_MODEL: &str = "A2NAV_LLM_MODEL";
pub const ENV_EMBED_ENDPOINT: &str = "A2NAV_EMBED_ENDPOINT";

pub const MAX_RETRIES: usize = 3;
pub const INITIAL_BACKOFF: Duration = Duration::from_secs(1);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("language model unavailable: {0}")]
    LlmUnavailable(String),
    #[error("no fixture completion for prompt hash {0}")]
    FixtureMiss(String),
    #[error("endpoint rejected credentials (HTTP {0})")]
    AuthError(u16),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed fixture file line {line}: {message}")]
    BadFixtures { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Result<Self, LlmError> {
        let prompt = prompt.into();
        if prompt.trim().is_empty() {
            return Err(LlmError::InvalidRequest("empty prompt".into()));
        }
        Ok(Self {
            prompt,
            max_tokens: 256,
            temperature: 0.0,
            stop: None,
        })
    }
}

/// Lowercase hex sha256 of the prompt text.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub hash: String,
    pub completion: String,
}

/// Canned completions, read-only after load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixtureStore {
    entries: BTreeMap<String, String>,
}

impl FixtureStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses line-delimited `{hash, completion}` records.
    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: FixtureRecord = serde_json::from_str(line).map_err(|e| LlmError::BadFixtures {
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.insert(rec.hash, rec.completion);
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::LlmUnavailable(format!("cannot read fixtures {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn insert(&mut self, prompt: &str, completion: impl Into<String>) {
        self.entries.insert(prompt_hash(prompt), completion.into());
    }

    pub fn get(&self, prompt: &str) -> Result<&str, LlmError> {
        let hash = prompt_hash(prompt);
        self.entries
            .get(&hash)
            .map(String::as_str)
            .ok_or(LlmError::FixtureMiss(hash))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Serializes in hash order, one record per line.
    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|(hash, completion)| {
                let rec = FixtureRecord {
                    hash: hash.clone(),
                    completion: completion.clone(),
                };
                serde_json::to_string(&rec).expect("record serializes") + "\n"
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal POST capability, injectable for tests.
pub trait Transport: Send + Sync {
    fn post(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<HttpResponse, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl Transport for UreqTransport {
    fn post(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<HttpResponse, String> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

/// Records every call and replays scripted responses in order. Once the
/// script runs out it keeps answering with the last entry.
#[derive(Default)]
pub struct RecordingTransport {
    script: Mutex<Vec<Result<HttpResponse, String>>>,
    calls: Mutex<Vec<(String, String)>>,
}

impl RecordingTransport {
    pub fn new(script: Vec<Result<HttpResponse, String>>) -> Self {
        Self {
            script: Mutex::new(script),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// (url, body) of every call so far.
    pub fn calls(&self) -> Vec<(String, String)> {
        self.calls.lock().unwrap().clone()
    }
}

impl Transport for RecordingTransport {
    fn post(&self, url: &str, _headers: &[(String, String)], body: &str) -> Result<HttpResponse, String> {
        self.calls.lock().unwrap().push((url.to_string(), body.to_string()));
        let mut script = self.script.lock().unwrap();
        match script.len() {
            0 => Err("no scripted response".into()),
            1 => script[0].clone(),
            _ => script.remove(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub url: String,
    pub api_key: Option<String>,
    pub model: Option<String>,
}

impl Endpoint {
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_ENDPOINT).ok().filter(|s| !s.trim().is_empty())?;
        Some(Self {
            url,
            api_key: std::env::var(ENV_API_KEY).ok().filter(|s| !s.is_empty()),
            model: std::env::var(ENV_MODEL).ok().filter(|s| !s.is_empty()),
        })
    }

    fn headers(&self) -> Vec<(String, String)> {
        self.api_key
            .iter()
            .map(|k| ("Authorization".to_string(), format!("Bearer {k}")))
            .collect()
    }
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Shareable across threads; every request carries its own state.
#[derive(Clone)]
pub struct LlmClient {
    fixtures: Option<Arc<FixtureStore>>,
    endpoint: Option<Endpoint>,
    transport: Arc<dyn Transport>,
    sleep: Sleeper,
}

impl LlmClient {
    /// Offline client answering only from `store`.
    pub fn with_fixtures(store: FixtureStore) -> Self {
        Self {
            fixtures: Some(Arc::new(store)),
            endpoint: None,
            transport: Arc::new(UreqTransport::default()),
            sleep: Arc::new(std::thread::sleep),
        }
    }

    pub fn live(endpoint: Endpoint) -> Self {
        Self {
            fixtures: None,
            endpoint: Some(endpoint),
            transport: Arc::new(UreqTransport::default()),
            sleep: Arc::new(std::thread::sleep),
        }
    }

    /// Live client configured from the environment, if an endpoint is set.
    pub fn from_env() -> Option<Self> {
        Endpoint::from_env().map(Self::live)
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = transport;
        self
    }

    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Arc::new(sleep);
        self
    }

    pub fn is_offline(&self) -> bool {
        self.fixtures.is_some()
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        if request.prompt.trim().is_empty() {
            return Err(LlmError::InvalidRequest("empty prompt".into()));
        }
        if let Some(store) = &self.fixtures {
            return store.get(&request.prompt).map(str::to_string);
        }
        let endpoint = self
            .endpoint
            .as_ref()
            .ok_or_else(|| LlmError::LlmUnavailable(format!("{ENV_ENDPOINT} not set and no fixtures loaded")))?;
        let body = serde_json::json!({
            "model": endpoint.model,
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "stop": request.stop,
        })
        .to_string();
        let text = self.post_with_retries(&endpoint.url, &endpoint.headers(), &body)?;
        Ok(extract_completion(&text))
    }

    /// One attempt plus up to [`MAX_RETRIES`] retries on transport errors,
    /// HTTP 429 and 5xx, sleeping 1 s, 2 s, 4 s in between.
    pub(crate) fn post_with_retries(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<String, LlmError> {
        let mut backoff = INITIAL_BACKOFF;
        let mut last = String::new();
        for attempt in 0..=MAX_RETRIES {
            if attempt > 0 {
                (self.sleep)(backoff);
                backoff *= 2;
            }
            match self.transport.post(url, headers, body) {
                Ok(r) if (200..300).contains(&r.status) => return Ok(r.body),
                Ok(r) if r.status == 401 || r.status == 403 => return Err(LlmError::AuthError(r.status)),
                Ok(r) if r.status == 429 || r.status >= 500 => last = format!("HTTP {}", r.status),
                Ok(r) => return Err(LlmError::LlmUnavailable(format!("HTTP {}: {}", r.status, r.body))),
                Err(e) => last = e,
            }
        }
        Err(LlmError::LlmUnavailable(format!("after {MAX_RETRIES} retries: {last}")))
    }
}

fn extract_completion(body: &str) -> String {
    let Ok(v) = serde_json::from_str::<serde_json::Value>(body) else {
        return body.to_string();
    };
    let candidates = [
        v.pointer("/choices/0/text"),
        v.pointer("/choices/0/message/content"),
        v.pointer("/completion"),
        v.pointer("/text"),
        v.pointer("/content/0/text"),
    ];
    let found = candidates.into_iter().flatten().find_map(|c| c.as_str());
    found.map(str::to_string).unwrap_or_else(|| body.to_string())
}
