//! Text encoders for semantic translation of action phrases.

use std::hash::Hasher;
use std::sync::Arc;

use fnv::FnvHasher;

use super::{Endpoint, LlmClient, LlmError, Transport, ENV_EMBED_ENDPOINT};

pub const EMBED_DIM: usize = 256;

/// Maps text to a unit vector. Implementations must be deterministic.
pub trait TextEncoder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, LlmError>;
}

/// Bag of hashed character trigrams over the lowercased, space-normalized
/// text padded with one space on each side.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramEncoder;

impl TextEncoder for TrigramEncoder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, LlmError> {
        let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
        if words.is_empty() {
            return Err(LlmError::InvalidRequest("cannot embed empty text".into()));
        }
        let padded: Vec<char> = format!(" {} ", words.join(" ")).chars().collect();
        let mut v = vec![0.0; EMBED_DIM];
        for tri in padded.windows(3) {
            let mut h = FnvHasher::default();
            for c in tri {
                h.write_u32(*c as u32);
            }
            v[(h.finish() % EMBED_DIM as u64) as usize] += 1.0;
        }
        Ok(normalize(v))
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Embedding service reached over HTTP. Request body `{"model", "input"}`;
/// the response may be a bare float array, `{"embedding": [...]}` or
/// `{"data": [{"embedding": [...]}]}`. Results are L2-normalized.
pub struct RemoteEncoder {
    client: LlmClient,
    endpoint: Endpoint,
}

impl RemoteEncoder {
    pub fn new(endpoint: Endpoint) -> Self {
        let client = LlmClient::live(endpoint.clone());
        Self { client, endpoint }
    }

    /// Uses `A2NAV_EMBED_ENDPOINT` plus the shared key and model variables.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_EMBED_ENDPOINT).ok().filter(|s| !s.trim().is_empty())?;
        let base = Endpoint::from_env();
        Some(Self::new(Endpoint {
            url,
            api_key: base.as_ref().and_then(|e| e.api_key.clone()),
            model: base.and_then(|e| e.model),
        }))
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.client = self.client.with_transport(transport);
        self
    }

    pub fn with_sleeper(mut self, sleep: impl Fn(std::time::Duration) + Send + Sync + 'static) -> Self {
        self.client = self.client.with_sleeper(sleep);
        self
    }
}

impl TextEncoder for RemoteEncoder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, LlmError> {
        if text.trim().is_empty() {
            return Err(LlmError::InvalidRequest("cannot embed empty text".into()));
        }
        let body = serde_json::json!({ "model": self.endpoint.model, "input": text }).to_string();
        let raw = self
            .client
            .post_with_retries(&self.endpoint.url, &self.endpoint.headers(), &body)?;
        let v: serde_json::Value = serde_json::from_str(&raw)
            .map_err(|e| LlmError::LlmUnavailable(format!("embedding response is not JSON: {e}")))?;
        let arr = [v.pointer(""), v.pointer("/embedding"), v.pointer("/data/0/embedding")]
            .into_iter()
            .flatten()
            .find_map(|x| x.as_array())
            .ok_or_else(|| LlmError::LlmUnavailable("embedding response has no vector".into()))?;
        let vec: Vec<f64> = arr
            .iter()
            .map(|x| x.as_f64())
            .collect::<Option<_>>()
            .ok_or_else(|| LlmError::LlmUnavailable("embedding contains non-numbers".into()))?;
        let out = normalize(vec);
        if out.iter().all(|x| *x == 0.0) {
            return Err(LlmError::LlmUnavailable("zero embedding".into()));
        }
        Ok(out)
    }
}
