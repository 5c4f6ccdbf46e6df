//! Embedding providers: a deterministic offline bag-of-words embedder for
//! tests and acceptance runs, and an OpenAI-compatible HTTP provider.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{normalize_text, Embedder, EmbeddingVector, MetricsError};

/// Bag-of-words token counts hashed into a fixed-dimension vector.
///
/// Tokens are normalized the same way the corpus is, then bucketed with
/// FNV-1a (stable across processes, unlike the std hasher). Identical texts
/// map to identical vectors.
pub struct MockEmbedder {
    dimension: usize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        MockEmbedder { dimension: 256 }
    }
}

impl MockEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0);
        MockEmbedder { dimension }
    }

    /// Stable bucket index for one token.
    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dimension as u64) as usize
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

impl Embedder for MockEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, MetricsError> {
        let mut components = vec![0.0; self.dimension];
        for token in normalize_text(text).split_whitespace() {
            components[self.bucket(token)] += 1.0;
        }
        Ok(EmbeddingVector::new(components))
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}

/// OpenAI-compatible `/v1/embeddings` provider.
pub struct HttpEmbedder {
    base_url: String,
    model: String,
    api_key_env: String,
    dimension: usize,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, dimension: usize) -> Self {
        HttpEmbedder {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key_env: crate::gateway::DEFAULT_API_KEY_ENV.to_string(),
            dimension,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("http client"),
        }
    }

    pub fn with_api_key_env(mut self, env_var: impl Into<String>) -> Self {
        self.api_key_env = env_var.into();
        self
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, MetricsError> {
        let url = format!("{}/v1/embeddings", self.base_url);
        let mut request = self
            .client
            .post(&url)
            .json(&json!({"model": self.model, "input": [text]}));
        if let Ok(key) = std::env::var(&self.api_key_env) {
            if !key.is_empty() {
                request = request.bearer_auth(key);
            }
        }
        let response = request.send().map_err(|e| MetricsError::Embed(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(MetricsError::Embed(format!("status {status}: {body}")));
        }
        let parsed: EmbeddingsResponse = response
            .json()
            .map_err(|e| MetricsError::Embed(format!("unparseable response: {e}")))?;
        let datum = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| MetricsError::Embed("response contained no embeddings".into()))?;
        Ok(EmbeddingVector::new(datum.embedding))
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}
