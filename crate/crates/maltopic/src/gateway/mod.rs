//! Provider-agnostic chat-completion access with deterministic parameters,
//! on-disk response caching, token estimation, and cost accounting.

mod http;
mod mock;

pub use http::{HttpChatBackend, DEFAULT_API_KEY_ENV};
pub use mock::MockBackend;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Sampling parameters sent with every completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model_id: String,
    pub seed: u64,
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            model_id: "gpt-4o-mini-2024-07-18".to_string(),
            seed: 1234,
            temperature: 0.2,
            top_p: 0.9,
            max_output_tokens: 16_000,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.model_id.is_empty() {
            return Err(GatewayError::InvalidParams("model_id is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidParams(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GatewayError::InvalidParams(format!(
                "top_p {} outside (0, 1]",
                self.top_p
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidParams("max_output_tokens is 0".into()));
        }
        Ok(())
    }
}

/// Input/output context ceilings plus the headroom fraction kept free when
/// packing batches against the input limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub max_input_tokens: u64,
    pub max_output_tokens: u64,
    #[serde(default = "default_safety_margin")]
    pub safety_margin: f64,
}

fn default_safety_margin() -> f64 {
    0.1
}

impl Default for TokenBudget {
    fn default() -> Self {
        TokenBudget {
            max_input_tokens: 128_000,
            max_output_tokens: 16_000,
            safety_margin: default_safety_margin(),
        }
    }
}

impl TokenBudget {
    /// Input-token ceiling after subtracting the safety margin.
    pub fn effective_input_tokens(&self) -> u64 {
        (self.max_input_tokens as f64 * (1.0 - self.safety_margin)).floor() as u64
    }
}

/// Per-million-token USD rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub input_usd_per_million_tokens: f64,
    pub output_usd_per_million_tokens: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            input_usd_per_million_tokens: 0.15,
            output_usd_per_million_tokens: 0.075,
        }
    }
}

impl CostModel {
    pub fn cost_usd(&self, input_tokens: u64, output_tokens: u64) -> f64 {
        input_tokens as f64 * self.input_usd_per_million_tokens / 1e6
            + output_tokens as f64 * self.output_usd_per_million_tokens / 1e6
    }
}

/// One completed prompt/response round trip with usage accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub prompt_text: String,
    pub response_text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_usd: f64,
    pub cached: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// What a backend returns; usage fields are provider-reported when available.
#[derive(Debug, Clone)]
pub struct RawCompletion {
    pub text: String,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
}

pub trait ChatBackend: Send + Sync {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<RawCompletion, GatewayError>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("prompt over budget: estimated {estimated} tokens, limit {limit}")]
    OverBudget { estimated: u64, limit: u64 },
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider error (status {status}): {body}")]
    Provider { status: u16, body: String },
    #[error("invalid generation params: {0}")]
    InvalidParams(String),
    #[error("cache io failure: {0}")]
    CacheIo(String),
}

/// Estimated token count for `text`: ceil(chars / 4).
///
/// A deliberate provider-agnostic heuristic; budget checks add headroom via
/// [`TokenBudget::safety_margin`].
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Chat access point shared by all agents. Thread-safe; counts live calls and
/// keeps a log of every exchange for cost accounting.
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    budget: TokenBudget,
    cost: CostModel,
    cache_dir: Option<PathBuf>,
    live_calls: AtomicU64,
    log: Mutex<Vec<ChatExchange>>,
    in_flight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, budget: TokenBudget, cost: CostModel) -> Self {
        Gateway {
            backend,
            budget,
            cost,
            cache_dir: None,
            live_calls: AtomicU64::new(0),
            log: Mutex::new(Vec::new()),
            in_flight: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn budget(&self) -> &TokenBudget {
        &self.budget
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.cost
    }

    /// Number of calls that actually reached the backend (cache misses).
    pub fn live_call_count(&self) -> u64 {
        self.live_calls.load(Ordering::SeqCst)
    }

    /// Drains the exchange log accumulated since the last call.
    pub fn drain_exchanges(&self) -> Vec<ChatExchange> {
        std::mem::take(&mut *self.log.lock().unwrap())
    }

    /// Issues a completion, going through the cache when one is configured.
    pub fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<ChatExchange, GatewayError> {
        let exchange = match &self.cache_dir {
            Some(dir) => self.cached_complete(prompt, params, &dir.clone())?,
            None => self.complete_uncached(prompt, params)?,
        };
        self.log.lock().unwrap().push(exchange.clone());
        Ok(exchange)
    }

    fn complete_uncached(&self, prompt: &str, params: &GenerationParams) -> Result<ChatExchange, GatewayError> {
        params.validate()?;
        let estimated = estimate_tokens(prompt);
        if estimated > self.budget.max_input_tokens {
            return Err(GatewayError::OverBudget {
                estimated,
                limit: self.budget.max_input_tokens,
            });
        }
        self.live_calls.fetch_add(1, Ordering::SeqCst);
        let raw = self.backend.generate(prompt, params)?;
        let input_tokens = raw.input_tokens.unwrap_or(estimated);
        let output_tokens = raw.output_tokens.unwrap_or_else(|| estimate_tokens(&raw.text));
        Ok(ChatExchange {
            prompt_text: prompt.to_string(),
            response_text: raw.text,
            input_tokens,
            output_tokens,
            cost_usd: self.cost.cost_usd(input_tokens, output_tokens),
            cached: false,
            warning: None,
        })
    }

    /// Completion through an on-disk cache keyed by a digest of the model id,
    /// params, and prompt. Cache failures fall back to a live call with a
    /// warning recorded on the exchange.
    pub fn cached_complete(
        &self,
        prompt: &str,
        params: &GenerationParams,
        cache_dir: &Path,
    ) -> Result<ChatExchange, GatewayError> {
        let key = cache_key(prompt, params);
        let entry_path = cache_dir.join(format!("{key}.json"));

        // Single flight per key: concurrent identical prompts wait for the
        // first caller and then hit the cache it wrote.
        let key_lock = {
            let mut map = self.in_flight.lock().unwrap();
            Arc::clone(map.entry(key.clone()).or_default())
        };
        let _guard = key_lock.lock().unwrap();

        if let Ok(bytes) = fs::read(&entry_path) {
            if let Ok(mut exchange) = serde_json::from_slice::<ChatExchange>(&bytes) {
                exchange.cached = true;
                return Ok(exchange);
            }
        }

        let exchange = self.complete_uncached(prompt, params)?;
        if let Err(err) = write_cache_entry(cache_dir, &entry_path, &key, &exchange) {
            let mut exchange = exchange;
            exchange.warning = Some(format!("cache write failed: {err}"));
            return Ok(exchange);
        }
        Ok(exchange)
    }
}

fn cache_key(prompt: &str, params: &GenerationParams) -> String {
    let mut hasher = Sha256::new();
    hasher.update(params.model_id.as_bytes());
    hasher.update([0]);
    hasher.update(params.seed.to_le_bytes());
    hasher.update(params.temperature.to_le_bytes());
    hasher.update(params.top_p.to_le_bytes());
    hasher.update(params.max_output_tokens.to_le_bytes());
    hasher.update([0]);
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

// Write-then-rename keeps concurrent writers of one key convergent.
fn write_cache_entry(
    cache_dir: &Path,
    entry_path: &Path,
    key: &str,
    exchange: &ChatExchange,
) -> Result<(), String> {
    fs::create_dir_all(cache_dir).map_err(|e| e.to_string())?;
    let tmp = cache_dir.join(format!(".{key}.{}.tmp", std::process::id()));
    let body = serde_json::to_vec_pretty(exchange).map_err(|e| e.to_string())?;
    fs::write(&tmp, body).map_err(|e| e.to_string())?;
    fs::rename(&tmp, entry_path).map_err(|e| e.to_string())?;
    Ok(())
}
