//! OpenAI-compatible chat-completions backend over HTTP.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatBackend, GatewayError, GenerationParams, RawCompletion};

pub const DEFAULT_API_KEY_ENV: &str = "MALTOPIC_API_KEY";

pub struct HttpChatBackend {
    base_url: String,
    api_key_env: String,
    client: reqwest::blocking::Client,
    max_attempts: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

impl HttpChatBackend {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpChatBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("http client"),
            max_attempts: 3,
        }
    }

    pub fn with_api_key_env(mut self, env_var: impl Into<String>) -> Self {
        self.api_key_env = env_var.into();
        self
    }

    fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty())
    }
}

impl ChatBackend for HttpChatBackend {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<RawCompletion, GatewayError> {
        let url = format!("{}/v1/chat/completions", self.base_url);
        let body = json!({
            "model": params.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "seed": params.seed,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_output_tokens,
        });

        let mut last_error = String::new();
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(200 * (1 << attempt)));
            }
            let mut request = self.client.post(&url).json(&body);
            if let Some(key) = self.api_key() {
                request = request.bearer_auth(key);
            }
            let response = match request.send() {
                Ok(r) => r,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            let status = response.status();
            if status.is_success() {
                let parsed: CompletionResponse = response.json().map_err(|e| GatewayError::Provider {
                    status: status.as_u16(),
                    body: format!("unparseable response body: {e}"),
                })?;
                let text = parsed
                    .choices
                    .first()
                    .map(|c| c.message.content.clone())
                    .ok_or(GatewayError::Provider {
                        status: status.as_u16(),
                        body: "response contained no choices".to_string(),
                    })?;
                let usage = parsed.usage;
                return Ok(RawCompletion {
                    text,
                    input_tokens: usage.as_ref().and_then(|u| u.prompt_tokens),
                    output_tokens: usage.as_ref().and_then(|u| u.completion_tokens),
                });
            }
            // Retry throttling and server-side failures; everything else is final.
            if status.as_u16() == 429 || status.is_server_error() {
                last_error = format!("status {status}");
                continue;
            }
            let body = response.text().unwrap_or_default();
            return Err(GatewayError::Provider {
                status: status.as_u16(),
                body,
            });
        }
        Err(GatewayError::Transport {
            attempts: self.max_attempts,
            message: last_error,
        })
    }
}
