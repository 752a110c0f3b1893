//! OpenAI-compatible HTTP backends (`/chat/completions`, `/embeddings`).

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, Embedder, TokenUsage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenAiConfig {
    pub base_url: String,
    /// Environment variable holding the bearer token; unset means no auth.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub embedding_model: String,
    pub embedding_dim: usize,
}

impl Default for OpenAiConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120.0,
            embedding_model: "text-embedding-ada-002".into(),
            embedding_dim: 1536,
        }
    }
}

struct Client {
    agent: ureq::Agent,
    base_url: String,
    api_key: Option<String>,
}

impl Client {
    fn new(config: &OpenAiConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self { agent, base_url: config.base_url.trim_end_matches('/').to_string(), api_key }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = format!("{}/{}", self.base_url, path);
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body.to_string()).map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| BackendError::Protocol(format!("{e}: {}", snippet(&text)))),
            429 => Err(BackendError::RateLimited),
            500..=599 => Err(BackendError::Transport(format!("HTTP {status}: {}", snippet(&text)))),
            _ => Err(BackendError::Protocol(format!("HTTP {status}: {}", snippet(&text)))),
        }
    }
}

fn snippet(s: &str) -> String {
    s.chars().take(200).collect()
}

pub struct OpenAiChat {
    client: Client,
}

impl OpenAiChat {
    pub fn new(config: &OpenAiConfig) -> Self {
        Self { client: Client::new(config) }
    }
}

impl ChatBackend for OpenAiChat {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = json!({
            "model": req.model,
            "messages": req.messages,
            "temperature": req.temperature,
        });
        let v = self.client.post("chat/completions", &body)?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| BackendError::Protocol("missing choices[0].message.content".into()))?;
        let usage = TokenUsage {
            prompt_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        };
        Ok(ChatResponse { text: text.to_string(), usage })
    }
}

pub struct OpenAiEmbedder {
    client: Client,
    model: String,
    dim: usize,
}

impl OpenAiEmbedder {
    pub fn new(config: &OpenAiConfig) -> Self {
        Self { client: Client::new(config), model: config.embedding_model.clone(), dim: config.embedding_dim }
    }
}

impl Embedder for OpenAiEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        let v = self.client.post("embeddings", &json!({ "model": self.model, "input": text }))?;
        let arr = v["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| BackendError::Protocol("missing data[0].embedding".into()))?;
        let out: Vec<f32> = arr
            .iter()
            .map(|x| x.as_f64().map(|f| f as f32).ok_or_else(|| BackendError::Protocol("non-numeric embedding".into())))
            .collect::<Result<_, _>>()?;
        if out.len() != self.dim {
            return Err(BackendError::Protocol(format!("expected {} dimensions, got {}", self.dim, out.len())));
        }
        Ok(out)
    }
}
