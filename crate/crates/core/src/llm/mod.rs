//! Chat completions and embeddings behind small backend traits, with a
//! model pool, rate-limit retries, and cassette record/replay.

mod cassette;
mod embed;
mod openai;
pub mod scripted;
mod template;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Embedding;
use crate::worker::Worker;

pub use cassette::{Cassette, CassetteEntry, CassetteWriter, RecordingChat, RecordingEmbedder, ReplayChat, ReplayEmbedder};
pub use embed::{Embedder, HashEmbedder};
pub use openai::{OpenAiChat, OpenAiConfig, OpenAiEmbedder};
pub use scripted::ScriptedChat;
pub use template::{Template, TemplateError, TemplateSet, BUILTIN_TEMPLATE_IDS};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// One call as seen by a backend. `stream` and `seq` identify the caller
/// and its call index so that replay is exact even when identical prompts
/// are issued by several workers.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub template_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub model: String,
    pub stream: Option<String>,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub usage: TokenUsage,
}

/// A finished exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub model: String,
    pub response: String,
    pub token_usage: TokenUsage,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("rate limited")]
    RateLimited,
    #[error("malformed backend reply: {0}")]
    Protocol(String),
    #[error("transport error: {0}")]
    Transport(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("chat request has no messages")]
    EmptyMessages,
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("model pool is empty")]
    EmptyPool,
    #[error("still rate limited after {attempts} attempts")]
    RateLimit { attempts: u32 },
    #[error("malformed backend reply: {0}")]
    Protocol(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("embedding: {0}")]
    Embedding(#[from] crate::embedding::EmbeddingError),
}

impl LlmError {
    /// Infrastructure failures, as opposed to bad model output.
    pub fn is_transport(&self) -> bool {
        matches!(self, LlmError::Transport(_) | LlmError::RateLimit { .. })
    }
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPool {
    models: Vec<String>,
}

impl ModelPool {
    pub fn new<S: Into<String>>(models: impl IntoIterator<Item = S>) -> Result<Self, LlmError> {
        let models: Vec<String> = models.into_iter().map(Into::into).collect();
        if models.is_empty() {
            return Err(LlmError::EmptyPool);
        }
        Ok(Self { models })
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        &self.models[rng.random_range(0..self.models.len())]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 5, base_delay_ms: 500, max_delay_ms: 30_000 }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let ms = self.base_delay_ms.saturating_mul(1u64 << attempt.min(20)).min(self.max_delay_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Default)]
struct Counters {
    calls: AtomicU64,
    retries: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub calls: u64,
    pub retries: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

pub struct Gateway {
    chat: Arc<dyn ChatBackend>,
    embedder: Arc<dyn Embedder>,
    pool: ModelPool,
    retry: RetryPolicy,
    templates: TemplateSet,
    counters: Counters,
}

impl Gateway {
    pub fn new(chat: Arc<dyn ChatBackend>, embedder: Arc<dyn Embedder>, pool: ModelPool) -> Self {
        Self {
            chat,
            embedder,
            pool,
            retry: RetryPolicy::default(),
            templates: TemplateSet::builtin(),
            counters: Counters::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn pool(&self) -> &ModelPool {
        &self.pool
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedder.dim()
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            calls: self.counters.calls.load(Ordering::Relaxed),
            retries: self.counters.retries.load(Ordering::Relaxed),
            prompt_tokens: self.counters.prompt_tokens.load(Ordering::Relaxed),
            completion_tokens: self.counters.completion_tokens.load(Ordering::Relaxed),
        }
    }

    pub fn render(
        &self,
        template_id: &str,
        bindings: &std::collections::BTreeMap<String, String>,
    ) -> Result<Vec<Message>, LlmError> {
        Ok(self.templates.render(template_id, bindings)?)
    }

    /// Sends `messages` to a model drawn from the pool with the worker's rng.
    /// The worker's call counter advances once per call, retries included
    /// in the same call.
    pub fn complete(
        &self,
        worker: &mut Worker,
        template_id: &str,
        messages: Vec<Message>,
        temperature: f64,
    ) -> Result<ChatExchange, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::EmptyMessages);
        }
        let model = self.pool.pick(&mut worker.rng).to_string();
        let request = ChatRequest {
            template_id: template_id.to_string(),
            messages,
            temperature,
            model,
            stream: Some(worker.label.clone()),
            seq: worker.llm_calls,
        };
        worker.llm_calls += 1;
        self.counters.calls.fetch_add(1, Ordering::Relaxed);
        let mut attempt = 0;
        let response = loop {
            match self.chat.chat(&request) {
                Ok(r) => break r,
                Err(BackendError::RateLimited) => {
                    if attempt >= self.retry.max_retries {
                        return Err(LlmError::RateLimit { attempts: attempt + 1 });
                    }
                    self.counters.retries.fetch_add(1, Ordering::Relaxed);
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                Err(BackendError::Protocol(m)) => return Err(LlmError::Protocol(m)),
                Err(BackendError::Transport(m)) => return Err(LlmError::Transport(m)),
            }
        };
        self.counters.prompt_tokens.fetch_add(response.usage.prompt_tokens, Ordering::Relaxed);
        self.counters.completion_tokens.fetch_add(response.usage.completion_tokens, Ordering::Relaxed);
        Ok(ChatExchange {
            messages: request.messages,
            temperature,
            model: request.model,
            response: response.text,
            token_usage: response.usage,
        })
    }

    /// Renders a template and completes it.
    pub fn complete_template(
        &self,
        worker: &mut Worker,
        template_id: &str,
        bindings: &std::collections::BTreeMap<String, String>,
        temperature: f64,
    ) -> Result<ChatExchange, LlmError> {
        let messages = self.render(template_id, bindings)?;
        self.complete(worker, template_id, messages, temperature)
    }

    pub fn embed(&self, text: &str) -> Result<Embedding, LlmError> {
        if text.trim().is_empty() {
            return Err(LlmError::EmptyText);
        }
        let mut attempt = 0;
        loop {
            match self.embedder.embed(text) {
                Ok(v) => return Ok(Embedding::new(v)?),
                Err(BackendError::RateLimited) if attempt < self.retry.max_retries => {
                    self.counters.retries.fetch_add(1, Ordering::Relaxed);
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                Err(BackendError::RateLimited) => return Err(LlmError::RateLimit { attempts: attempt + 1 }),
                Err(BackendError::Protocol(m)) => return Err(LlmError::Protocol(m)),
                Err(BackendError::Transport(m)) => return Err(LlmError::Transport(m)),
            }
        }
    }
}

/// Stable digest of a chat prompt: template id, messages and temperature.
pub fn prompt_digest(template_id: &str, messages: &[Message], temperature: f64) -> String {
    use sha2::{Digest, Sha256};
    let canonical = serde_json::json!({
        "template_id": template_id,
        "messages": messages,
        "temperature": temperature,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

#[cfg(test)]
mod tests;
