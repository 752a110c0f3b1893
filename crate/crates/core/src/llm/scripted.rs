//! A rule-driven chat backend for offline fixtures. Each rule matches on the
//! template id and substrings of the final user message (the part of the
//! prompt that varies; earlier messages hold the fixed in-context examples).
//! The first matching rule answers.

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, Role, TokenUsage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default)]
    pub template_id: Option<String>,
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub not_contains: Vec<String>,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedChat {
    #[serde(default, rename = "rule")]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub fallback: Option<String>,
}

impl ScriptedChat {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn on(mut self, template_id: &str, contains: &[&str], response: impl Into<String>) -> Self {
        self.rules.push(ScriptRule {
            template_id: Some(template_id.to_string()),
            contains: contains.iter().map(|s| s.to_string()).collect(),
            not_contains: Vec::new(),
            response: response.into(),
        });
        self
    }

    /// Like [`on`](Self::on) but also requires none of `absent` to occur.
    pub fn on_without(mut self, template_id: &str, contains: &[&str], absent: &[&str], response: impl Into<String>) -> Self {
        self.rules.push(ScriptRule {
            template_id: Some(template_id.to_string()),
            contains: contains.iter().map(|s| s.to_string()).collect(),
            not_contains: absent.iter().map(|s| s.to_string()).collect(),
            response: response.into(),
        });
        self
    }

    pub fn otherwise(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(response.into());
        self
    }
}

impl ChatBackend for ScriptedChat {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let query = req.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str()).unwrap_or("");
        let hit = self.rules.iter().find(|r| {
            r.template_id.as_deref().is_none_or(|t| t == req.template_id)
                && r.contains.iter().all(|s| query.contains(s.as_str()))
                && !r.not_contains.iter().any(|s| query.contains(s.as_str()))
        });
        let text = match (hit, &self.fallback) {
            (Some(r), _) => r.response.clone(),
            (None, Some(f)) => f.clone(),
            (None, None) => {
                return Err(BackendError::Protocol(format!("no scripted response for template `{}`", req.template_id)))
            }
        };
        let usage = TokenUsage {
            prompt_tokens: req.messages.iter().map(|m| m.content.len() as u64 / 4).sum(),
            completion_tokens: text.len() as u64 / 4,
        };
        Ok(ChatResponse { text, usage })
    }
}
