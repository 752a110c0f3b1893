//! Prompt templates: plain text with `<<<system>>>`, `<<<user>>>` and
//! `<<<assistant>>>` section markers and `{{placeholder}}` slots.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use super::{Message, Role};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    Unknown(String),
    #[error("template `{template}` is missing bindings for: {}", missing.join(", "))]
    MissingBindings { template: String, missing: Vec<String> },
    #[error("template `{0}` has no sections")]
    Empty(String),
    #[error("template `{template}`: {message}")]
    Io { template: String, message: String },
}

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}").unwrap());
static SECTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^<<<(system|user|assistant)>>>[ \t]*\r?\n?").unwrap());

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub id: String,
    sections: Vec<(Role, String)>,
}

impl Template {
    pub fn parse(id: &str, text: &str) -> Result<Template, TemplateError> {
        let marks: Vec<_> = SECTION.captures_iter(text).collect();
        let mut sections = Vec::new();
        for (i, cap) in marks.iter().enumerate() {
            let whole = cap.get(0).expect("match");
            let end = marks.get(i + 1).map(|n| n.get(0).expect("match").start()).unwrap_or(text.len());
            let role = match &cap[1] {
                "system" => Role::System,
                "assistant" => Role::Assistant,
                _ => Role::User,
            };
            sections.push((role, text[whole.end()..end].trim_end().to_string()));
        }
        if sections.is_empty() {
            // A bare file is a single user message.
            if text.trim().is_empty() {
                return Err(TemplateError::Empty(id.to_string()));
            }
            sections.push((Role::User, text.trim_end().to_string()));
        }
        Ok(Template { id: id.to_string(), sections })
    }

    pub fn placeholders(&self) -> BTreeSet<String> {
        self.sections
            .iter()
            .flat_map(|(_, t)| PLACEHOLDER.captures_iter(t).map(|c| c[1].to_string()))
            .collect()
    }

    /// Substitutes every placeholder in one pass; bound values are inserted
    /// verbatim even if they contain `{{...}}` themselves.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<Vec<Message>, TemplateError> {
        let missing: Vec<String> = self.placeholders().into_iter().filter(|k| !bindings.contains_key(k)).collect();
        if !missing.is_empty() {
            return Err(TemplateError::MissingBindings { template: self.id.clone(), missing });
        }
        Ok(self
            .sections
            .iter()
            .map(|(role, text)| {
                let content = PLACEHOLDER.replace_all(text, |c: &regex::Captures| bindings[&c[1]].clone());
                Message::new(*role, content.into_owned())
            })
            .collect())
    }
}

pub const BUILTIN_TEMPLATE_IDS: [&str; 7] = [
    "decomposer",
    "formalizer",
    "request_solver",
    "dir_extend_dimensions",
    "dir_identify_key_concepts",
    "dir_parameterize",
    "dir_scale_complexity",
];

const BUILTIN: [(&str, &str); 7] = [
    ("decomposer", include_str!("../../templates/decomposer.tmpl")),
    ("formalizer", include_str!("../../templates/formalizer.tmpl")),
    ("request_solver", include_str!("../../templates/request_solver.tmpl")),
    ("dir_extend_dimensions", include_str!("../../templates/dir_extend_dimensions.tmpl")),
    ("dir_identify_key_concepts", include_str!("../../templates/dir_identify_key_concepts.tmpl")),
    ("dir_parameterize", include_str!("../../templates/dir_parameterize.tmpl")),
    ("dir_scale_complexity", include_str!("../../templates/dir_scale_complexity.tmpl")),
];

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: HashMap<String, Template>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(id, text)| (id.to_string(), Template::parse(id, text).expect("built-in template parses")))
            .collect();
        Self { templates }
    }

    /// Built-ins overridden by any `<id>.tmpl` file in `dir`.
    pub fn with_overrides(dir: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let dir = dir.as_ref();
        let mut set = Self::builtin();
        let entries = std::fs::read_dir(dir)
            .map_err(|e| TemplateError::Io { template: dir.display().to_string(), message: e.to_string() })?;
        for entry in entries {
            let path = entry.map_err(|e| TemplateError::Io { template: dir.display().to_string(), message: e.to_string() })?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("tmpl") {
                continue;
            }
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let text = std::fs::read_to_string(&path)
                .map_err(|e| TemplateError::Io { template: id.clone(), message: e.to_string() })?;
            set.templates.insert(id.clone(), Template::parse(&id, &text)?);
        }
        Ok(set)
    }

    pub fn get(&self, id: &str) -> Result<&Template, TemplateError> {
        self.templates.get(id).ok_or_else(|| TemplateError::Unknown(id.to_string()))
    }

    pub fn render(&self, id: &str, bindings: &BTreeMap<String, String>) -> Result<Vec<Message>, TemplateError> {
        self.get(id)?.render(bindings)
    }
}
